import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from distress_screen.wav import AudioClip  # noqa: E402

SR = 16000


def sine(freq, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def synthetic_corpus(seed=0):
    """20 clips: sines, noise, silence and amplitude-modulated 'speech-like' tones."""
    rng = np.random.default_rng(seed)
    t = np.arange(SR) / SR
    clips = [sine(f) for f in (100, 150, 220, 330, 440, 660, 880, 1200)]
    clips += [AudioClip(rng.uniform(-a, a, SR), SR) for a in (0.01, 0.1, 0.5, 0.9)]
    clips += [AudioClip(np.zeros(SR), SR), AudioClip(np.zeros(SR // 2), SR)]
    for f0, rate in ((120, 4), (180, 5), (210, 3), (95, 6), (250, 7), (140, 2)):
        env = 0.5 * (1 + np.sin(2 * np.pi * rate * t))
        voiced = sum(np.sin(2 * np.pi * f0 * k * t) / k for k in range(1, 6))
        clips.append(AudioClip(0.3 * env * voiced + 0.01 * rng.standard_normal(SR), SR))
    assert len(clips) == 20
    return clips


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance.py::test_criterion_" in rep.nodeid:
                number = int(rep.nodeid.split("test_criterion_")[1][:2])
                lines.append((number, "PASS" if outcome == "passed" else "FAIL", rep.nodeid))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, outcome, nodeid in sorted(lines):
            terminalreporter.write_line(f"criterion {number:2d}: {outcome}  {nodeid}")
