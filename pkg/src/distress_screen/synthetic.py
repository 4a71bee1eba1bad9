"""Synthetic audio/text feature sets with labels from a fixed linear rule.

Used by tests and the CLI demo in place of the access-restricted clinical corpus.
"""

from __future__ import annotations

import numpy as np

from .fusion_model import AUDIO_DIM, TEXT_DIM, SampleRecord


def linear_rule(seed: int, audio_dim: int = AUDIO_DIM, text_dim: int = TEXT_DIM):
    """Unit directions (u_audio, u_text) defining label = [u_audio.a + u_text.t > 0]."""
    rng = np.random.default_rng([seed, 1])
    u_a = rng.standard_normal(audio_dim)
    u_t = rng.standard_normal(text_dim)
    return u_a / np.linalg.norm(u_a), u_t / np.linalg.norm(u_t)


def make_synthetic_records(
    n: int = 600,
    seed: int = 7,
    signal: float = 3.0,
    audio_dim: int = AUDIO_DIM,
    text_dim: int = TEXT_DIM,
):
    """Gaussian features shifted along the rule directions by a latent margin.

    Each sample draws a latent s with |s| in [0.5, 2], adds ``signal * s`` along
    both rule directions on top of unit Gaussian noise, then labels it with
    the linear rule evaluated on the final features.
    """
    u_a, u_t = linear_rule(seed, audio_dim, text_dim)
    rng = np.random.default_rng([seed, 2])
    s = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
    audio = rng.standard_normal((n, audio_dim)) + signal * s[:, None] * u_a
    text = rng.standard_normal((n, text_dim)) + signal * s[:, None] * u_t
    labels = ((audio @ u_a + text @ u_t) > 0).astype(int)
    return [
        SampleRecord(f"s{i:04d}", audio[i], text[i], int(labels[i])) for i in range(n)
    ]
