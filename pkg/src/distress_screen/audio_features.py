"""Audio feature extraction: the 193-dimensional per-recording descriptor.

Every spectral feature is computed from one Hann-windowed, centered STFT
(2048-sample frames, 512-sample hop), reduced to a per-file vector by the
arithmetic mean over frames and concatenated in this order::

    mfcc(13) delta(13) delta2(13) chroma(12) mel(128) contrast(7) tonnetz(6) pitch(1)
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import DataError, SampleRateError
from .wav import AudioClip, load_wav

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
FRAME_LENGTH = 2048
HOP_LENGTH = 512
N_MELS = 128
N_MFCC = 13
LOG_FLOOR = 1e-10
DELTA_WIDTH = 9
CONTRAST_FMIN = 200.0
CONTRAST_QUANTILE = 0.02
PITCH_FMIN = 50.0
PITCH_FMAX = 2000.0
VOICING_RMS = 1e-4

SEGMENTS = {
    "mfcc": slice(0, 13),
    "delta_mfcc": slice(13, 26),
    "delta2_mfcc": slice(26, 39),
    "chroma": slice(39, 51),
    "mel": slice(51, 179),
    "contrast": slice(179, 186),
    "tonnetz": slice(186, 192),
    "pitch": slice(192, 193),
}
N_AUDIO_FEATURES = 193


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # [n_bins, n_frames]
    frame_length: int
    hop_length: int
    sample_rate: int

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.frame_length

    @property
    def power(self) -> np.ndarray:
        return self.magnitudes**2


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, frame_length: int, hop_length: int) -> np.ndarray:
    """Reflect-pad by half a frame on each side and slice into [n_frames, frame_length]."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise DataError("empty clip")
    pad = frame_length // 2
    if x.size <= pad:
        raise DataError(
            f"clip of {x.size} samples is shorter than one frame after padding "
            f"(need more than {pad})"
        )
    padded = np.pad(x, pad, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_length)[::hop_length]
    return frames


def _check_frame_params(frame_length: int, hop_length: int) -> None:
    if frame_length < 2 or frame_length & (frame_length - 1):
        raise DataError(f"frame_length must be a power of two, got {frame_length}")
    if not 1 <= hop_length <= frame_length:
        raise DataError(f"hop_length must lie in [1, {frame_length}], got {hop_length}")


def stft_magnitude(
    clip: AudioClip, frame_length: int = FRAME_LENGTH, hop_length: int = HOP_LENGTH
) -> Spectrogram:
    _check_frame_params(frame_length, hop_length)
    frames = frame_signal(clip.samples, frame_length, hop_length)
    spectrum = np.fft.rfft(frames * hann_window(frame_length), axis=1)
    return Spectrogram(np.abs(spectrum).T, frame_length, hop_length, clip.sample_rate)


def frame_rms(clip: AudioClip, frame_length: int = FRAME_LENGTH, hop_length: int = HOP_LENGTH):
    """Per-frame RMS of the unwindowed frames, aligned with stft_magnitude."""
    frames = frame_signal(clip.samples, frame_length, hop_length)
    return np.sqrt(np.mean(frames**2, axis=1))


# -- mel -------------------------------------------------------------------

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = np.log(6.4) / 27.0


def hz_to_mel(hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = hz / _F_SP
    log_region = hz >= _MIN_LOG_HZ
    return np.where(
        log_region,
        _MIN_LOG_MEL + np.log(np.maximum(hz, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP,
        mel,
    )


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = mel * _F_SP
    log_region = mel >= _MIN_LOG_MEL
    return np.where(log_region, _MIN_LOG_HZ * np.exp(_LOGSTEP * (mel - _MIN_LOG_MEL)), hz)


def mel_band_edges(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """n_mels + 2 frequencies; filter i spans edges[i]..edges[i + 2], peaking at edges[i + 1]."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(
    sample_rate: int, frame_length: int, n_mels: int = N_MELS, fmin: float = 0.0, fmax=None
) -> np.ndarray:
    """Area-normalized triangular filters, shape [n_mels, frame_length // 2 + 1]."""
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if n_mels < 1:
        raise DataError(f"n_mels must be >= 1, got {n_mels}")
    if fmax > nyquist:
        raise DataError(f"fmax {fmax} Hz exceeds Nyquist {nyquist} Hz")
    if not 0.0 <= fmin < fmax:
        raise DataError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")

    fft_freqs = np.arange(frame_length // 2 + 1) * sample_rate / frame_length
    edges = mel_band_edges(n_mels, fmin, fmax)
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    rising = -ramps[:-2] / widths[:-1, None]
    falling = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights


def mel_spectrogram(spec: Spectrogram, n_mels: int = N_MELS, fmin: float = 0.0, fmax=None):
    fb = mel_filterbank(spec.sample_rate, spec.frame_length, n_mels, fmin, fmax)
    return fb @ spec.power


def mfcc(mel: np.ndarray, n_coeffs: int = N_MFCC) -> np.ndarray:
    """Orthonormal DCT-II of the dB-scaled mel energies, first n_coeffs rows."""
    log_mel = 10.0 * np.log10(np.asarray(mel, dtype=np.float64) + LOG_FLOOR)
    return scipy.fft.dct(log_mel, type=2, norm="ortho", axis=0)[:n_coeffs]


def delta(track: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Local least-squares slope over ``width`` frames, edges replicate-padded."""
    if width < 3 or width % 2 == 0:
        raise DataError(f"delta width must be odd and >= 3, got {width}")
    track = np.asarray(track, dtype=np.float64)
    if track.ndim != 2 or track.shape[1] < 1:
        raise DataError("delta expects a [d, n_frames] track with n_frames >= 1")
    half = width // 2
    n = track.shape[1]
    padded = np.pad(track, ((0, 0), (half, half)), mode="edge")
    out = np.zeros_like(track)
    for k in range(1, half + 1):
        out += k * (padded[:, half + k : half + k + n] - padded[:, half - k : half - k + n])
    return out / (2.0 * sum(k * k for k in range(1, half + 1)))


# -- pitch-class features --------------------------------------------------


def chroma_classes(frequencies: np.ndarray) -> np.ndarray:
    """Pitch class of each frequency, class 9 = A; -1 for the DC bin."""
    f = np.asarray(frequencies, dtype=np.float64)
    out = np.full(f.shape, -1, dtype=np.int64)
    pos = f > 0
    out[pos] = (np.round(12.0 * np.log2(f[pos] / 440.0)).astype(np.int64) + 9) % 12
    return out


def chroma(spec: Spectrogram) -> np.ndarray:
    classes = chroma_classes(spec.frequencies)
    assign = np.zeros((12, spec.n_bins))
    valid = classes >= 0
    assign[classes[valid], np.flatnonzero(valid)] = 1.0
    raw = assign @ spec.power
    peak = raw.max(axis=0)
    out = np.zeros_like(raw)
    nz = peak > 0
    out[:, nz] = raw[:, nz] / peak[nz]
    return out


def contrast_band_edges(sample_rate: int, n_bands: int = 6, fmin: float = CONTRAST_FMIN):
    """n_bands + 2 edges: [0, fmin, 2 fmin, ...]; the last band is clipped at Nyquist."""
    if n_bands < 1:
        raise DataError(f"n_bands must be >= 1, got {n_bands}")
    edges = np.concatenate([[0.0], fmin * 2.0 ** np.arange(n_bands + 1)])
    nyquist = sample_rate / 2.0
    if np.any(edges[:-1] >= nyquist):
        raise DataError(
            f"spectral contrast band starting at {edges[:-1].max()} Hz exceeds Nyquist {nyquist} Hz"
        )
    return edges


def spectral_contrast(spec: Spectrogram, n_bands: int = 6) -> np.ndarray:
    edges = contrast_band_edges(spec.sample_rate, n_bands)
    freqs = spec.frequencies
    db = 10.0 * np.log10(np.maximum(spec.power, LOG_FLOOR))
    out = np.zeros((n_bands + 1, spec.n_frames))
    for k in range(n_bands + 1):
        if k == n_bands:
            band = freqs >= edges[k]
        else:
            band = (freqs >= edges[k]) & (freqs < edges[k + 1])
        if not band.any():
            raise DataError(f"contrast band {k} contains no FFT bins")
        sub = np.sort(db[band], axis=0)
        q = max(1, int(round(CONTRAST_QUANTILE * sub.shape[0])))
        out[k] = sub[-q:].mean(axis=0) - sub[:q].mean(axis=0)
    return out


def tonnetz_projection() -> np.ndarray:
    """[6, 12] basis: fifths, minor thirds, major thirds as sin/cos pairs."""
    pc = np.arange(12)
    angles = [7 * np.pi / 6, 3 * np.pi / 2, 2 * np.pi / 3]
    radii = [1.0, 1.0, 0.5]
    rows = []
    for r, a in zip(radii, angles):
        rows.append(r * np.sin(pc * a))
        rows.append(r * np.cos(pc * a))
    return np.vstack(rows)


def tonnetz(chroma_track: np.ndarray) -> np.ndarray:
    c = np.asarray(chroma_track, dtype=np.float64)
    total = np.abs(c).sum(axis=0)
    norm = np.zeros_like(c)
    nz = total > 0
    norm[:, nz] = c[:, nz] / total[nz]
    return tonnetz_projection() @ norm


# -- pitch -----------------------------------------------------------------


def _parabolic_peak(mag_column: np.ndarray, k: int) -> float:
    if k <= 0 or k >= mag_column.size - 1:
        return float(k)
    a, b, c = np.log(mag_column[k - 1 : k + 2] + 1e-300)
    denom = a - 2.0 * b + c
    if denom >= 0:
        return float(k)
    return k + 0.5 * (a - c) / denom


def pitch_estimate(spec: Spectrogram, clip_energy: np.ndarray) -> float:
    """Mean dominant frequency in 50-2000 Hz over voiced frames; 0.0 if none voiced.

    ``clip_energy`` is per-frame RMS (see frame_rms). The peak bin is refined
    by a parabola through the log magnitudes of its neighbours.
    """
    freqs = spec.frequencies
    band = np.flatnonzero((freqs >= PITCH_FMIN) & (freqs <= PITCH_FMAX))
    if band.size == 0:
        return 0.0
    bin_hz = spec.sample_rate / spec.frame_length
    estimates = []
    for t in np.flatnonzero(np.asarray(clip_energy) > VOICING_RMS):
        column = spec.magnitudes[:, t]
        if not np.any(column[band] > 0):
            continue
        k = int(band[np.argmax(column[band])])
        estimates.append(_parabolic_peak(column, k) * bin_hz)
    return float(np.mean(estimates)) if estimates else 0.0


# -- assembly --------------------------------------------------------------


def extract_audio_features(clip: AudioClip, expected_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Return the 193-dim feature vector for one clip (see SEGMENTS for the layout)."""
    if expected_rate is not None and clip.sample_rate != expected_rate:
        raise SampleRateError(
            f"sample rate {clip.sample_rate} Hz; expected {expected_rate} Hz (resample first)"
        )
    spec = stft_magnitude(clip)
    mel = mel_spectrogram(spec)
    cepstra = mfcc(mel)
    d1 = delta(cepstra)
    d2 = delta(d1)
    chroma_track = chroma(spec)
    parts = [
        cepstra.mean(axis=1),
        d1.mean(axis=1),
        d2.mean(axis=1),
        chroma_track.mean(axis=1),
        mel.mean(axis=1),
        spectral_contrast(spec).mean(axis=1),
        tonnetz(chroma_track).mean(axis=1),
        [pitch_estimate(spec, frame_rms(clip))],
    ]
    vec = np.concatenate(parts)
    assert vec.shape == (N_AUDIO_FEATURES,)
    if not np.all(np.isfinite(vec)):
        raise DataError("non-finite audio feature (input contains NaN/Inf?)")
    return vec


def _extract_file(path: str):
    return Path(path).stem, extract_audio_features(load_wav(path))


def extract_directory(directory, workers=None) -> dict:
    """Extract features for every *.wav in ``directory`` (sorted by file stem).

    Runs on a process pool of ``workers`` (default: CPU count); returns
    {stem: vector}.
    """
    paths = sorted(str(p) for p in Path(directory).glob("*.wav"))
    if not paths:
        raise DataError(f"no .wav files in {directory}")
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(paths) == 1:
        results = [_extract_file(p) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(paths))) as pool:
            results = list(pool.map(_extract_file, paths))
    log.info("extracted %d audio feature vectors from %s", len(results), directory)
    return dict(results)
