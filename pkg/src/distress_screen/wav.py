"""Minimal RIFF/WAVE decoder for PCM and IEEE-float payloads."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedWavError, UnsupportedEncodingError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class _Format:
    tag: int
    channels: int
    sample_rate: int
    block_align: int
    bits: int


def _parse_fmt(body: bytes) -> _Format:
    if len(body) < 16:
        raise MalformedWavError("fmt chunk shorter than 16 bytes")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise MalformedWavError("extensible fmt chunk is truncated")
        # first two bytes of the SubFormat GUID carry the real format tag
        (tag,) = struct.unpack("<H", body[24:26])
    if channels == 0 or rate == 0 or block_align == 0:
        raise MalformedWavError("fmt chunk has zero channels, rate or block alignment")
    return _Format(tag, channels, rate, block_align, bits)


def _decode(data: bytes, fmt: _Format) -> np.ndarray:
    width = fmt.bits // 8
    if fmt.bits % 8 or width * fmt.channels != fmt.block_align:
        raise UnsupportedEncodingError(
            f"{fmt.bits}-bit samples with block alignment {fmt.block_align}"
        )
    n_frames = len(data) // fmt.block_align
    data = data[: n_frames * fmt.block_align]

    if fmt.tag == WAVE_FORMAT_IEEE_FLOAT:
        if fmt.bits not in (32, 64):
            raise UnsupportedEncodingError(f"{fmt.bits}-bit float")
        out = np.frombuffer(data, dtype=f"<f{width}").astype(np.float64)
    elif fmt.tag == WAVE_FORMAT_PCM:
        if fmt.bits == 8:
            out = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif fmt.bits == 16:
            out = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
        elif fmt.bits == 24:
            raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
            ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
            ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
            out = ints.astype(np.float64) / float(1 << 23)
        elif fmt.bits == 32:
            out = np.frombuffer(data, dtype="<i4").astype(np.float64) / float(1 << 31)
        else:
            raise UnsupportedEncodingError(f"{fmt.bits}-bit integer PCM")
    else:
        raise UnsupportedEncodingError(f"format tag 0x{fmt.tag:04x}")

    return out.reshape(n_frames, fmt.channels)


def load_wav(path) -> AudioClip:
    """Read a WAV file and return it as a mono float clip in [-1, 1].

    Multi-channel audio is averaged to mono. Raises FileNotFoundError,
    MalformedWavError or UnsupportedEncodingError.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE container")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == b"data":
            data = body
            if fmt is not None:
                break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise MalformedWavError(f"{path}: missing fmt chunk")
    if data is None:
        raise MalformedWavError(f"{path}: missing data chunk")

    frames = _decode(data, fmt)
    samples = frames.mean(axis=1) if fmt.channels > 1 else frames[:, 0]
    return AudioClip(np.ascontiguousarray(samples), fmt.sample_rate)


def write_wav(path, samples, sample_rate: int, bits: int = 16, channels: int = 1) -> None:
    """Write integer PCM (8/16/24/32) or, with ``bits=-32``, 32-bit float WAV.

    ``samples`` is [n] for mono or [n, channels]. Values are clipped to [-1, 1].
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = np.repeat(x[:, None], channels, axis=1)
    channels = x.shape[1]
    x = np.clip(x, -1.0, 1.0)

    if bits == -32:
        tag, width = WAVE_FORMAT_IEEE_FLOAT, 4
        payload = x.astype("<f4").tobytes()
    else:
        tag, width = WAVE_FORMAT_PCM, bits // 8
        if bits == 8:
            payload = np.clip(np.round(x * 128.0 + 128.0), 0, 255).astype(np.uint8).tobytes()
        elif bits == 16:
            payload = np.round(x * 32767.0).astype("<i2").tobytes()
        elif bits == 24:
            ints = np.round(x * (2**23 - 1)).astype(np.int32).reshape(-1)
            b = (ints & 0xFFFFFF).astype("<u4").view(np.uint8).reshape(-1, 4)[:, :3]
            payload = b.tobytes()
        elif bits == 32:
            payload = np.round(x * (2**31 - 1)).astype("<i4").tobytes()
        else:
            raise ValueError(f"unsupported bit depth {bits}")

    block = width * channels
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, width * 8)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
