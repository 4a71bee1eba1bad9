"""On-disk formats: feature tables (CSV) and trained models (checksummed binary).

Model file layout, all integers little-endian::

    offset  size  field
    0       8     magic  b"DSTRMDL\\0"
    8       2     format version (u16)
    10      4     header length H (u32)
    14      H     header, UTF-8 JSON: {"task_tag", "dropout", "layers": [{"name", "shape"}, ...]}
    14+H    4*N   parameters as float32, concatenated in header layer order
    end-8   8     checksum: BLAKE2b-64 of header + payload (u64)
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    DataError,
    DimensionError,
    DuplicateIdError,
    EmptyTableError,
    ManifestError,
    MissingColumnError,
    VersionError,
)
from .fusion_model import DistressModel, LAYERS
from .neural_core import DenseParams, LstmParams

MAGIC = b"DSTRMDL\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_CHECKSUM = struct.Struct("<Q")

FEATURE_WIDTH = {"audio": 193, "text": 768}
FEATURE_PREFIX = {"audio": "f", "text": "e"}


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def model_to_bytes(m: DistressModel) -> bytes:
    params = m.parameters()
    header = {
        "task_tag": m.task_tag,
        "dropout": m.dropout,
        "layers": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in params.values())
    body = header_bytes + payload
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + body + _CHECKSUM.pack(_checksum(body))


def model_from_bytes(raw: bytes) -> DistressModel:
    if len(raw) < _PREFIX.size + _CHECKSUM.size:
        raise ManifestError("model file is truncated")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ManifestError("not a distress model file (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionError(version, FORMAT_VERSION)
    body = raw[_PREFIX.size : -_CHECKSUM.size]
    (stored,) = _CHECKSUM.unpack(raw[-_CHECKSUM.size :])
    if _checksum(body) != stored:
        raise ChecksumError("model checksum mismatch (file corrupted)")
    if header_len > len(body):
        raise ManifestError("header length exceeds file size")
    try:
        header = json.loads(body[:header_len].decode("utf-8"))
        layers = [(entry["name"], tuple(entry["shape"])) for entry in header["layers"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"unreadable model header: {exc}") from None

    payload = body[header_len:]
    n_values = sum(math.prod(shape) for _, shape in layers)
    if 4 * n_values != len(payload):
        raise ManifestError(f"manifest describes {n_values} values but payload holds {len(payload) // 4}")
    expected_names = [f"{layer}.{p}" for layer in LAYERS for p in _layer_fields(layer)]
    if [name for name, _ in layers] != expected_names:
        raise ManifestError("manifest layer names do not match the model layout")

    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    arrays = {}
    pos = 0
    for name, shape in layers:
        size = math.prod(shape)
        arrays[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size

    def lstm(layer):
        return LstmParams(arrays[f"{layer}.W"], arrays[f"{layer}.U"], arrays[f"{layer}.b"])

    def dense(layer):
        return DenseParams(arrays[f"{layer}.W"], arrays[f"{layer}.b"])

    try:
        m = DistressModel(
            text_fwd=lstm("text_fwd"),
            text_bwd=lstm("text_bwd"),
            text_dense=dense("text_dense"),
            audio_lstm=lstm("audio_lstm"),
            audio_dense=dense("audio_dense"),
            head=dense("head"),
            task_tag=header.get("task_tag", "depression"),
            dropout=float(header.get("dropout", 0.3)),
        )
    except KeyError as exc:
        raise ManifestError(f"missing layer {exc}") from None
    _check_shapes(m)
    return m


def _layer_fields(layer: str):
    return ("W", "U", "b") if layer in ("text_fwd", "text_bwd", "audio_lstm") else ("W", "b")


def _check_shapes(m: DistressModel) -> None:
    h = m.text_fwd.hidden_dim
    ok = (
        m.text_fwd.W.shape[0] == 4 * h
        and m.text_bwd.U.shape == (4 * h, h)
        and m.text_fwd.b.shape == (4 * h,)
        and m.audio_lstm.U.shape == (4 * h, h)
        and m.text_dense.W.shape[1] == 2 * h
        and m.audio_dense.W.shape[1] == h
        and m.text_dense.W.shape[0] == m.audio_dense.W.shape[0] == m.head.W.shape[1]
        and m.head.W.shape[0] == 1
    )
    if not ok:
        raise ManifestError("inconsistent layer shapes in model manifest")


def save_model(m: DistressModel, path) -> None:
    atomic_write_bytes(path, model_to_bytes(m))


def load_model(path) -> DistressModel:
    return model_from_bytes(Path(path).read_bytes())


# -- feature tables --------------------------------------------------------


@dataclass
class FeatureTable:
    kind: str  # "audio" | "text"
    ids: list
    values: np.ndarray  # [N, width]
    labels: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.ids), -1)
        width = FEATURE_WIDTH[self.kind]
        if self.values.shape[1] != width:
            raise DimensionError(f"{self.kind} table needs width {width}, got {self.values.shape[1]}")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateIdError("feature table ids are not unique")
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise DimensionError("labels and ids differ in length")

    def as_dict(self) -> dict:
        return {i: self.values[k] for k, i in enumerate(self.ids)}

    def label_dict(self) -> dict:
        return {} if self.labels is None else dict(zip(self.ids, self.labels))


def write_feature_csv(table: FeatureTable, path) -> None:
    prefix = FEATURE_PREFIX[table.kind]
    header = ["id"] + (["label"] if table.labels is not None else [])
    header += [f"{prefix}{i}" for i in range(table.values.shape[1])]
    lines = [",".join(header)]
    for k in sorted(range(len(table.ids)), key=lambda k: str(table.ids[k])):
        cells = [str(table.ids[k])]
        if table.labels is not None:
            cells.append(str(int(table.labels[k])))
        cells.extend(format(float(v), ".9g") for v in table.values[k])
        lines.append(",".join(cells))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_feature_csv(path, kind: str | None = None) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise EmptyTableError(f"{path}: empty feature file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "id":
        raise MissingColumnError(f"{path}: first column must be 'id'")
    has_label = len(header) > 1 and header[1] == "label"
    feature_cols = header[2:] if has_label else header[1:]
    if kind is None:
        kind = "text" if feature_cols and feature_cols[0].startswith("e") else "audio"
    width = FEATURE_WIDTH[kind]
    prefix = FEATURE_PREFIX[kind]
    if feature_cols != [f"{prefix}{i}" for i in range(len(feature_cols))] or len(feature_cols) != width:
        raise DimensionError(
            f"{path}: {kind} table needs columns {prefix}0..{prefix}{width - 1}, "
            f"header has {len(feature_cols)} feature columns"
        )
    if len(rows) == 1:
        raise EmptyTableError(f"{path}: no data rows")

    n_cols = len(header)
    ids, labels, values = [], [], []
    seen = set()
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise DimensionError(f"{path}:{line_no}: {len(row)} columns, expected {n_cols}")
        ident = row[0]
        if ident in seen:
            raise DuplicateIdError(f"{path}:{line_no}: duplicate id {ident!r}")
        seen.add(ident)
        try:
            if has_label:
                labels.append(_parse_label(row[1]))
            values.append([float(v) for v in row[n_cols - width :]])
        except ValueError:
            raise DataError(f"{path}:{line_no}: non-numeric cell") from None
        ids.append(ident)
    return FeatureTable(kind, ids, np.array(values), labels if has_label else None)


def _parse_label(cell: str) -> int:
    v = float(cell)
    if v not in (0.0, 1.0):
        raise ValueError(cell)
    return int(v)


def read_labels_csv(path) -> dict:
    """Read ``id,label`` rows (label 0/1) into a dict."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["id", "label"]:
            raise MissingColumnError(f"{path}: header must start with id,label")
        out = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if row[0] in out:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate id {row[0]!r}")
            try:
                out[row[0]] = _parse_label(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{line_no}: label must be 0 or 1") from None
    if not out:
        raise EmptyTableError(f"{path}: no labels")
    return out
