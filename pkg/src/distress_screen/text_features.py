"""Transcript loading, token preprocessing and 768-dim text embeddings.

Real contextual embeddings are computed elsewhere and ingested with
:func:`load_embedding_csv`; :func:`stub_embed` is a deterministic,
dependency-free stand-in used by tests and the service when only raw
text is available.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, DuplicateIdError, MissingColumnError

EMBEDDING_DIM = 768

# Classic 127-word English stopword list (NLTK's original corpus).
STOPWORDS = frozenset(
    """
    i me my myself we our ours ourselves you your yours yourself yourselves
    he him his himself she her hers herself it its itself they them their
    theirs themselves what which who whom this that these those am is are
    was were be been being have has had having do does did doing a an the
    and but if or because as until while of at by for with about against
    between into through during before after above below to from up down in
    out on off over under again further then once here there when where why
    how all any both each few more most other some such no nor not only own
    same so than too very s t can will just don should now
    """.split()
)

# Ordered suffix rules; the first match whose result keeps >= MIN_STEM letters wins.
SUFFIX_RULES = (
    ("ies", "y"),
    ("nning", "n"),
    ("ing", ""),
    ("ed", ""),
    ("es", ""),
    ("s", ""),
)
MIN_STEM = 3

_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Utterance:
    start_time: float
    stop_time: float
    speaker: str
    text: str


@dataclass(frozen=True)
class Transcript:
    utterances: tuple

    @property
    def text(self) -> str:
        return " ".join(u.text for u in self.utterances)


REQUIRED_COLUMNS = ("start_time", "stop_time", "speaker", "value")


def load_transcript(path, speaker: str = "Participant") -> Transcript:
    """Parse a tab- or comma-delimited transcript, keeping ``speaker`` rows.

    Speaker matching is case-insensitive. Rows come back sorted by start time.
    """
    content = Path(path).read_text(encoding="utf-8-sig")
    header_line = content.split("\n", 1)[0]
    delimiter = "\t" if "\t" in header_line else ","
    reader = csv.DictReader(io.StringIO(content), delimiter=delimiter)
    fields = [f.strip() for f in (reader.fieldnames or [])]
    missing = [c for c in REQUIRED_COLUMNS if c not in fields]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {', '.join(missing)}")
    reader.fieldnames = fields

    wanted = speaker.lower()
    rows = []
    for line_no, row in enumerate(reader, start=2):
        try:
            start = float(row["start_time"])
            stop = float(row["stop_time"])
        except (TypeError, ValueError):
            raise DataError(f"{path}:{line_no}: unparseable time field") from None
        if start > stop:
            raise DataError(f"{path}:{line_no}: start_time {start} after stop_time {stop}")
        if (row["speaker"] or "").strip().lower() != wanted:
            continue
        rows.append(Utterance(start, stop, row["speaker"].strip(), row["value"] or ""))
    rows.sort(key=lambda u: u.start_time)
    return Transcript(tuple(rows))


def _strip_once(token: str) -> str:
    for suffix, replacement in SUFFIX_RULES:
        if token.endswith(suffix):
            if suffix == "s" and token.endswith("ss"):
                return token
            stem = token[: -len(suffix)] + replacement
            if len(stem) >= MIN_STEM:
                return stem
    return token


def lemmatize(token: str) -> str:
    """Apply the suffix rules until the token stops changing."""
    while True:
        nxt = _strip_once(token)
        if nxt == token:
            return token
        token = nxt


def preprocess_text(raw: str) -> list:
    tokens = []
    for tok in _SPLIT.split(raw.lower()):
        if not tok or tok in STOPWORDS:
            continue
        lemma = lemmatize(tok)
        if lemma and lemma not in STOPWORDS:
            tokens.append(lemma)
    return tokens


def load_embedding_csv(path) -> dict:
    """Read ``id,e0..e767`` rows into {id: float64 vector}."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty embedding file")
        expected = ["id"] + [f"e{i}" for i in range(EMBEDDING_DIM)]
        if [h.strip() for h in header] != expected:
            raise MissingColumnError(f"{path}: header must be id,e0..e{EMBEDDING_DIM - 1}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            ident, values = row[0], row[1:]
            if len(values) != EMBEDDING_DIM:
                raise DimensionError(
                    f"{path}:{line_no} (id {ident!r}): {len(values)} values, expected {EMBEDDING_DIM}"
                )
            if ident in out:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate id {ident!r}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise DataError(f"{path}:{line_no} (id {ident!r}): non-numeric cell") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{line_no} (id {ident!r}): non-finite value")
            out[ident] = vec
    return out


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


@lru_cache(maxsize=65536)
def token_vector(token: str) -> np.ndarray:
    """Fixed unit vector for one token, seeded by its FNV-1a hash.

    Uses integer-only splitmix64 and a sequential sum so the bits do not
    depend on platform RNG or BLAS behaviour.
    """
    gen = _splitmix64(fnv1a_64(token.encode("utf-8")))
    vals = [((next(gen) >> 11) * (2.0**-53)) * 2.0 - 1.0 for _ in range(EMBEDDING_DIM)]
    norm = math.sqrt(math.fsum(v * v for v in vals))
    vec = np.array([v / norm for v in vals])
    vec.flags.writeable = False
    return vec


def stub_embed(tokens) -> np.ndarray:
    """Mean of per-token unit vectors (zeros for no tokens).

    Tokens are summed in sorted order, which makes the result exactly
    invariant to token order.
    """
    tokens = sorted(tokens)
    if not tokens:
        return np.zeros(EMBEDDING_DIM)
    acc = np.zeros(EMBEDDING_DIM)
    for tok in tokens:
        acc = acc + token_vector(tok)
    return acc / len(tokens)


def embed_transcript(transcript: Transcript) -> np.ndarray:
    return stub_embed(preprocess_text(transcript.text))
