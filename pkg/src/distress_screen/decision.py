"""Threshold rule turning a disorder score into an intervention decision."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DEFAULT_THRESHOLD = 0.5


class DecisionKind(str, enum.Enum):
    EARLY_INTERVENTION = "early_intervention"
    REGULAR_MONITORING = "regular_monitoring"


@dataclass(frozen=True)
class DecisionOutcome:
    kind: DecisionKind
    score: float
    threshold: float
    task_tag: str | None = None


def _check_unit(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


def classify_score(score: float, threshold: float = DEFAULT_THRESHOLD, task_tag=None) -> DecisionOutcome:
    """Early intervention iff score is strictly greater than threshold."""
    score, threshold = float(score), float(threshold)
    _check_unit("score", score)
    _check_unit("threshold", threshold)
    kind = DecisionKind.EARLY_INTERVENTION if score > threshold else DecisionKind.REGULAR_MONITORING
    return DecisionOutcome(kind, score, threshold, task_tag)
