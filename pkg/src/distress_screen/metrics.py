"""Confusion matrix and precision/recall/F1 report for the binary task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def swapped(self) -> "ConfusionMatrix":
        """The same matrix with class 0 treated as the positive class."""
        return ConfusionMatrix(tn=self.tp, fp=self.fn, fn=self.fp, tp=self.tn)


def confusion(labels, probabilities, threshold: float = 0.5) -> ConfusionMatrix:
    """Count outcomes; a probability counts as class 1 only when strictly above threshold."""
    y = np.asarray(labels).astype(int)
    p = np.asarray(probabilities, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError(f"{y.size} labels but {p.size} predictions")
    pred = p > threshold
    pos = y == 1
    return ConfusionMatrix(
        tn=int(np.sum(~pred & ~pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
        tp=int(np.sum(pred & pos)),
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict  # {0: ClassMetrics, 1: ClassMetrics}
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics
    total: int
    zero_division: bool  # some rate had a zero denominator and was reported as 0.0

    def to_dict(self) -> dict:
        def row(c):
            return {"precision": c.precision, "recall": c.recall, "f1": c.f1, "support": c.support}

        return {
            "classes": {str(k): row(v) for k, v in self.per_class.items()},
            "accuracy": self.accuracy,
            "macro_avg": row(self.macro),
            "weighted_avg": row(self.weighted),
            "total": self.total,
            "zero_division": self.zero_division,
        }

    def format_table(self, digits: int = 2) -> str:
        head = f"{'':>14}{'precision':>11}{'recall':>9}{'f1-score':>10}{'support':>9}"
        fmt = f"{{:>14}}{{:>11.{digits}f}}{{:>9.{digits}f}}{{:>10.{digits}f}}{{:>9d}}"
        lines = [head, ""]
        for k, c in self.per_class.items():
            lines.append(fmt.format(str(k), c.precision, c.recall, c.f1, c.support))
        lines.append("")
        lines.append(f"{'accuracy':>14}{'':>11}{'':>9}{self.accuracy:>10.{digits}f}{self.total:>9d}")
        for name, c in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(fmt.format(name, c.precision, c.recall, c.f1, c.support))
        return "\n".join(lines)


def _ratio(num: int, den: int):
    return (num / den, False) if den else (0.0, True)


def _class_metrics(tp: int, fp: int, fn: int):
    precision, z1 = _ratio(tp, tp + fp)
    recall, z2 = _ratio(tp, tp + fn)
    if precision + recall > 0:
        f1, z3 = 2 * precision * recall / (precision + recall), False
    else:
        f1, z3 = 0.0, True
    return ClassMetrics(precision, recall, f1, tp + fn), z1 or z2 or z3


def metrics_report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total <= 0:
        raise DataError("confusion matrix is empty")
    c1, z1 = _class_metrics(cm.tp, cm.fp, cm.fn)
    c0, z0 = _class_metrics(cm.tn, cm.fn, cm.fp)
    classes = (c0, c1)

    def avg(weights):
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        return ClassMetrics(
            float(sum(wi * c.precision for wi, c in zip(w, classes))),
            float(sum(wi * c.recall for wi, c in zip(w, classes))),
            float(sum(wi * c.f1 for wi, c in zip(w, classes))),
            cm.total,
        )

    return MetricsReport(
        per_class={0: c0, 1: c1},
        accuracy=(cm.tp + cm.tn) / cm.total,
        macro=avg([1, 1]),
        weighted=avg([c0.support, c1.support]),
        total=cm.total,
        zero_division=z0 or z1,
    )
