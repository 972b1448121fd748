"""Evaluation metrics: P/R/F2, relative improvement, summary F2, agreement
coefficients and IQR fences.

Undefined values (zero denominators) are ``None``, never 0.
"""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    IdMismatch,
    InsufficientData,
    LengthMismatch,
    OutOfRange,
    OutOfScale,
    ZeroBase,
)
from .model import LabeledSentence, RationaleComponent, extraction_targets


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def f_beta(precision: float | None, recall: float | None, beta: float = 2.0) -> float | None:
    if precision is None or recall is None:
        return None
    b2 = beta * beta
    return _ratio((1 + b2) * precision * recall, b2 * precision + recall)


def f2(precision: float | None, recall: float | None) -> float | None:
    """5PR / (4P + R)."""
    return f_beta(precision, recall, 2.0)


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: Confusion) -> Confusion:
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def precision(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f2(self) -> float | None:
        return f2(self.precision, self.recall)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f2": self.f2,
        }


@dataclass(frozen=True)
class ClassificationReport:
    per_component: dict[RationaleComponent, Confusion]
    overall: Confusion

    def to_dict(self) -> dict:
        return {
            "per_component": {c.value: m.to_dict() for c, m in self.per_component.items()},
            "overall": self.overall.to_dict(),
        }


def classification_report(
    predicted: Sequence[LabeledSentence],
    gold: Sequence[LabeledSentence],
    components: Iterable[RationaleComponent] | None = None,
) -> ClassificationReport:
    """Per-component confusion over all sentences, micro-pooled overall."""
    comps = list(components) if components is not None else extraction_targets()
    pred = {ls.sentence.key: ls.labels for ls in predicted}
    ref = {ls.sentence.key: ls.labels for ls in gold}
    if len(pred) != len(predicted) or len(ref) != len(gold):
        raise IdMismatch("duplicate sentence ids")
    if pred.keys() != ref.keys():
        missing = sorted(ref.keys() - pred.keys())[:3]
        extra = sorted(pred.keys() - ref.keys())[:3]
        raise IdMismatch(f"sentence universes differ (missing {missing}, extra {extra})")
    per: dict[RationaleComponent, Confusion] = {}
    for c in comps:
        tp = fp = fn = tn = 0
        for key, gold_labels in ref.items():
            p, g = c in pred[key], c in gold_labels
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
        per[c] = Confusion(tp, fp, fn, tn)
    overall = sum(per.values(), Confusion())
    return ClassificationReport(per, overall)


def relative_improvement(new: float, base: float) -> float:
    if base == 0:
        raise ZeroBase("relative improvement needs a non-zero base")
    return (new - base) / base


def summary_f2_raw(ic: float, ei: float) -> float:
    """IC-weighted F2 without rounding (IC takes the recall slot)."""
    for name, v in (("ic", ic), ("ei", ei)):
        if not 1 <= v <= 5:
            raise OutOfRange(f"{name}={v} outside the 1..5 rating scale")
    return 5 * ei * ic / (4 * ei + ic)


def summary_f2(ic: float, ei: float) -> float:
    """IC/EI F2 rounded to one decimal, as reported in result tables."""
    return round(summary_f2_raw(ic, ei), 1)


@dataclass(frozen=True)
class SummaryQualityScore:
    ic: float
    ei: float

    @property
    def f2(self) -> float:
        return summary_f2_raw(self.ic, self.ei)


def _check_pair(a: Sequence, b: Sequence, min_len: int = 1) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"rater sequences differ in length: {len(a)} vs {len(b)}")
    if len(a) < min_len:
        raise LengthMismatch(f"need at least {min_len} paired ratings")


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float | None:
    _check_pair(a, b, 2)
    n = len(a)
    po = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    pe = sum(ca[k] * cb[k] for k in ca.keys() | cb.keys()) / (n * n)
    if pe == 1:
        return 1.0 if po == 1 else None
    return (po - pe) / (1 - pe)


def weighted_kappa(a: Sequence[int], b: Sequence[int], scale_size: int, weighting: str = "quadratic") -> float | None:
    """Weighted kappa on an ordinal 1..scale_size scale."""
    _check_pair(a, b, 1)
    if scale_size < 2:
        raise OutOfScale("scale needs at least two points")
    for v in (*a, *b):
        if not (isinstance(v, (int, np.integer)) and 1 <= v <= scale_size):
            raise OutOfScale(f"rating {v!r} outside 1..{scale_size}")
    k = scale_size
    idx = np.arange(k)
    if weighting == "quadratic":
        w = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    elif weighting == "linear":
        w = np.abs(idx[:, None] - idx[None, :]) / (k - 1)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    obs = np.zeros((k, k))
    for x, y in zip(a, b):
        obs[x - 1, y - 1] += 1
    obs /= len(a)
    exp = np.outer(obs.sum(axis=1), obs.sum(axis=0))
    num, den = float((w * obs).sum()), float((w * exp).sum())
    if den == 0:
        return 1.0 if num == 0 else None
    return 1 - num / den


def krippendorff_alpha(ratings: Sequence[Sequence[Hashable | None]], level: str = "nominal") -> float:
    """Nominal alpha from a units x raters matrix; ``None`` marks a missing cell."""
    if level != "nominal":
        raise ValueError("only nominal level is supported")
    units = [[v for v in row if v is not None] for row in ratings]
    pairable = [u for u in units if len(u) >= 2]
    if len(pairable) < 2:
        raise InsufficientData("need at least two units with two or more ratings")
    values = sorted({v for u in pairable for v in u}, key=repr)
    index = {v: i for i, v in enumerate(values)}
    coinc = np.zeros((len(values), len(values)))
    for u in pairable:
        m = len(u)
        counts = np.zeros(len(values))
        for v in u:
            counts[index[v]] += 1
        coinc += (np.outer(counts, counts) - np.diag(counts)) / (m - 1)
    n_c = coinc.sum(axis=1)
    n = n_c.sum()
    d_o = (coinc.sum() - np.trace(coinc)) / n
    d_e = (n * n - (n_c**2).sum()) / (n * (n - 1))
    if d_e == 0:
        return 1.0
    return float(1 - d_o / d_e)


@dataclass(frozen=True)
class SizeFilterStats:
    q1: float
    q3: float
    k: float
    iqr: float = field(init=False)
    lower_fence: float = field(init=False)
    upper_fence: float = field(init=False)

    def __post_init__(self) -> None:
        iqr = self.q3 - self.q1
        object.__setattr__(self, "iqr", iqr)
        object.__setattr__(self, "lower_fence", self.q1 - self.k * iqr)
        object.__setattr__(self, "upper_fence", self.q3 + self.k * iqr)

    def is_outlier(self, value: float) -> bool:
        return value < self.lower_fence or value > self.upper_fence


def iqr_fences(values: Sequence[float], k: float = 1.5) -> SizeFilterStats:
    """Tukey fences with quartiles by linear interpolation, exclusive convention."""
    if not values:
        raise InsufficientData("iqr_fences needs at least one value")
    if len(values) == 1:
        q1 = q3 = float(values[0])
    else:
        q1, _, q3 = statistics.quantiles(values, n=4, method="exclusive")
    return SizeFilterStats(q1=float(q1), q3=float(q3), k=k)


def merge_reports(reports: Iterable[ClassificationReport]) -> ClassificationReport:
    """Pool per-commit reports by summing their counts."""
    per: dict[RationaleComponent, Confusion] = {}
    for r in reports:
        for c, m in r.per_component.items():
            per[c] = per.get(c, Confusion()) + m
    return ClassificationReport(per, sum(per.values(), Confusion()))
