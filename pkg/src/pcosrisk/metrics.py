"""Calibration and utility metrics: Brier score, expected calibration
error, reliability curves, calibration slope, decision-curve net benefit,
and confusion-matrix summaries. Everything here is a pure function of a
PredictionSet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, FitError


@dataclass(frozen=True)
class PredictionSet:
    """Aligned probability, predicted-class, and true-label vectors."""

    p: np.ndarray
    y: np.ndarray
    yhat: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if p.ndim != 1 or y.shape != p.shape or len(p) < 1:
            raise ValueError("p and y must be aligned non-empty vectors")
        if (p < 0).any() or (p > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        yhat = self.yhat
        if yhat is None:
            yhat = (p >= 0.5).astype(np.int64)
        else:
            yhat = np.asarray(yhat, dtype=np.int64)
            if yhat.shape != p.shape or not np.isin(yhat, (0, 1)).all():
                raise ValueError("yhat must be an aligned 0/1 vector")
        p.setflags(write=False)
        y.setflags(write=False)
        yhat.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "yhat", yhat)

    @property
    def n(self) -> int:
        return len(self.p)

    def subset(self, indices) -> "PredictionSet":
        idx = np.asarray(indices, dtype=np.int64)
        return PredictionSet(p=self.p[idx], y=self.y[idx], yhat=self.yhat[idx])


def brier_score(ps: PredictionSet) -> float:
    """Mean squared difference between probability and outcome."""
    return float(np.mean((ps.p - ps.y) ** 2))


def _bin_index(values: np.ndarray, lo: float, hi: float, m: int) -> np.ndarray:
    """Equal-width bins over [lo, hi]: bin k holds [edge_k, edge_{k+1}),
    with the final bin closed at hi."""
    edges = lo + (hi - lo) * (np.arange(m + 1) / m)
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, m - 1)


def ece(ps: PredictionSet, m: int = 10, mode: str = "confidence") -> float:
    """Bin-weighted mean |accuracy - confidence|.

    confidence mode (the default): confidence is max(p, 1-p), accuracy is
    the predicted-class hit rate, and the bins tile [0.5, 1].
    positive_class mode: confidence is p itself, accuracy is the observed
    positive rate, bins tile [0, 1]. Empty bins contribute nothing.
    """
    if m < 1:
        raise ValueError(f"bin count must be >= 1, got {m}")
    if mode == "confidence":
        conf = np.maximum(ps.p, 1 - ps.p)
        hit = (ps.yhat == ps.y).astype(np.float64)
        lo = 0.5
    elif mode == "positive_class":
        conf = ps.p
        hit = ps.y.astype(np.float64)
        lo = 0.0
    else:
        raise ValueError(f"unknown ECE mode {mode!r}")
    idx = _bin_index(conf, lo, 1.0, m)
    total = 0.0
    for b in range(m):
        mask = idx == b
        size = int(mask.sum())
        if size == 0:
            continue
        total += size / ps.n * abs(hit[mask].mean() - conf[mask].mean())
    return float(total)


@dataclass(frozen=True)
class ReliabilityBin:
    lo: float
    hi: float
    count: int
    mean_predicted: float | None
    positive_rate: float | None
    accuracy: float | None
    confidence: float | None


@dataclass(frozen=True)
class BinnedReliability:
    bins: tuple[ReliabilityBin, ...]
    n: int

    def to_rows(self) -> list[dict]:
        return [
            {
                "bin_lo": b.lo,
                "bin_hi": b.hi,
                "count": b.count,
                "mean_predicted": b.mean_predicted,
                "positive_rate": b.positive_rate,
            }
            for b in self.bins
        ]


def reliability_curve(ps: PredictionSet, m: int = 10) -> BinnedReliability:
    """Per-bin mean predicted probability and observed positive rate over
    equal-width bins of [0, 1]; plot-ready."""
    if m < 1:
        raise ValueError(f"bin count must be >= 1, got {m}")
    idx = _bin_index(ps.p, 0.0, 1.0, m)
    conf = np.maximum(ps.p, 1 - ps.p)
    hit = (ps.yhat == ps.y).astype(np.float64)
    edges = np.arange(m + 1) / m
    bins = []
    for b in range(m):
        mask = idx == b
        size = int(mask.sum())
        if size == 0:
            bins.append(ReliabilityBin(float(edges[b]), float(edges[b + 1]), 0, None, None, None, None))
            continue
        bins.append(
            ReliabilityBin(
                lo=float(edges[b]),
                hi=float(edges[b + 1]),
                count=size,
                mean_predicted=float(ps.p[mask].mean()),
                positive_rate=float(ps.y[mask].mean()),
                accuracy=float(hit[mask].mean()),
                confidence=float(conf[mask].mean()),
            )
        )
    return BinnedReliability(bins=tuple(bins), n=ps.n)


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float


def calibration_slope(ps: PredictionSet, clip: float = 1e-6) -> CalibrationFit:
    """Logistic recalibration of y on logit(p); slope well under 1 flags
    overconfident probabilities."""
    if len(np.unique(ps.y)) < 2:
        raise FitError("calibration slope needs both outcome classes")
    p = np.clip(ps.p, clip, 1 - clip)
    z = np.log(p / (1 - p))
    if np.ptp(z) == 0:
        raise FitError("calibration slope undefined for constant probabilities")
    y = ps.y.astype(np.float64)

    beta = np.zeros(2)  # [intercept, slope]
    for _ in range(100):
        eta = beta[0] + beta[1] * z
        q = 1.0 / (1.0 + np.exp(-eta))
        grad = np.array([np.sum(y - q), np.dot(y - q, z)])
        if np.abs(grad).max() <= 1e-8:
            return CalibrationFit(slope=float(beta[1]), intercept=float(beta[0]))
        w = np.maximum(q * (1 - q), 1e-12)
        H = np.array([[w.sum(), np.dot(w, z)], [np.dot(w, z), np.dot(w, z * z)]])
        beta += np.linalg.solve(H, grad)
    raise ConvergenceError("calibration slope fit did not converge", iterations=100)


@dataclass(frozen=True)
class NetBenefitPoint:
    threshold: float
    tp: int
    fp: int
    n: int
    net_benefit: float


@dataclass(frozen=True)
class DecisionCurve:
    model: tuple[NetBenefitPoint, ...]
    treat_all: tuple[NetBenefitPoint, ...]
    treat_none: tuple[NetBenefitPoint, ...]


DEFAULT_DCA_THRESHOLDS = tuple(float(t) for t in np.arange(1, 100) / 100)


def _net_benefit(tp: int, fp: int, n: int, pt: float) -> float:
    return tp / n - (fp / n) * (pt / (1 - pt))


def decision_curve(ps: PredictionSet, thresholds=None) -> DecisionCurve:
    """Net benefit of acting on p >= threshold, with treat-all and
    treat-none references at the same thresholds."""
    if thresholds is None:
        thresholds = DEFAULT_DCA_THRESHOLDS
    thresholds = tuple(float(t) for t in thresholds)
    for t in thresholds:
        if not 0 < t < 1:
            raise ValueError(f"thresholds must lie strictly inside (0, 1), got {t}")
    n = ps.n
    n_pos = int(ps.y.sum())
    n_neg = n - n_pos
    model, all_pts, none_pts = [], [], []
    for t in thresholds:
        act = ps.p >= t
        tp = int(np.sum(act & (ps.y == 1)))
        fp = int(np.sum(act & (ps.y == 0)))
        model.append(NetBenefitPoint(t, tp, fp, n, _net_benefit(tp, fp, n, t)))
        all_pts.append(NetBenefitPoint(t, n_pos, n_neg, n, _net_benefit(n_pos, n_neg, n, t)))
        none_pts.append(NetBenefitPoint(t, 0, 0, n, 0.0))
    return DecisionCurve(
        model=tuple(model), treat_all=tuple(all_pts), treat_none=tuple(none_pts)
    )


@dataclass(frozen=True)
class ClassificationReport:
    """Accuracy plus positive-class precision/recall; None marks a metric
    with an empty denominator (never NaN)."""

    accuracy: float
    precision: float | None
    recall: float | None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def metric(self, name: str) -> float | None:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ClassificationReport":
        return cls(
            accuracy=raw["accuracy"],
            precision=raw["precision"],
            recall=raw["recall"],
            tp=raw.get("tp", 0),
            fp=raw.get("fp", 0),
            fn=raw.get("fn", 0),
            tn=raw.get("tn", 0),
        )


def classification_report(ps: PredictionSet) -> ClassificationReport:
    tp = int(np.sum((ps.yhat == 1) & (ps.y == 1)))
    fp = int(np.sum((ps.yhat == 1) & (ps.y == 0)))
    fn = int(np.sum((ps.yhat == 0) & (ps.y == 1)))
    tn = int(np.sum((ps.yhat == 0) & (ps.y == 0)))
    acc = (tp + tn) / ps.n
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return ClassificationReport(
        accuracy=float(acc),
        precision=None if precision is None else float(precision),
        recall=None if recall is None else float(recall),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )
