"""Probability calibration: isotonic regression via pool-adjacent-violators,
Platt sigmoid scaling, and the 5-fold cross-validated calibration wrapper.

The wrapper keeps an ensemble of (base model, calibrator) pairs: the base
model is trained on four folds, the calibrator is fitted on the held-out
fold's scores, and prediction averages the five calibrated probabilities.
Calibration input is each model's natural score: the uncalibrated
probability for forests and boosted trees, the signed margin for SVMs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .errors import ConvergenceError, FitError
from .svm import SvmModel, train_svm_rbf
from .trees import (
    GradientBoostedModel,
    RandomForestModel,
    _sigmoid,
    forest_predict_proba,
    stratified_fold_ids,
    train_forest_fixed,
    train_gbt,
)


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Monotone least-squares fit, applied with linear interpolation."""

    x: tuple[float, ...]  # strictly increasing breakpoint scores
    v: tuple[float, ...]  # non-decreasing fitted values in [0, 1]

    def __post_init__(self):
        if len(self.x) != len(self.v) or not self.x:
            raise FitError("isotonic calibrator needs aligned, non-empty breakpoints")

    def apply(self, score):
        """Interpolate linearly; clamp to the end values outside [x1, xk]."""
        out = np.interp(np.asarray(score, dtype=np.float64), self.x, self.v)
        return float(out) if np.ndim(score) == 0 else out

    def to_dict(self) -> dict:
        return {"kind": "isotonic", "x": list(self.x), "v": list(self.v)}

    @classmethod
    def from_dict(cls, raw: dict) -> "IsotonicCalibrator":
        return cls(x=tuple(raw["x"]), v=tuple(raw["v"]))


def pav(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators for a non-decreasing fit."""
    blocks = []  # [weight, weighted_sum, run_length]
    for v, w in zip(values, weights):
        blocks.append([w, w * v, 1])
        while len(blocks) > 1 and (
            blocks[-2][1] * blocks[-1][0] > blocks[-1][1] * blocks[-2][0]
        ):
            w2, s2, k2 = blocks.pop()
            blocks[-1][0] += w2
            blocks[-1][1] += s2
            blocks[-1][2] += k2
    out = np.empty(len(values))
    pos = 0
    for w, s, k in blocks:
        out[pos : pos + k] = s / w
        pos += k
    return out


def fit_isotonic(scores, labels) -> IsotonicCalibrator:
    """PAV over labels ordered by score; tied scores pre-pooled by averaging."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be aligned 1-d vectors")
    if len(s) == 0:
        raise ValueError("cannot fit isotonic regression on empty input")
    order = np.argsort(s, kind="stable")
    s, y = s[order], y[order]
    ux, start = np.unique(s, return_index=True)
    counts = np.diff(np.append(start, len(s)))
    sums = np.add.reduceat(y, start)
    fitted = pav(sums / counts, counts.astype(np.float64))
    return IsotonicCalibrator(x=tuple(float(v) for v in ux), v=tuple(float(v) for v in fitted))


def apply_isotonic(cal: IsotonicCalibrator, score):
    return cal.apply(score)


@dataclass(frozen=True)
class PlattCalibrator:
    """p = 1 / (1 + exp(A * score + B)); A < 0 when larger scores mean risk."""

    A: float
    B: float

    def apply(self, score):
        z = self.A * np.asarray(score, dtype=np.float64) + self.B
        out = _sigmoid(-z)
        return float(out) if np.ndim(score) == 0 else out

    def to_dict(self) -> dict:
        return {"kind": "platt", "A": self.A, "B": self.B}

    @classmethod
    def from_dict(cls, raw: dict) -> "PlattCalibrator":
        return cls(A=float(raw["A"]), B=float(raw["B"]))


def platt_targets(labels: np.ndarray) -> np.ndarray:
    """Smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2)."""
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    return np.where(labels == 1, t_pos, t_neg)


def fit_platt(scores, labels, max_iter: int = 100, tol: float = 1e-8) -> PlattCalibrator:
    """Newton maximum-likelihood fit with backtracking line search.

    Converged when the gradient max-norm falls to tol; running out of
    iterations raises with the iteration count attached.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be aligned 1-d vectors")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0 or n_pos == len(y):
        raise FitError("Platt scaling needs both classes present")
    t = platt_targets(y)

    def nll(a, b):
        z = a * s + b
        # p = sigmoid(-z); log p = -log(1+e^z), log(1-p) = z - log(1+e^z)
        lse = np.logaddexp(0.0, z)
        return float(-(t * (-lse) + (1 - t) * (z - lse)).sum())

    A = 0.0
    B = float(np.log((len(y) - n_pos + 1.0) / (n_pos + 1.0)))
    f = nll(A, B)
    for it in range(max_iter):
        z = A * s + B
        p = _sigmoid(-z)
        d = t - p  # dF/dz
        grad = np.array([np.dot(d, s), d.sum()])
        if np.abs(grad).max() <= tol:
            return PlattCalibrator(A=float(A), B=float(B))
        h = p * (1 - p)
        H = np.array(
            [
                [np.dot(h, s * s) + 1e-12, np.dot(h, s)],
                [np.dot(h, s), h.sum() + 1e-12],
            ]
        )
        step = np.linalg.solve(H, -grad)
        scale = 1.0
        for _ in range(40):
            fa = nll(A + scale * step[0], B + scale * step[1])
            if fa < f + 1e-12:
                break
            scale *= 0.5
        A += scale * step[0]
        B += scale * step[1]
        f = nll(A, B)
    grad_norm = float(np.abs(grad).max())
    raise ConvergenceError(
        f"Platt fit did not converge in {max_iter} iterations "
        f"(gradient norm {grad_norm:.3g})",
        iterations=max_iter,
    )


@dataclass(frozen=True)
class LearnerSpec:
    """Recipe for a base model, reproducible from its kind and parameters."""

    kind: str  # rf | gbt | svm
    params: dict

    def train(self, data: LabeledDataset, seed: int):
        if self.kind == "rf":
            return train_forest_fixed(
                data,
                max_depth=self.params["max_depth"],
                n_estimators=self.params["n_estimators"],
                seed=seed,
            )
        if self.kind == "gbt":
            return train_gbt(
                data,
                max_depth=self.params["max_depth"],
                n_estimators=self.params["n_estimators"],
                learning_rate=self.params["learning_rate"],
                seed=seed,
            )
        if self.kind == "svm":
            return train_svm_rbf(
                data,
                C=self.params.get("C", 1.0),
                gamma=self.params.get("gamma"),
                tol=self.params.get("tol", 1e-3),
                max_passes=self.params.get("max_passes", 200),
            )
        raise ValueError(f"unknown learner kind {self.kind!r}")


def base_score(model, X):
    """Each model's natural calibration input."""
    if isinstance(model, RandomForestModel):
        return forest_predict_proba(model.trees, X)
    if isinstance(model, GradientBoostedModel):
        return _sigmoid(model.decision_scores(X))
    if isinstance(model, SvmModel):
        return model.decision_function(X)
    raise ValueError(f"unsupported base model {type(model).__name__}")


_CALIBRATOR_TYPES = {"isotonic": IsotonicCalibrator, "platt": PlattCalibrator}
_FOLD_SEED_STRIDE = 7919  # keeps fold seeds clear of per-tree seed + index runs


@dataclass
class CalibratedModel:
    """Ensemble of (base model, calibrator) pairs from a k-fold wrapper."""

    spec: LearnerSpec
    method: str
    pairs: list[tuple[object, object]]
    fold_of: np.ndarray
    seed: int

    def predict(self, x) -> np.ndarray | float:
        X = np.asarray(x, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        acc = np.zeros(X.shape[0])
        for model, cal in self.pairs:
            acc += cal.apply(base_score(model, X))
        out = acc / len(self.pairs)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        models = []
        for model, cal in self.pairs:
            models.append({"base": model.to_dict(), "calibrator": cal.to_dict()})
        return {
            "spec": {"kind": self.spec.kind, "params": dict(self.spec.params)},
            "method": self.method,
            "seed": self.seed,
            "fold_of": self.fold_of.tolist(),
            "pairs": models,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CalibratedModel":
        from .trees import DecisionTree  # noqa: F401  (kinds resolved below)

        pairs = []
        for entry in raw["pairs"]:
            base_raw = entry["base"]
            kind = base_raw["kind"]
            if kind == "random_forest":
                base = RandomForestModel.from_dict(base_raw)
            elif kind == "gradient_boosted":
                base = GradientBoostedModel.from_dict(base_raw)
            elif kind == "svm_rbf":
                base = SvmModel.from_dict(base_raw)
            else:
                raise ValueError(f"unknown base model kind {kind!r}")
            cal_raw = entry["calibrator"]
            cal = _CALIBRATOR_TYPES[cal_raw["kind"]].from_dict(cal_raw)
            pairs.append((base, cal))
        return cls(
            spec=LearnerSpec(kind=raw["spec"]["kind"], params=dict(raw["spec"]["params"])),
            method=raw["method"],
            pairs=pairs,
            fold_of=np.asarray(raw["fold_of"], dtype=np.int32),
            seed=int(raw["seed"]),
        )


def _fit_fold_pairs(spec: LearnerSpec, train: LabeledDataset, folds: int, seed: int):
    """Shared fold loop: base models on fold complements plus held-out scores."""
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    y = train.y
    if len(np.unique(y)) < 2:
        raise FitError("calibration wrapper needs both classes present")
    fold_of = stratified_fold_ids(y, folds, seed)
    out = []
    for f in range(folds):
        fit_idx = np.nonzero(fold_of != f)[0]
        cal_idx = np.nonzero(fold_of == f)[0]
        cal_labels = y[cal_idx]
        if len(np.unique(cal_labels)) < 2:
            raise FitError(f"fold {f} lacks a class for calibrator fitting")
        model = spec.train(train.subset(fit_idx), seed=seed + _FOLD_SEED_STRIDE * (f + 1))
        scores = base_score(model, train.X[cal_idx])
        out.append((model, scores, cal_labels))
    return fold_of, out


def fit_calibrated_model(
    spec: LearnerSpec,
    train: LabeledDataset,
    method: str,
    folds: int = 5,
    seed: int = 0,
) -> CalibratedModel:
    if method not in _CALIBRATOR_TYPES:
        raise ValueError(f"method must be isotonic or platt, got {method!r}")
    fold_of, fold_fits = _fit_fold_pairs(spec, train, folds, seed)
    return _assemble(spec, method, fold_of, fold_fits, seed)


def fit_calibrated_pair(
    spec: LearnerSpec, train: LabeledDataset, folds: int = 5, seed: int = 0
) -> dict[str, CalibratedModel]:
    """Both calibration methods from one shared set of fold base models."""
    fold_of, fold_fits = _fit_fold_pairs(spec, train, folds, seed)
    return {
        m: _assemble(spec, m, fold_of, fold_fits, seed) for m in ("isotonic", "platt")
    }


def _assemble(spec, method, fold_of, fold_fits, seed) -> CalibratedModel:
    pairs = []
    for f, (model, scores, labels) in enumerate(fold_fits):
        try:
            if method == "isotonic":
                cal = fit_isotonic(scores, labels)
            else:
                cal = fit_platt(scores, labels)
        except FitError as exc:
            raise FitError(f"fold {f}: {exc}") from exc
        pairs.append((model, cal))
    return CalibratedModel(
        spec=spec, method=method, pairs=pairs, fold_of=fold_of, seed=seed
    )


def predict_calibrated(model: CalibratedModel, x):
    """Mean of the per-pair calibrated probabilities; class is p >= 0.5."""
    return model.predict(x)
