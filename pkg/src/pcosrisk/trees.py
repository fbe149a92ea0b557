"""Tree learners: CART decision trees, bootstrap random forest with
cross-validated grid search, and logistic-loss gradient boosting.

Trees are stored as flat node arrays (feature, threshold, left, right,
per-node training-sample count, node value). Sample counts reflect the
rows actually routed through each node, bootstrap multiplicity included;
downstream attribution relies on them as cover weights.

Determinism contract: a fixed seed produces an identical model no matter
how training is scheduled. Per-tree generators are derived as
``seed + tree_index`` and every tie is broken by (feature index, threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .errors import FitError, ModelError


@dataclass
class DecisionTree:
    """Flat-array binary tree. ``feature[i] == -1`` marks a leaf.

    ``value`` holds the mean training target at each node: the
    positive-class fraction for classification trees, the fitted leaf
    output for boosted regression trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        """Route rows to leaves and return the leaf values."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.predict_value(X[None, :])[0]
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        node = np.zeros(X.shape[0], dtype=np.int32)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            r = rows[active]
            f = feat[active]
            go_left = X[r, f] <= self.threshold[node[active]]
            node[r] = np.where(go_left, self.left[node[active]], self.right[node[active]])
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if not np.isfinite(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "count": self.count.tolist(),
            "value": [float(v) for v in self.value],
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DecisionTree":
        thr = np.array(
            [np.nan if t is None else t for t in raw["threshold"]], dtype=np.float64
        )
        return cls(
            feature=np.asarray(raw["feature"], dtype=np.int32),
            threshold=thr,
            left=np.asarray(raw["left"], dtype=np.int32),
            right=np.asarray(raw["right"], dtype=np.int32),
            count=np.asarray(raw["count"], dtype=np.int64),
            value=np.asarray(raw["value"], dtype=np.float64),
            n_features=int(raw["n_features"]),
        )


def _best_split(Xsub, targets, feats, min_samples_leaf, classification):
    """Vectorized scan over candidate splits of every sampled feature.

    Returns (feature, threshold) or None. Ties in impurity break on the
    lowest feature index, then the lowest threshold; `feats` must be
    sorted ascending for that to hold.
    """
    n = Xsub.shape[0]
    order = np.argsort(Xsub, axis=0, kind="stable")
    svals = np.take_along_axis(Xsub, order, axis=0)
    sy = targets[order]
    cum = np.cumsum(sy, axis=0)
    total = cum[-1]

    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    s_left = cum[:-1]
    s_right = total[None, :] - s_left

    if classification:
        # Sum-form weighted Gini: s(n-s)/n per side, lower is better.
        score = s_left * (n_left - s_left) / n_left + s_right * (n_right - s_right) / n_right
    else:
        # Negated SSE reduction, lower is better.
        score = -(s_left * s_left / n_left + s_right * s_right / n_right)

    valid = svals[1:] > svals[:-1]
    if min_samples_leaf > 1:
        msl_ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        valid = valid & msl_ok
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)

    col_best = score.min(axis=0)
    best = col_best.min()
    col = int(np.argmax(col_best == best))
    pos = int(np.argmax(score[:, col] == best))

    lo, hi = svals[pos, col], svals[pos + 1, col]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # midpoint rounded onto the right value
        threshold = lo
    return int(feats[col]), float(threshold)


def _grow_tree(
    X,
    targets,
    rows,
    max_depth,
    min_samples_leaf,
    n_feats_per_split,
    rng,
    classification=True,
    leaf_num=None,
    leaf_den=None,
):
    """Iterative CART induction over the given row multiset.

    When ``leaf_num``/``leaf_den`` are given, leaf values are
    sum(leaf_num)/sum(leaf_den) over the rows routed to the leaf
    (Newton leaf steps for boosting); otherwise the mean target.
    """
    d = X.shape[1]
    feature, threshold, left, right, count, value = [], [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        count.append(0)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = len(idx)
        tsub = targets[idx]
        count[node] = n
        if leaf_num is None:
            value[node] = float(tsub.mean())
        else:
            den = float(leaf_den[idx].sum())
            value[node] = float(leaf_num[idx].sum() / den) if den > 0 else 0.0

        pure = bool((tsub == tsub[0]).all())
        if depth >= max_depth or pure or n < 2 * min_samples_leaf:
            continue
        if n_feats_per_split < d:
            feats = np.sort(rng.choice(d, size=n_feats_per_split, replace=False))
        else:
            feats = np.arange(d)
        split = _best_split(X[np.ix_(idx, feats)], tsub, feats, min_samples_leaf, classification)
        if split is None:
            continue
        f, t = split
        go_left = X[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        lid, rid = new_node(), new_node()
        left[node], right[node] = lid, rid
        # Push right first so the left subtree is numbered before the right.
        stack.append((rid, idx[~go_left], depth + 1))
        stack.append((lid, idx[go_left], depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        count=np.asarray(count, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_features=d,
    )


def train_decision_tree(
    data: LabeledDataset,
    max_depth: int,
    min_samples_leaf: int = 1,
    feature_subsample=None,
    rng=None,
) -> DecisionTree:
    """Greedy Gini CART on the full dataset (no bootstrap).

    ``feature_subsample`` is an int (features drawn per split) or
    None/"all". Splits use midpoint thresholds between adjacent sorted
    values; a node becomes a leaf when pure, depth-capped, or too small
    to give each child ``min_samples_leaf`` rows.
    """
    if data.n_rows == 0:
        raise ValueError("cannot train a tree on an empty dataset")
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    d = data.n_features
    if feature_subsample in (None, "all"):
        k = d
    else:
        k = int(feature_subsample)
        if not 1 <= k <= d:
            raise ValueError(f"feature_subsample must be in [1, {d}], got {k}")
    if rng is None:
        rng = np.random.default_rng(0)
    rows = np.arange(data.n_rows)
    return _grow_tree(
        data.X, data.y.astype(np.float64), rows, max_depth, min_samples_leaf, k, rng
    )


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    seed: int
    n_features: int
    max_depth: int
    n_estimators: int
    feature_subsample: int
    min_samples_leaf: int = 1

    def to_dict(self) -> dict:
        return {
            "kind": "random_forest",
            "seed": self.seed,
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "n_estimators": self.n_estimators,
            "feature_subsample": self.feature_subsample,
            "min_samples_leaf": self.min_samples_leaf,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RandomForestModel":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in raw["trees"]],
            seed=int(raw["seed"]),
            n_features=int(raw["n_features"]),
            max_depth=int(raw["max_depth"]),
            n_estimators=int(raw["n_estimators"]),
            feature_subsample=int(raw["feature_subsample"]),
            min_samples_leaf=int(raw.get("min_samples_leaf", 1)),
        )


def _bootstrap_forest_trees(X, y, n_trees, max_depth, min_samples_leaf, seed):
    """Per-tree generator seeded seed + index; bootstrap of size N each."""
    n, d = X.shape
    k = max(1, int(math.floor(math.sqrt(d))))
    targets = y.astype(np.float64)
    all_rows = np.arange(n)
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(seed + i)
        rows = rng.integers(0, n, size=n)
        trees.append(
            _grow_tree(X, targets, all_rows[rows], max_depth, min_samples_leaf, k, rng)
        )
    return trees, k


def forest_predict_proba(trees: list[DecisionTree], X: np.ndarray) -> np.ndarray:
    """Soft vote: arithmetic mean of per-tree leaf fractions."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    acc = np.zeros(X.shape[0])
    for t in trees:
        acc += t.predict_value(X)
    out = acc / len(trees)
    return out[0] if single else out


@dataclass
class GridEntry:
    params: dict
    mean_accuracy: float | None
    fold_accuracies: tuple[float, ...]
    error: str | None = None


@dataclass
class CvResult:
    entries: list[GridEntry]
    selected: dict
    folds: int = 5

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "selected": dict(self.selected),
            "entries": [
                {
                    "params": dict(e.params),
                    "mean_accuracy": e.mean_accuracy,
                    "fold_accuracies": list(e.fold_accuracies),
                    **({"error": e.error} if e.error else {}),
                }
                for e in self.entries
            ],
        }


def stratified_fold_ids(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Round-robin deal of each class's shuffled indices into folds."""
    rng = np.random.default_rng(seed)
    out = np.empty(len(y), dtype=np.int32)
    for c in (0, 1):
        idx = np.nonzero(y == c)[0]
        perm = rng.permutation(idx)
        out[perm] = np.arange(len(perm)) % folds
    return out


DEFAULT_RF_GRID = {"max_depth": [4, 6, 8, 10, 12], "n_estimators": [100, 200, 400]}


def _expand_grid(grid) -> list[dict]:
    if isinstance(grid, dict):
        points = [
            {"max_depth": int(d), "n_estimators": int(m)}
            for d in grid["max_depth"]
            for m in grid["n_estimators"]
        ]
    else:
        points = [dict(p) for p in grid]
    if not points:
        raise ValueError("hyperparameter grid is empty")
    return points


def train_random_forest(
    data: LabeledDataset, grid=None, folds: int = 5, seed: int = 0
) -> tuple[RandomForestModel, CvResult]:
    """Grid search by stratified k-fold CV accuracy, then refit the winner.

    Forests sharing a max_depth are evaluated as prefixes of one tree
    sequence per fold (tree i always gets generator seed + i), so the CV
    sweep trains max(n_estimators) trees per (depth, fold) rather than
    one forest per grid point.
    """
    points = _expand_grid(DEFAULT_RF_GRID if grid is None else grid)
    X, y = data.X, data.y
    fold_of = stratified_fold_ids(y, folds, seed)

    depth_groups: dict[int, list[int]] = {}
    for p in points:
        depth_groups.setdefault(p["max_depth"], []).append(p["n_estimators"])

    acc: dict[tuple[int, int], list[float]] = {}
    errors: dict[int, str] = {}
    for depth, n_ests in sorted(depth_groups.items()):
        n_max = max(n_ests)
        try:
            for f in range(folds):
                tr = np.nonzero(fold_of != f)[0]
                va = np.nonzero(fold_of == f)[0]
                trees, _ = _bootstrap_forest_trees(X[tr], y[tr], n_max, depth, 1, seed)
                per_tree = np.stack([t.predict_value(X[va]) for t in trees])
                cum = np.cumsum(per_tree, axis=0)
                for m in sorted(set(n_ests)):
                    proba = cum[m - 1] / m
                    a = float(((proba >= 0.5).astype(int) == y[va]).mean())
                    acc.setdefault((depth, m), []).append(a)
        except Exception as exc:  # record and keep searching
            errors[depth] = f"{type(exc).__name__}: {exc}"

    entries = []
    best_key, best_mean = None, -1.0
    for p in points:
        key = (p["max_depth"], p["n_estimators"])
        if p["max_depth"] in errors:
            entries.append(GridEntry(p, None, (), error=errors[p["max_depth"]]))
            continue
        fold_accs = tuple(acc[key])
        mean = float(np.mean(fold_accs))
        entries.append(GridEntry(p, mean, fold_accs))
        if mean > best_mean:
            best_mean, best_key = mean, key
    if best_key is None:
        raise FitError("every grid point failed cross-validation")

    depth, m = best_key
    trees, k = _bootstrap_forest_trees(X, y, m, depth, 1, seed)
    model = RandomForestModel(
        trees=trees,
        seed=seed,
        n_features=data.n_features,
        max_depth=depth,
        n_estimators=m,
        feature_subsample=k,
    )
    cv = CvResult(
        entries=entries,
        selected={"max_depth": depth, "n_estimators": m},
        folds=folds,
    )
    return model, cv


def train_forest_fixed(
    data: LabeledDataset, max_depth: int, n_estimators: int, seed: int
) -> RandomForestModel:
    """Forest with known hyperparameters, no grid search (calibration folds)."""
    trees, k = _bootstrap_forest_trees(data.X, data.y, n_estimators, max_depth, 1, seed)
    return RandomForestModel(
        trees=trees,
        seed=seed,
        n_features=data.n_features,
        max_depth=max_depth,
        n_estimators=n_estimators,
        feature_subsample=k,
    )


_LOGIT_CLIP = 1e-12


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class GradientBoostedModel:
    init_score: float
    trees: list[DecisionTree] = field(default_factory=list)
    learning_rate: float = 0.1
    max_depth: int = 3
    n_estimators: int = 0
    seed: int = 0
    n_features: int = 0

    def decision_scores(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if self.n_features and X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        use = self.trees if n_trees is None else self.trees[:n_trees]
        score = np.full(X.shape[0], self.init_score)
        for t in use:
            score += self.learning_rate * t.predict_value(X)
        return score[0] if single else score

    def to_dict(self) -> dict:
        return {
            "kind": "gradient_boosted",
            "init_score": self.init_score,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "n_estimators": self.n_estimators,
            "seed": self.seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GradientBoostedModel":
        return cls(
            init_score=float(raw["init_score"]),
            trees=[DecisionTree.from_dict(t) for t in raw["trees"]],
            learning_rate=float(raw["learning_rate"]),
            max_depth=int(raw["max_depth"]),
            n_estimators=int(raw["n_estimators"]),
            seed=int(raw["seed"]),
            n_features=int(raw["n_features"]),
        )


def train_gbt(
    data: LabeledDataset,
    max_depth: int = 3,
    n_estimators: int = 200,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> GradientBoostedModel:
    """Stagewise regression trees on logistic-loss gradients.

    The initial score is the log-odds of training prevalence; each round
    fits a squared-error tree to the residuals y - p and assigns leaves
    the Newton step sum(residual) / sum(p(1-p)). Single-class data yields
    the degenerate constant-prevalence model with no trees.
    """
    if not 0 < learning_rate <= 1:
        raise ValueError(f"learning_rate must be in (0, 1], got {learning_rate}")
    if n_estimators < 1:
        raise ValueError(f"n_estimators must be >= 1, got {n_estimators}")
    if data.n_rows == 0:
        raise ValueError("cannot train on an empty dataset")

    X = data.X
    y = data.y.astype(np.float64)
    prevalence = float(np.clip(y.mean(), _LOGIT_CLIP, 1 - _LOGIT_CLIP))
    init = float(np.log(prevalence / (1 - prevalence)))
    model = GradientBoostedModel(
        init_score=init,
        learning_rate=learning_rate,
        max_depth=max_depth,
        n_estimators=n_estimators,
        seed=seed,
        n_features=data.n_features,
    )
    if y.min() == y.max():
        return model

    rng = np.random.default_rng(seed)
    rows = np.arange(data.n_rows)
    score = np.full(data.n_rows, init)
    for _ in range(n_estimators):
        p = _sigmoid(score)
        residual = y - p
        hessian = np.maximum(p * (1 - p), 1e-12)
        tree = _grow_tree(
            X,
            residual,
            rows,
            max_depth,
            1,
            data.n_features,
            rng,
            classification=False,
            leaf_num=residual,
            leaf_den=hessian,
        )
        model.trees.append(tree)
        score += learning_rate * tree.predict_value(X)
    return model


def predict_score(model, x):
    """Raw score: forest mean leaf fraction, GBT log-odds, SVM margin."""
    from .svm import SvmModel  # local import avoids a cycle

    if isinstance(model, RandomForestModel):
        return forest_predict_proba(model.trees, _check_dim(model.n_features, x))
    if isinstance(model, GradientBoostedModel):
        return model.decision_scores(x)
    if isinstance(model, DecisionTree):
        return model.predict_value(x)
    if isinstance(model, SvmModel):
        return model.decision_function(x)
    raise ModelError(f"unsupported model type {type(model).__name__}")


def predict_proba(model, x):
    """Probability of the positive class; undefined for uncalibrated SVMs."""
    from .svm import SvmModel

    if isinstance(model, (RandomForestModel, DecisionTree)):
        return predict_score(model, x)
    if isinstance(model, GradientBoostedModel):
        return _sigmoid(model.decision_scores(x))
    if isinstance(model, SvmModel):
        raise ModelError(
            "an RBF SVM margin is not a probability; calibrate the model first"
        )
    raise ModelError(f"unsupported model type {type(model).__name__}")


def _check_dim(n_features, x):
    arr = np.asarray(x, dtype=np.float64)
    width = arr.shape[-1] if arr.ndim else 0
    if width != n_features:
        raise ValueError(f"expected {n_features} features, got {width}")
    return arr
