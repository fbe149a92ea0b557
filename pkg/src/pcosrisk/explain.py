"""Exact path-dependent Shapley attributions for decision trees and
forests, a brute-force subset-enumeration oracle for verification, and
global importance ranking.

Conditional expectations use the per-node training sample counts as
cover weights: descending past a split on an "absent" feature averages
the two children by their cover proportions. Forest attributions are the
arithmetic mean of per-tree attributions, so local accuracy
(base + sum(phi) = output) carries over exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .errors import CostGuardError, ModelError
from .trees import DecisionTree, RandomForestModel


@dataclass(frozen=True)
class AttributionSet:
    phi: np.ndarray
    base_value: float
    model_output: float
    feature_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        object.__setattr__(
            self, "feature_values", np.asarray(self.feature_values, dtype=np.float64)
        )


class _TreeView:
    """Plain-list mirror of a DecisionTree; cuts array-access overhead in
    the per-node recursion."""

    __slots__ = ("feature", "threshold", "left", "right", "count", "value")

    def __init__(self, tree: DecisionTree):
        if tree.count[0] <= 0:
            raise ModelError("tree lacks cover counts; cannot weight paths")
        self.feature = tree.feature.tolist()
        self.threshold = tree.threshold.tolist()
        self.left = tree.left.tolist()
        self.right = tree.right.tolist()
        self.count = tree.count.tolist()
        self.value = tree.value.tolist()


def _extend(path, pz, po, pi):
    """Grow the active path by one split, updating subset-size weights."""
    l = len(path)
    out = [e.copy() for e in path]
    out.append([pi, pz, po, 1.0 if l == 0 else 0.0])
    for i in range(l - 1, -1, -1):
        out[i + 1][3] += po * out[i][3] * (i + 1) / (l + 1)
        out[i][3] = pz * out[i][3] * (l - i) / (l + 1)
    return out


def _unwind(path, i):
    """Undo the extension that introduced path[i]."""
    last = len(path) - 1
    zi, oi = path[i][1], path[i][2]
    n = path[last][3]
    out = [e.copy() for e in path[:last]]
    for j in range(last - 1, -1, -1):
        if oi != 0:
            t = out[j][3]
            out[j][3] = n * (last + 1) / ((j + 1) * oi)
            n = t - out[j][3] * zi * (last - j) / (last + 1)
        else:
            out[j][3] = out[j][3] * (last + 1) / (zi * (last - j))
    for j in range(i, last):
        out[j][0], out[j][1], out[j][2] = path[j + 1][0], path[j + 1][1], path[j + 1][2]
    return out


def _unwound_weight_sum(path, i):
    """sum of weights after unwinding path[i], without building the list."""
    last = len(path) - 1
    zi, oi = path[i][1], path[i][2]
    total = 0.0
    if oi != 0:
        n = path[last][3]
        for j in range(last - 1, -1, -1):
            t = n * (last + 1) / ((j + 1) * oi)
            total += t
            n = path[j][3] - t * zi * (last - j) / (last + 1)
    else:
        for j in range(last - 1, -1, -1):
            total += path[j][3] * (last + 1) / (zi * (last - j))
    return total


def _shap_recurse(tv: _TreeView, x, phi, node, path, pz, po, pi):
    path = _extend(path, pz, po, pi)
    f = tv.feature[node]
    if f < 0:
        leaf = tv.value[node]
        for i in range(1, len(path)):
            w = _unwound_weight_sum(path, i)
            phi[path[i][0]] += w * (path[i][2] - path[i][1]) * leaf
        return
    left, right = tv.left[node], tv.right[node]
    hot, cold = (left, right) if x[f] <= tv.threshold[node] else (right, left)
    iz, io = 1.0, 1.0
    k = None
    for j in range(1, len(path)):
        if path[j][0] == f:
            k = j
            break
    if k is not None:
        iz, io = path[k][1], path[k][2]
        path = _unwind(path, k)
    cn = tv.count[node]
    _shap_recurse(tv, x, phi, hot, path, iz * tv.count[hot] / cn, io, f)
    _shap_recurse(tv, x, phi, cold, path, iz * tv.count[cold] / cn, 0.0, f)


def _tree_base_value(tree: DecisionTree) -> float:
    leaves = tree.feature < 0
    return float(
        np.dot(tree.count[leaves], tree.value[leaves]) / tree.count[0]
    )


def _tree_phi(tv: _TreeView, x: np.ndarray, d: int) -> np.ndarray:
    phi = np.zeros(d)
    _shap_recurse(tv, x, phi, 0, [], 1.0, 1.0, -1)
    return phi


def tree_shap(model, x) -> AttributionSet:
    """Path-dependent Shapley attribution of the probability output.

    Accepts a single DecisionTree or a RandomForestModel; the forest
    attribution is the mean of per-tree attributions.
    """
    x = np.asarray(x, dtype=np.float64)
    trees = model.trees if isinstance(model, RandomForestModel) else [model]
    d = trees[0].n_features
    if x.shape != (d,):
        raise ValueError(f"expected a feature vector of length {d}")
    phi = np.zeros(d)
    base = 0.0
    output = 0.0
    for tree in trees:
        tv = _TreeView(tree)
        phi += _tree_phi(tv, x, d)
        base += _tree_base_value(tree)
        output += float(tree.predict_value(x))
    k = len(trees)
    return AttributionSet(
        phi=phi / k, base_value=base / k, model_output=output / k, feature_values=x
    )


def tree_shap_matrix(model, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-row attributions for a whole matrix; returns (phi, base)."""
    X = np.asarray(X, dtype=np.float64)
    trees = model.trees if isinstance(model, RandomForestModel) else [model]
    d = trees[0].n_features
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected a matrix with {d} columns")
    phi = np.zeros_like(X)
    base = 0.0
    for tree in trees:
        tv = _TreeView(tree)
        base += _tree_base_value(tree)
        for r in range(X.shape[0]):
            phi[r] += _tree_phi(tv, X[r], d)
    k = len(trees)
    return phi / k, base / k


_BRUTE_FORCE_MAX_FEATURES = 15


def brute_force_shap(tree: DecisionTree, x) -> AttributionSet:
    """Exact Shapley values by enumerating every feature subset.

    Uses the same cover-weighted conditional expectation as tree_shap, so
    the two must agree to float precision. Exponential in the number of
    distinct split features; guarded above 15.
    """
    x = np.asarray(x, dtype=np.float64)
    d = tree.n_features
    if x.shape != (d,):
        raise ValueError(f"expected a feature vector of length {d}")
    if tree.count[0] <= 0:
        raise ModelError("tree lacks cover counts; cannot weight paths")
    split_feats = sorted(set(int(f) for f in tree.feature if f >= 0))
    if len(split_feats) > _BRUTE_FORCE_MAX_FEATURES:
        raise CostGuardError(
            f"{len(split_feats)} split features exceed the brute-force "
            f"budget of {_BRUTE_FORCE_MAX_FEATURES}"
        )

    cache: dict[frozenset, float] = {}

    def cond_exp(node: int, subset: frozenset) -> float:
        f = tree.feature[node]
        if f < 0:
            return float(tree.value[node])
        if f in subset:
            child = tree.left[node] if x[f] <= tree.threshold[node] else tree.right[node]
            return cond_exp(child, subset)
        lw = tree.count[tree.left[node]] / tree.count[node]
        rw = tree.count[tree.right[node]] / tree.count[node]
        return lw * cond_exp(tree.left[node], subset) + rw * cond_exp(
            tree.right[node], subset
        )

    def v(subset: frozenset) -> float:
        if subset not in cache:
            cache[subset] = cond_exp(0, subset)
        return cache[subset]

    phi = np.zeros(d)
    m = len(split_feats)
    fact = [math.factorial(i) for i in range(m + 1)]
    for j in split_feats:
        others = [f for f in split_feats if f != j]
        for size in range(m):
            weight = fact[size] * fact[m - size - 1] / fact[m]
            for combo in itertools.combinations(others, size):
                s = frozenset(combo)
                phi[j] += weight * (v(s | {j}) - v(s))
    return AttributionSet(
        phi=phi,
        base_value=v(frozenset()),
        model_output=v(frozenset(split_feats)),
        feature_values=x,
    )


@dataclass(frozen=True)
class GlobalImportance:
    mean_abs_phi: np.ndarray
    ranking: tuple[int, ...]  # feature indices, most important first

    def to_dict(self) -> dict:
        return {
            "mean_abs_phi": [float(v) for v in self.mean_abs_phi],
            "ranking": list(self.ranking),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GlobalImportance":
        return cls(
            mean_abs_phi=np.asarray(raw["mean_abs_phi"], dtype=np.float64),
            ranking=tuple(int(i) for i in raw["ranking"]),
        )


def global_importance(model, test: LabeledDataset) -> GlobalImportance:
    """Mean |phi| per feature across the test set; ties rank by index."""
    if test.n_rows == 0:
        raise ValueError("global importance needs a non-empty test set")
    phi, _ = tree_shap_matrix(model, test.X)
    mean_abs = np.abs(phi).mean(axis=0)
    ranking = tuple(
        int(i) for i in sorted(range(len(mean_abs)), key=lambda i: (-mean_abs[i], i))
    )
    return GlobalImportance(mean_abs_phi=mean_abs, ranking=ranking)


@dataclass(frozen=True)
class ExplanationItem:
    feature_index: int
    feature_name: str | None
    phi: float
    value: float
    direction: str  # "raises risk" | "lowers risk"


def top_k_explanation(
    att: AttributionSet, k: int, feature_names=None
) -> list[ExplanationItem]:
    """Strongest contributions by |phi|, zero contributions dropped."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    order = sorted(range(len(att.phi)), key=lambda i: (-abs(att.phi[i]), i))
    items = []
    for i in order:
        if att.phi[i] == 0.0:
            continue
        items.append(
            ExplanationItem(
                feature_index=i,
                feature_name=None if feature_names is None else feature_names[i],
                phi=float(att.phi[i]),
                value=float(att.feature_values[i]),
                direction="raises risk" if att.phi[i] > 0 else "lowers risk",
            )
        )
        if len(items) == k:
            break
    return items
