"""Dataset ingestion, cleaning, stratified splitting, selective scaling,
and subgroup derivation.

Cleaning policy is whole-row deletion: any record with a missing cell in
the target or a declared feature column is dropped, no imputation.
Only continuous columns are standardized; binary flags pass through
untouched. All returned objects are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataValidationError, EmptyDatasetError, SchemaError
from .schema import SchemaManifest

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none"})


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus binary target, in manifest feature order."""

    X: np.ndarray
    y: np.ndarray
    manifest: SchemaManifest
    rows_before_cleaning: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataValidationError("feature matrix and labels are misaligned")
        if X.shape[1] != len(self.manifest.feature_columns):
            raise DataValidationError(
                f"expected {len(self.manifest.feature_columns)} feature columns, "
                f"got {X.shape[1]}"
            )
        if np.isnan(X).any():
            raise DataValidationError("feature matrix contains missing values")
        if not np.isin(y, (0, 1)).all():
            raise DataValidationError("labels must be 0 or 1")
        for name in self.manifest.binary_columns:
            col = X[:, self.manifest.feature_index(name)]
            if not np.isin(col, (0.0, 1.0)).all():
                raise DataValidationError(f"binary column {name!r} holds non-0/1 values")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.manifest.feature_columns

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.manifest.feature_index(name)]

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            X=self.X[idx],
            y=self.y[idx],
            manifest=self.manifest,
            rows_before_cleaning=self.rows_before_cleaning,
        )


def _parse_cell(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataValidationError(
            f"row {row}: column {column!r} holds non-numeric value {raw!r}"
        ) from None


def load_dataset(source, manifest: SchemaManifest) -> LabeledDataset:
    """Read a delimited table, validate it against the manifest, and clean it.

    `source` is anything pandas.read_csv accepts (path or file-like).
    Identifier columns are dropped, rows with a missing target or feature
    cell are removed, and binary columns are checked to hold only 0/1.
    Row indices in error messages are 0-based data rows of the raw table.
    """
    df = pd.read_csv(source, dtype=str, keep_default_na=False)
    header = list(df.columns)
    declared = (
        [manifest.target_column]
        + list(manifest.id_columns)
        + list(manifest.feature_columns)
    )
    missing_cols = [c for c in declared if c not in header]
    if missing_cols:
        raise SchemaError(f"raw table lacks declared column(s): {missing_cols}")

    rows_before = len(df)
    kept = [manifest.target_column] + list(manifest.feature_columns)
    cells = df[kept].to_numpy(dtype=object)
    stripped = np.vectorize(lambda s: s.strip(), otypes=[object])(cells)
    is_missing = np.vectorize(lambda s: s.lower() in MISSING_TOKENS, otypes=[bool])(
        stripped
    )
    survivors = ~is_missing.any(axis=1)
    if not survivors.any():
        raise EmptyDatasetError("no rows remain after removing missing values")
    source_rows = np.nonzero(survivors)[0]
    stripped = stripped[survivors]

    n = len(source_rows)
    y = np.empty(n, dtype=np.int64)
    X = np.empty((n, len(manifest.feature_columns)), dtype=np.float64)
    for i in range(n):
        row_id = int(source_rows[i])
        target_val = _parse_cell(stripped[i, 0], row_id, manifest.target_column)
        if target_val not in (0.0, 1.0):
            raise DataValidationError(
                f"row {row_id}: target {manifest.target_column!r} must be 0/1, "
                f"got {stripped[i, 0]!r}"
            )
        y[i] = int(target_val)
        for j, name in enumerate(manifest.feature_columns):
            value = _parse_cell(stripped[i, j + 1], row_id, name)
            if manifest.is_binary(name) and value not in (0.0, 1.0):
                raise DataValidationError(
                    f"row {row_id}: binary column {name!r} must be 0/1, "
                    f"got {stripped[i, j + 1]!r}"
                )
            X[i, j] = value
    return LabeledDataset(X=X, y=y, manifest=manifest, rows_before_cleaning=rows_before)


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    test_fraction: float


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(
    dataset: LabeledDataset, test_fraction: float, seed: int
) -> SplitIndices:
    """Per-class round-half-up allocation, shuffled by a seeded generator.

    Any mismatch between the summed per-class allocation and the overall
    round-half-up target is settled on the majority class, keeping every
    class proportion within one record of test_fraction * class size.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    n = dataset.n_rows
    class_indices = {c: np.nonzero(dataset.y == c)[0] for c in (0, 1)}
    if test_fraction > 0 and any(len(v) == 0 for v in class_indices.values()):
        raise ValueError("stratified split needs both classes present")

    want = {c: _round_half_up(test_fraction * len(idx)) for c, idx in class_indices.items()}
    total_target = _round_half_up(test_fraction * n)
    majority = max(class_indices, key=lambda c: (len(class_indices[c]), c))
    want[majority] += total_target - sum(want.values())
    want[majority] = min(max(want[majority], 0), len(class_indices[majority]))

    rng = np.random.default_rng(seed)
    test_parts = []
    for c in (0, 1):
        perm = rng.permutation(class_indices[c])
        test_parts.append(perm[: want[c]])
    test = np.sort(np.concatenate(test_parts)).astype(np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    train = np.nonzero(mask)[0]
    return SplitIndices(
        train=tuple(int(i) for i in train),
        test=tuple(int(i) for i in test),
        seed=seed,
        test_fraction=float(test_fraction),
    )


@dataclass(frozen=True)
class ScalerParams:
    """Training-set mean and sample std (ddof=1) per continuous column."""

    columns: tuple[str, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.columns) == len(self.mean) == len(self.std)):
            raise SchemaError("scaler parameter lengths disagree")
        if any(s < 0 for s in self.std):
            raise SchemaError("scaler std must be non-negative")


def fit_scaler(train: LabeledDataset) -> ScalerParams:
    cols = train.manifest.continuous_columns
    means, stds = [], []
    for name in cols:
        col = train.column(name)
        means.append(float(np.mean(col)))
        stds.append(float(np.std(col, ddof=1)) if len(col) > 1 else 0.0)
    return ScalerParams(columns=cols, mean=tuple(means), std=tuple(stds))


def apply_scaler(params: ScalerParams, data: LabeledDataset) -> LabeledDataset:
    """Transform continuous columns to (x - mean) / std with training stats.

    Never recomputes statistics; zero-variance columns are mean-centered
    only. Binary columns are bit-identical in the result.
    """
    if params.columns != data.manifest.continuous_columns:
        raise SchemaError(
            "scaler columns do not match the dataset's continuous columns"
        )
    X = data.X.copy()
    for name, mu, sd in zip(params.columns, params.mean, params.std):
        j = data.manifest.feature_index(name)
        X[:, j] = (X[:, j] - mu) / sd if sd > 0 else X[:, j] - mu
    return LabeledDataset(
        X=X,
        y=data.y,
        manifest=data.manifest,
        rows_before_cleaning=data.rows_before_cleaning,
    )


def scale_vector(params: ScalerParams, manifest: SchemaManifest, x: np.ndarray) -> np.ndarray:
    """Apply training-set scaling to a single raw feature vector."""
    out = np.asarray(x, dtype=np.float64).copy()
    for name, mu, sd in zip(params.columns, params.mean, params.std):
        j = manifest.feature_index(name)
        out[j] = (out[j] - mu) / sd if sd > 0 else out[j] - mu
    return out


@dataclass(frozen=True)
class SubgroupAssignment:
    """Per-record group label for every sensitive attribute."""

    labels: dict[str, tuple[str, ...]]
    declared: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self.labels)

    @property
    def n_rows(self) -> int:
        first = next(iter(self.labels.values()), ())
        return len(first)

    def for_record(self, i: int) -> dict[str, str]:
        return {attr: seq[i] for attr, seq in self.labels.items()}

    def subset(self, indices) -> "SubgroupAssignment":
        idx = [int(i) for i in np.asarray(indices)]
        return SubgroupAssignment(
            labels={a: tuple(seq[i] for i in idx) for a, seq in self.labels.items()},
            declared=self.declared,
        )


def derive_subgroups(data: LabeledDataset, manifest: SchemaManifest) -> SubgroupAssignment:
    """Assign every record exactly one group label per sensitive attribute."""
    labels: dict[str, tuple[str, ...]] = {}
    declared: dict[str, tuple[str, ...]] = {}
    for spec in manifest.sensitive_specs:
        col = data.column(spec.source)
        assigned = []
        for i, value in enumerate(col):
            try:
                assigned.append(spec.assign(float(value)))
            except ValueError as exc:
                raise DataValidationError(f"record {i}: {exc}") from None
        labels[spec.name] = tuple(assigned)
        declared[spec.name] = spec.labels()
    return SubgroupAssignment(labels=labels, declared=declared)


def assign_profile_subgroups(
    manifest: SchemaManifest, features: dict[str, float]
) -> dict[str, str]:
    """Group labels for a single named-feature profile (service-side use)."""
    out = {}
    for spec in manifest.sensitive_specs:
        if spec.source in features:
            out[spec.name] = spec.assign(float(features[spec.source]))
    return out
