"""Declarative schema manifest: column roles, subgroup bins, bounds, derived fields.

The manifest is a YAML document mapping dataset columns to roles (target,
identifier, binary feature, continuous feature), declaring how sensitive
attributes are binned into subgroups, and carrying physiological bounds
used to validate what-if overrides.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import yaml

from .errors import SchemaError


@dataclass(frozen=True)
class IntervalBin:
    """One bin of an ordered threshold chain.

    A record falls into the first bin whose upper bound it satisfies:
    value < upper (exclusive) or value <= upper (inclusive). The final
    bin has no upper bound and absorbs the remainder, so any chain of
    bins covers the whole real line without overlap.
    """

    label: str
    upper: float | None = None
    inclusive: bool = False

    def admits(self, value: float) -> bool:
        if self.upper is None:
            return True
        return value <= self.upper if self.inclusive else value < self.upper


@dataclass(frozen=True)
class SensitiveSpec:
    """How one sensitive attribute is derived from a source column."""

    name: str
    source: str
    bins: tuple[IntervalBin, ...] = ()
    binary_labels: tuple[str, str] | None = None

    def labels(self) -> tuple[str, ...]:
        if self.binary_labels is not None:
            return self.binary_labels
        return tuple(b.label for b in self.bins)

    def assign(self, value: float) -> str:
        if self.binary_labels is not None:
            if value == 0:
                return self.binary_labels[0]
            if value == 1:
                return self.binary_labels[1]
            raise ValueError(
                f"attribute {self.name!r}: value {value!r} is not a 0/1 flag"
            )
        for b in self.bins:
            if b.admits(value):
                return b.label
        raise ValueError(f"attribute {self.name!r}: value {value!r} fits no bin")


@dataclass(frozen=True)
class DerivedField:
    """Recompute rule for a feature derived from others (currently BMI only)."""

    target: str
    kind: str
    inputs: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SchemaManifest:
    target_column: str
    id_columns: tuple[str, ...]
    binary_columns: tuple[str, ...]
    continuous_columns: tuple[str, ...]
    sensitive_specs: tuple[SensitiveSpec, ...]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    derived: tuple[DerivedField, ...] = ()

    def __post_init__(self):
        self._check_consistency()

    @property
    def feature_columns(self) -> tuple[str, ...]:
        return self.continuous_columns + self.binary_columns

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_columns.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature column {name!r}") from None

    def is_binary(self, name: str) -> bool:
        return name in self.binary_columns

    def _check_consistency(self):
        sets = {
            "target": {self.target_column},
            "id": set(self.id_columns),
            "binary": set(self.binary_columns),
            "continuous": set(self.continuous_columns),
        }
        if len(set(self.binary_columns)) != len(self.binary_columns):
            raise SchemaError("duplicate names in binary_columns")
        if len(set(self.continuous_columns)) != len(self.continuous_columns):
            raise SchemaError("duplicate names in continuous_columns")
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                overlap = sets[a] & sets[b]
                if overlap:
                    raise SchemaError(
                        f"column role overlap between {a} and {b}: {sorted(overlap)}"
                    )
        feature_set = set(self.feature_columns)
        for spec in self.sensitive_specs:
            if spec.source not in feature_set:
                raise SchemaError(
                    f"sensitive attribute {spec.name!r} references "
                    f"undeclared column {spec.source!r}"
                )
            if spec.binary_labels is not None:
                if spec.source not in self.binary_columns:
                    raise SchemaError(
                        f"sensitive attribute {spec.name!r} uses binary labels "
                        f"on non-binary column {spec.source!r}"
                    )
                continue
            self._check_bins(spec)
        for rule in self.derived:
            for col in (rule.target, *rule.inputs.values()):
                if col not in feature_set:
                    raise SchemaError(
                        f"derived field {rule.target!r} references "
                        f"undeclared column {col!r}"
                    )

    def _check_bins(self, spec: SensitiveSpec):
        bins = spec.bins
        if not bins:
            raise SchemaError(f"sensitive attribute {spec.name!r} declares no bins")
        if bins[-1].upper is not None:
            raise SchemaError(
                f"sensitive attribute {spec.name!r}: final bin must be unbounded"
            )
        prev = None
        for b in bins[:-1]:
            if b.upper is None:
                raise SchemaError(
                    f"sensitive attribute {spec.name!r}: only the final bin "
                    "may be unbounded"
                )
            key = (b.upper, b.inclusive)
            if prev is not None and key <= prev:
                raise SchemaError(
                    f"sensitive attribute {spec.name!r}: bin bounds must be "
                    "strictly increasing"
                )
            prev = key

    def to_dict(self) -> dict:
        return {
            "target_column": self.target_column,
            "id_columns": list(self.id_columns),
            "binary_columns": list(self.binary_columns),
            "continuous_columns": list(self.continuous_columns),
            "sensitive": [
                {
                    "name": s.name,
                    "source": s.source,
                    **(
                        {"binary_labels": list(s.binary_labels)}
                        if s.binary_labels is not None
                        else {
                            "bins": [
                                {
                                    "label": b.label,
                                    **({} if b.upper is None else {"upper": b.upper}),
                                    **({"inclusive": True} if b.inclusive else {}),
                                }
                                for b in s.bins
                            ]
                        }
                    ),
                }
                for s in self.sensitive_specs
            ],
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "derived": [
                {"target": d.target, "kind": d.kind, **d.inputs} for d in self.derived
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaManifest":
        try:
            target = raw["target_column"]
            binary = tuple(raw["binary_columns"])
            continuous = tuple(raw["continuous_columns"])
        except KeyError as exc:
            raise SchemaError(f"manifest missing required key {exc}") from None
        specs = []
        for entry in raw.get("sensitive", []):
            if "binary_labels" in entry:
                labels = entry["binary_labels"]
                if len(labels) != 2:
                    raise SchemaError(
                        f"sensitive attribute {entry.get('name')!r}: "
                        "binary_labels needs exactly two labels"
                    )
                specs.append(
                    SensitiveSpec(
                        name=entry["name"],
                        source=entry["source"],
                        binary_labels=(str(labels[0]), str(labels[1])),
                    )
                )
            else:
                bins = tuple(
                    IntervalBin(
                        label=str(b["label"]),
                        upper=None if b.get("upper") is None else float(b["upper"]),
                        inclusive=bool(b.get("inclusive", False)),
                    )
                    for b in entry.get("bins", [])
                )
                specs.append(
                    SensitiveSpec(name=entry["name"], source=entry["source"], bins=bins)
                )
        bounds = {
            str(k): (float(v[0]), float(v[1]))
            for k, v in (raw.get("bounds") or {}).items()
        }
        derived = tuple(
            DerivedField(
                target=d["target"],
                kind=d["kind"],
                inputs={k: v for k, v in d.items() if k not in ("target", "kind")},
            )
            for d in raw.get("derived", [])
        )
        return cls(
            target_column=target,
            id_columns=tuple(raw.get("id_columns", [])),
            binary_columns=binary,
            continuous_columns=continuous,
            sensitive_specs=tuple(specs),
            bounds=bounds,
            derived=derived,
        )


def load_manifest(path) -> SchemaManifest:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise SchemaError(f"manifest {path} is not a mapping")
    return SchemaManifest.from_dict(raw)


def _load_packaged(name: str) -> dict:
    text = importlib.resources.files("pcosrisk.data").joinpath(name).read_text("utf-8")
    return yaml.safe_load(text)


def default_manifest() -> SchemaManifest:
    """Manifest for the Kerala PCOS dataset column names."""
    return SchemaManifest.from_dict(_load_packaged("default_manifest.yaml"))


def default_criteria() -> dict:
    """Shipped Rotterdam criterion mapping (feature names and thresholds)."""
    return _load_packaged("rotterdam_criteria.yaml")


def default_reference_bands() -> dict:
    """Shipped reference bands for supportive indicators."""
    return _load_packaged("reference_bands.yaml")
