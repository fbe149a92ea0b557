"""Rotterdam >=2-of-3 screening rule, supportive indicator bands, and
what-if counterfactual scoring through a trained bundle.

Output is screening support, not diagnosis; every assessment carries that
disclaimer. Criterion-to-column mappings and indicator bands come from
overridable config files, with hyperandrogenism evaluated from clinical
proxy flags (and labeled as a proxy in its rationale).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schema import SchemaManifest, default_criteria, default_reference_bands

SCREENING_DISCLAIMER = "screening, not diagnosis"


@dataclass(frozen=True)
class CriterionResult:
    name: str
    met: bool | None  # None when inputs are missing (indeterminate)
    rationale: str

    def to_dict(self) -> dict:
        return {"name": self.name, "met": self.met, "rationale": self.rationale}


@dataclass(frozen=True)
class RotterdamAssessment:
    criteria: tuple[CriterionResult, ...]
    criteria_met_count: int
    meets_threshold: bool
    required: int
    disclaimer: str = SCREENING_DISCLAIMER

    def to_dict(self) -> dict:
        return {
            "criteria": [c.to_dict() for c in self.criteria],
            "criteria_met_count": self.criteria_met_count,
            "meets_threshold": self.meets_threshold,
            "required": self.required,
            "disclaimer": self.disclaimer,
        }


def _flag(features: dict, name: str) -> bool | None:
    if name not in features or features[name] is None:
        return None
    return float(features[name]) == 1.0


def evaluate_rotterdam(
    features: dict[str, float], config: dict | None = None
) -> RotterdamAssessment:
    """Count how many Rotterdam criteria a profile satisfies.

    Missing inputs make a criterion indeterminate (never silently false);
    indeterminate criteria do not count toward the threshold.
    """
    cfg = config if config is not None else default_criteria()
    required = int(cfg.get("required", 2))
    results = []

    oligo_cfg = cfg["oligo_anovulation"]
    flag_col = oligo_cfg["flag_feature"]
    flag = _flag(features, flag_col)
    if flag is None:
        results.append(
            CriterionResult(
                "oligo_anovulation",
                None,
                f"indeterminate: {flag_col!r} not provided",
            )
        )
    else:
        results.append(
            CriterionResult(
                "oligo_anovulation",
                flag,
                f"cycle-irregularity flag {flag_col!r} is "
                + ("set" if flag else "not set"),
            )
        )

    hyper_cfg = cfg["hyperandrogenism"]
    proxies = list(hyper_cfg["proxy_flags"])
    min_flags = int(hyper_cfg.get("min_flags", 2))
    states = {name: _flag(features, name) for name in proxies}
    present = {k: v for k, v in states.items() if v is not None}
    set_count = sum(1 for v in present.values() if v)
    missing = [k for k, v in states.items() if v is None]
    if set_count >= min_flags:
        met = True
    elif set_count + len(missing) < min_flags:
        met = False  # even if every missing flag were set, the bar is unreachable
    elif missing:
        met = None
    else:
        met = False
    detail = (
        f"proxy criterion: {set_count} of {len(proxies)} clinical proxy flags set "
        f"({', '.join(repr(p) for p in proxies)}), needs >= {min_flags}"
    )
    if missing and met is None:
        detail += f"; indeterminate, missing {missing}"
    results.append(CriterionResult("hyperandrogenism", met, detail))

    pcom_cfg = cfg["pcom"]
    follicle_cols = list(pcom_cfg["follicle_features"])
    min_follicles = float(pcom_cfg.get("min_follicles", 12))
    counts = {c: features.get(c) for c in follicle_cols}
    known = {c: float(v) for c, v in counts.items() if v is not None}
    if not known:
        results.append(
            CriterionResult(
                "pcom", None, f"indeterminate: no follicle counts provided "
                f"({', '.join(repr(c) for c in follicle_cols)})"
            )
        )
    else:
        hits = {c: v for c, v in known.items() if v >= min_follicles}
        if hits:
            met = True
        elif len(known) < len(follicle_cols):
            met = None  # an unseen ovary could still qualify
        else:
            met = False
        shown = ", ".join(f"{c}={v:g}" for c, v in known.items())
        detail = f"follicle count threshold >= {min_follicles:g} per ovary; {shown}"
        if met is None:
            detail += "; indeterminate, missing counts"
        results.append(CriterionResult("pcom", met, detail))

    met_count = sum(1 for r in results if r.met is True)
    return RotterdamAssessment(
        criteria=tuple(results),
        criteria_met_count=met_count,
        meets_threshold=met_count >= required,
        required=required,
    )


@dataclass(frozen=True)
class Indicator:
    name: str
    value: float | None
    low: float
    high: float
    unit: str
    in_band: bool | None
    absent: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "low": self.low,
            "high": self.high,
            "unit": self.unit,
            "in_band": self.in_band,
            "absent": self.absent,
        }


def supportive_indicators(
    features: dict[str, float], bands: dict | None = None
) -> list[Indicator]:
    """Display-only context (AMH, BMI, TSH, LH/FSH, waist); never feeds
    the risk model or the Rotterdam rule."""
    cfg = bands if bands is not None else default_reference_bands()
    out = []
    for name, band in cfg.items():
        low, high = float(band["low"]), float(band["high"])
        unit = str(band.get("unit", ""))
        value = None
        if "ratio_of" in band:
            num_col, den_col = band["ratio_of"]
            num, den = features.get(num_col), features.get(den_col)
            if num is not None and den is not None and float(den) != 0.0:
                value = float(num) / float(den)
        else:
            raw = features.get(band["source"])
            if raw is not None:
                value = float(raw)
        if value is None:
            out.append(Indicator(name, None, low, high, unit, None, absent=True))
        else:
            out.append(
                Indicator(
                    name, value, low, high, unit, low <= value <= high, absent=False
                )
            )
    return out


@dataclass(frozen=True)
class WhatIfScenario:
    base_features: dict[str, float]
    overrides: dict[str, float] = field(default_factory=dict)
    recompute: tuple[str, ...] = ()  # derived targets to refresh, e.g. ("BMI",)


@dataclass(frozen=True)
class WhatIfResult:
    baseline_risk: float
    scenario_risk: float
    delta: float
    baseline_top: list
    scenario_top: list
    scenario_features: dict[str, float]

    def to_dict(self) -> dict:
        def items(entries):
            return [
                {
                    "feature": e.feature_name,
                    "phi": e.phi,
                    "value": e.value,
                    "direction": e.direction,
                }
                for e in entries
            ]

        return {
            "baseline_risk": self.baseline_risk,
            "scenario_risk": self.scenario_risk,
            "delta": self.delta,
            "baseline_top": items(self.baseline_top),
            "scenario_top": items(self.scenario_top),
            "scenario_features": dict(self.scenario_features),
        }


def validate_override(manifest: SchemaManifest, name: str, value: float):
    """Raise if an override names an unknown feature or breaks its bounds."""
    if name not in manifest.feature_columns:
        raise ValueError(f"unknown feature {name!r}")
    value = float(value)
    if manifest.is_binary(name):
        if value not in (0.0, 1.0):
            raise ValueError(f"feature {name!r} is a 0/1 flag, got {value!r}")
        return
    if name in manifest.bounds:
        lo, hi = manifest.bounds[name]
        if not lo <= value <= hi:
            raise ValueError(
                f"feature {name!r} must lie within [{lo:g}, {hi:g}], got {value:g}"
            )


def apply_scenario(manifest: SchemaManifest, scenario: WhatIfScenario) -> dict[str, float]:
    """Merged feature map with overrides applied and derived fields
    recomputed where requested."""
    features = {k: float(v) for k, v in scenario.base_features.items()}
    for name, value in scenario.overrides.items():
        validate_override(manifest, name, value)
        features[name] = float(value)
    for rule in manifest.derived:
        if rule.target not in scenario.recompute:
            continue
        if rule.kind == "bmi":
            w = features.get(rule.inputs["weight_kg"])
            h = features.get(rule.inputs["height_cm"])
            if w is None or h is None or h <= 0:
                raise ValueError(
                    f"cannot recompute {rule.target!r}: needs "
                    f"{rule.inputs['weight_kg']!r} and {rule.inputs['height_cm']!r}"
                )
            features[rule.target] = w / (h / 100.0) ** 2
        else:
            raise ValueError(f"unknown derived-field kind {rule.kind!r}")
    return features
