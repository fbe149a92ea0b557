"""Versioned persistence of the trained artifact set, plus the profile-level
prediction/explanation helpers shared by the CLI and the HTTP service.

The bundle is one canonical JSON document (sorted keys, compact separators,
decimal float round-trip of binary64) carrying a sha256 content hash.
Identical training inputs therefore produce byte-identical files, and any
payload flip is caught at load time. Fold base models shared by the
isotonic and Platt wrappers are stored once in a pool and referenced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibratedModel, LearnerSpec, _CALIBRATOR_TYPES
from .clinical import (
    WhatIfResult,
    WhatIfScenario,
    apply_scenario,
    evaluate_rotterdam,
    supportive_indicators,
)
from .dataset import ScalerParams, assign_profile_subgroups, scale_vector
from .errors import BundleCorruptionError, BundleVersionError, SchemaError
from .explain import GlobalImportance, top_k_explanation, tree_shap
from .fairness import DisparityFlag, SubgroupReport
from .schema import SchemaManifest
from .svm import SvmModel
from .trees import GradientBoostedModel, RandomForestModel

FORMAT_VERSION = 1

MODEL_TAGS = (
    "rf_isotonic",
    "rf_platt",
    "svm_isotonic",
    "svm_platt",
    "gbt_isotonic",
    "gbt_platt",
)


def canonical_json(payload) -> str:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
        allow_nan=False,
    )


def content_hash(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def _base_from_dict(raw: dict):
    kind = raw["kind"]
    if kind == "random_forest":
        return RandomForestModel.from_dict(raw)
    if kind == "gradient_boosted":
        return GradientBoostedModel.from_dict(raw)
    if kind == "svm_rbf":
        return SvmModel.from_dict(raw)
    raise ValueError(f"unknown base model kind {kind!r}")


@dataclass
class ModelBundle:
    manifest: SchemaManifest
    scaler: ScalerParams
    models: dict[str, CalibratedModel]
    default_model: str
    explainer: RandomForestModel
    fairness: SubgroupReport
    disparity_flags: list[DisparityFlag]
    importance: GlobalImportance
    metrics: dict[str, dict]
    criteria: dict
    reference_bands: dict
    reports: dict
    run_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.default_model not in self.models:
            raise SchemaError(
                f"default model {self.default_model!r} is not among "
                f"{sorted(self.models)}"
            )

    # ---- profile-level operations ------------------------------------

    def vectorize(self, features: dict[str, float]) -> np.ndarray:
        cols = self.manifest.feature_columns
        unknown = sorted(set(features) - set(cols))
        if unknown:
            raise ValueError(f"unknown feature {unknown[0]!r}")
        missing = [c for c in cols if c not in features]
        if missing:
            raise ValueError(f"missing feature {missing[0]!r}")
        x = np.empty(len(cols))
        for j, c in enumerate(cols):
            v = float(features[c])
            if self.manifest.is_binary(c) and v not in (0.0, 1.0):
                raise ValueError(f"feature {c!r} is a 0/1 flag, got {v!r}")
            x[j] = v
        return x

    def predict_risk(self, features: dict[str, float], model_tag: str | None = None):
        tag = model_tag or self.default_model
        if tag not in self.models:
            raise KeyError(f"no model tagged {tag!r} in this bundle")
        raw = self.vectorize(features)
        scaled = scale_vector(self.scaler, self.manifest, raw)
        p = float(self.models[tag].predict(scaled))
        return p, tag

    def explain_profile(self, features: dict[str, float], k: int = 3):
        """Attributions of the uncalibrated forest probability, echoing raw
        feature values; the calibrated risk is reported alongside."""
        raw = self.vectorize(features)
        scaled = scale_vector(self.scaler, self.manifest, raw)
        att = tree_shap(self.explainer, scaled)
        display = type(att)(
            phi=att.phi,
            base_value=att.base_value,
            model_output=att.model_output,
            feature_values=raw,
        )
        names = list(self.manifest.feature_columns)
        clinician = top_k_explanation(display, k=len(names), feature_names=names)
        patient = clinician[: min(k, 3)]
        calibrated, tag = self.predict_risk(features)
        return {
            "attribution": display,
            "clinician": clinician,
            "patient": patient,
            "calibrated_risk": calibrated,
            "model": tag,
            "note": (
                "attributions explain the uncalibrated forest probability; "
                "the calibrated risk is shown alongside"
            ),
        }

    def flags_for_profile(self, features: dict[str, float]) -> list[DisparityFlag]:
        assigned = assign_profile_subgroups(self.manifest, features)
        return [
            f
            for f in self.disparity_flags
            if assigned.get(f.attribute) == f.group
        ]

    def rotterdam(self, features: dict[str, float]):
        return evaluate_rotterdam(features, self.criteria)

    def indicators(self, features: dict[str, float]):
        return supportive_indicators(features, self.reference_bands)

    def what_if(self, scenario: WhatIfScenario, k: int = 3) -> WhatIfResult:
        base = apply_scenario(self.manifest, WhatIfScenario(scenario.base_features))
        merged = apply_scenario(self.manifest, scenario)
        baseline_risk, _ = self.predict_risk(base)
        scenario_risk, _ = self.predict_risk(merged)
        base_exp = self.explain_profile(base, k=k)
        scen_exp = self.explain_profile(merged, k=k)
        return WhatIfResult(
            baseline_risk=baseline_risk,
            scenario_risk=scenario_risk,
            delta=scenario_risk - baseline_risk,
            baseline_top=base_exp["clinician"][:k],
            scenario_top=scen_exp["clinician"][:k],
            scenario_features=merged,
        )

    # ---- serialization -------------------------------------------------

    def to_content(self) -> dict:
        pool: dict[int, str] = {}
        pool_payload: dict[str, dict] = {}
        models_payload = {}
        for tag in sorted(self.models):
            cm = self.models[tag]
            pairs = []
            for f, (base, cal) in enumerate(cm.pairs):
                key = pool.get(id(base))
                if key is None:
                    key = f"{cm.spec.kind}:{cm.seed}:fold{f}"
                    pool[id(base)] = key
                    pool_payload[key] = base.to_dict()
                pairs.append({"base_ref": key, "calibrator": cal.to_dict()})
            models_payload[tag] = {
                "spec": {"kind": cm.spec.kind, "params": dict(cm.spec.params)},
                "method": cm.method,
                "seed": cm.seed,
                "fold_of": cm.fold_of.tolist(),
                "pairs": pairs,
            }
        return {
            "schema": self.manifest.to_dict(),
            "scaler": {
                "columns": list(self.scaler.columns),
                "mean": list(self.scaler.mean),
                "std": list(self.scaler.std),
            },
            "base_pool": pool_payload,
            "models": models_payload,
            "default_model": self.default_model,
            "explainer": self.explainer.to_dict(),
            "fairness": self.fairness.to_dict(),
            "disparity_flags": [f.to_dict() for f in self.disparity_flags],
            "global_importance": self.importance.to_dict(),
            "metrics": self.metrics,
            "criteria": self.criteria,
            "reference_bands": self.reference_bands,
            "reports": self.reports,
            "run_metadata": self.run_metadata,
        }

    @property
    def hash(self) -> str:
        return content_hash(self.to_content())

    @classmethod
    def from_content(cls, content: dict) -> "ModelBundle":
        pool = {k: _base_from_dict(v) for k, v in content["base_pool"].items()}
        models = {}
        for tag, raw in content["models"].items():
            pairs = []
            for entry in raw["pairs"]:
                base = pool[entry["base_ref"]]
                cal_raw = entry["calibrator"]
                cal = _CALIBRATOR_TYPES[cal_raw["kind"]].from_dict(cal_raw)
                pairs.append((base, cal))
            models[tag] = CalibratedModel(
                spec=LearnerSpec(
                    kind=raw["spec"]["kind"], params=dict(raw["spec"]["params"])
                ),
                method=raw["method"],
                pairs=pairs,
                fold_of=np.asarray(raw["fold_of"], dtype=np.int32),
                seed=int(raw["seed"]),
            )
        return cls(
            manifest=SchemaManifest.from_dict(content["schema"]),
            scaler=ScalerParams(
                columns=tuple(content["scaler"]["columns"]),
                mean=tuple(content["scaler"]["mean"]),
                std=tuple(content["scaler"]["std"]),
            ),
            models=models,
            default_model=content["default_model"],
            explainer=RandomForestModel.from_dict(content["explainer"]),
            fairness=SubgroupReport.from_dict(content["fairness"]),
            disparity_flags=[
                DisparityFlag.from_dict(f) for f in content["disparity_flags"]
            ],
            importance=GlobalImportance.from_dict(content["global_importance"]),
            metrics=content["metrics"],
            criteria=content["criteria"],
            reference_bands=content["reference_bands"],
            reports=content["reports"],
            run_metadata=content.get("run_metadata", {}),
        )


def save_bundle(bundle: ModelBundle, path) -> str:
    """Write the canonical envelope; returns the content hash."""
    content = bundle.to_content()
    digest = content_hash(content)
    envelope = {
        "format_version": FORMAT_VERSION,
        "content_hash": digest,
        "content": content,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(envelope))
    return digest


def load_bundle(path) -> ModelBundle:
    """Read, verify hash and version, and rebuild every model."""
    with open(path, "r", encoding="utf-8") as fh:
        envelope = json.load(fh)
    version = envelope.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleVersionError(
            f"bundle format version {version!r} is not supported "
            f"(this build reads version {FORMAT_VERSION})",
            found=version,
            supported=FORMAT_VERSION,
        )
    content = envelope.get("content")
    stored = envelope.get("content_hash")
    actual = content_hash(content)
    if stored != actual:
        raise BundleCorruptionError(
            f"content hash mismatch: stored {stored!r}, computed {actual!r}"
        )
    bundle = ModelBundle.from_content(content)
    return bundle
