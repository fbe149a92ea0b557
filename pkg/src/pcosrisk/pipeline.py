"""End-to-end training run: ingest, split, scale, fit the three base
learners with calibration wrappers, evaluate, audit, attribute, and pack
everything into a bundle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ModelBundle
from .calibration import LearnerSpec, fit_calibrated_pair
from .dataset import (
    LabeledDataset,
    apply_scaler,
    derive_subgroups,
    fit_scaler,
    load_dataset,
    stratified_split,
)
from .explain import global_importance
from .fairness import audit_by_group, flag_disparities
from .metrics import (
    PredictionSet,
    brier_score,
    classification_report,
    decision_curve,
    ece,
    reliability_curve,
)
from .schema import SchemaManifest, default_criteria, default_reference_bands
from .trees import DEFAULT_RF_GRID, train_random_forest

DISPLAY_NAMES = {"rf": "Random Forest", "svm": "SVM", "gbt": "Gradient Boosting"}

DEFAULT_GBT_PARAMS = {"max_depth": 4, "n_estimators": 300, "learning_rate": 0.1}
DEFAULT_SVM_PARAMS = {"C": 1.0, "gamma": None, "tol": 1e-3, "max_passes": 200}


@dataclass
class TrainConfig:
    seed: int = 42
    test_fraction: float = 0.2
    folds: int = 5
    rf_grid: dict | None = None
    gbt_params: dict | None = None
    svm_params: dict | None = None
    ece_bins: int = 10
    gap_threshold: float = 0.10
    min_group: int = 10
    default_model: str = "rf_isotonic"


def _metric_block(ps: PredictionSet, bins: int) -> dict:
    report = classification_report(ps)
    return {
        "accuracy": report.accuracy,
        "brier": brier_score(ps),
        "ece": ece(ps, m=bins),
        "ece_m15": ece(ps, m=15),
        "n": ps.n,
    }


def _reliability_rows(ps: PredictionSet, bins: int) -> list[dict]:
    return reliability_curve(ps, m=bins).to_rows()


def _dca_rows(ps: PredictionSet) -> dict:
    curve = decision_curve(ps)
    def rows(points):
        return [
            {"threshold": p.threshold, "tp": p.tp, "fp": p.fp, "n": p.n,
             "net_benefit": p.net_benefit}
            for p in points
        ]
    return {
        "model": rows(curve.model),
        "treat_all": rows(curve.treat_all),
        "treat_none": rows(curve.treat_none),
    }


def train_pipeline(
    data_source,
    manifest: SchemaManifest,
    config: TrainConfig | None = None,
    criteria: dict | None = None,
    reference_bands: dict | None = None,
) -> ModelBundle:
    cfg = config or TrainConfig()
    ds = load_dataset(data_source, manifest)
    split = stratified_split(ds, cfg.test_fraction, cfg.seed)
    train_raw = ds.subset(split.train)
    test_raw = ds.subset(split.test)
    scaler = fit_scaler(train_raw)
    train = apply_scaler(scaler, train_raw)
    test = apply_scaler(scaler, test_raw)

    rf_model, cv = train_random_forest(
        train, cfg.rf_grid or DEFAULT_RF_GRID, folds=cfg.folds, seed=cfg.seed
    )
    gbt_params = dict(DEFAULT_GBT_PARAMS, **(cfg.gbt_params or {}))
    svm_params = dict(DEFAULT_SVM_PARAMS, **(cfg.svm_params or {}))
    specs = {
        "rf": LearnerSpec("rf", dict(cv.selected)),
        "svm": LearnerSpec("svm", svm_params),
        "gbt": LearnerSpec("gbt", gbt_params),
    }

    models = {}
    for kind in ("rf", "svm", "gbt"):
        for method, model in fit_calibrated_pair(
            specs[kind], train, folds=cfg.folds, seed=cfg.seed
        ).items():
            models[f"{kind}_{method}"] = model

    metrics, reliability, dca = {}, {}, {}
    prediction_sets = {}
    for tag in sorted(models):
        ps = PredictionSet(p=models[tag].predict(test.X), y=test.y)
        prediction_sets[tag] = ps
        metrics[tag] = _metric_block(ps, cfg.ece_bins)
        reliability[tag] = _reliability_rows(ps, cfg.ece_bins)
        dca[tag] = _dca_rows(ps)

    groups = derive_subgroups(test_raw, manifest)
    audited_tag = cfg.default_model
    fairness = audit_by_group(
        prediction_sets[audited_tag],
        groups,
        metadata={"model": audited_tag, "seed": cfg.seed, "timestamp": None},
    )
    flags = flag_disparities(fairness, cfg.gap_threshold, cfg.min_group)
    importance = global_importance(rf_model, test)

    run_metadata = {
        "seed": cfg.seed,
        "test_fraction": cfg.test_fraction,
        "folds": cfg.folds,
        "rows_before_cleaning": ds.rows_before_cleaning,
        "rows_after_cleaning": ds.n_rows,
        "train_size": train.n_rows,
        "test_size": test.n_rows,
        "train_prevalence": float(np.mean(train_raw.y)),
        "rf_grid": cfg.rf_grid or DEFAULT_RF_GRID,
        "rf_cv": cv.to_dict(),
        "gbt_params": gbt_params,
        "svm_params": svm_params,
        "ece_bins": cfg.ece_bins,
        "gap_threshold": cfg.gap_threshold,
        "min_group": cfg.min_group,
    }

    return ModelBundle(
        manifest=manifest,
        scaler=scaler,
        models=models,
        default_model=cfg.default_model,
        explainer=rf_model,
        fairness=fairness,
        disparity_flags=flags,
        importance=importance,
        metrics=metrics,
        criteria=criteria if criteria is not None else default_criteria(),
        reference_bands=(
            reference_bands if reference_bands is not None else default_reference_bands()
        ),
        reports={"reliability": reliability, "dca": dca},
        run_metadata=run_metadata,
    )


def summary_table(bundle: ModelBundle) -> list[dict]:
    """Model-comparison rows (accuracy, Brier, ECE) for all six combos."""
    rows = []
    for tag in (
        "svm_isotonic", "rf_isotonic", "gbt_isotonic",
        "svm_platt", "rf_platt", "gbt_platt",
    ):
        if tag not in bundle.metrics:
            continue
        kind, method = tag.split("_")
        m = bundle.metrics[tag]
        rows.append(
            {
                "Model": DISPLAY_NAMES[kind],
                "Calibration": method.capitalize(),
                "Accuracy": m["accuracy"],
                "Brier Score": m["brier"],
                "ECE": m["ece"],
            }
        )
    return rows


def evaluate_bundle(bundle: ModelBundle, data_source) -> dict:
    """Metrics for every bundled model on freshly supplied data."""
    ds = load_dataset(data_source, bundle.manifest)
    scaled = apply_scaler(bundle.scaler, ds)
    out = {}
    for tag in sorted(bundle.models):
        ps = PredictionSet(p=bundle.models[tag].predict(scaled.X), y=scaled.y)
        out[tag] = {
            "metrics": _metric_block(ps, bundle.run_metadata.get("ece_bins", 10)),
            "reliability": _reliability_rows(ps, bundle.run_metadata.get("ece_bins", 10)),
            "dca": _dca_rows(ps),
        }
    return out
