"""Subgroup fairness audit: disaggregated accuracy/precision/recall per
sensitive attribute on the held-out test set, plus disparity flagging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SubgroupAssignment
from .metrics import ClassificationReport, PredictionSet, classification_report

AUDITED_METRICS = ("accuracy", "precision", "recall")


@dataclass(frozen=True)
class GroupResult:
    label: str
    size: int
    report: ClassificationReport | None  # None for empty groups

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "size": self.size,
            "report": None if self.report is None else self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GroupResult":
        rep = raw.get("report")
        return cls(
            label=raw["label"],
            size=int(raw["size"]),
            report=None if rep is None else ClassificationReport.from_dict(rep),
        )


@dataclass(frozen=True)
class SubgroupReport:
    overall: ClassificationReport
    n: int
    attributes: dict[str, tuple[GroupResult, ...]]
    metadata: dict = field(default_factory=dict)

    def group(self, attribute: str, label: str) -> GroupResult:
        for g in self.attributes[attribute]:
            if g.label == label:
                return g
        raise KeyError(f"no group {label!r} under attribute {attribute!r}")

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "n": self.n,
            "attributes": {
                a: [g.to_dict() for g in groups]
                for a, groups in self.attributes.items()
            },
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SubgroupReport":
        return cls(
            overall=ClassificationReport.from_dict(raw["overall"]),
            n=int(raw["n"]),
            attributes={
                a: tuple(GroupResult.from_dict(g) for g in groups)
                for a, groups in raw["attributes"].items()
            },
            metadata=dict(raw.get("metadata", {})),
        )


def audit_by_group(
    ps: PredictionSet, groups: SubgroupAssignment, metadata: dict | None = None
) -> SubgroupReport:
    """Per-group confusion metrics computed on each group's subset only.

    Every declared group appears in the result; groups absent from the
    data carry size 0 and no report. Group sizes per attribute always sum
    to the test-set size.
    """
    if groups.n_rows != ps.n:
        raise ValueError(
            f"predictions ({ps.n}) and group labels ({groups.n_rows}) are misaligned"
        )
    attributes: dict[str, tuple[GroupResult, ...]] = {}
    for attr in groups.attributes:
        seq = np.asarray(groups.labels[attr])
        declared = groups.declared.get(attr) or tuple(sorted(set(seq)))
        results = []
        for label in declared:
            idx = np.nonzero(seq == label)[0]
            if len(idx) == 0:
                results.append(GroupResult(label=label, size=0, report=None))
                continue
            results.append(
                GroupResult(
                    label=label,
                    size=len(idx),
                    report=classification_report(ps.subset(idx)),
                )
            )
        attributes[attr] = tuple(results)
    return SubgroupReport(
        overall=classification_report(ps),
        n=ps.n,
        attributes=attributes,
        metadata=dict(metadata or {}),
    )


@dataclass(frozen=True)
class DisparityFlag:
    attribute: str
    group: str
    metric: str
    group_value: float
    overall_value: float
    gap: float  # overall - group value
    size: int
    severity: str  # warn | info

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "group": self.group,
            "metric": self.metric,
            "group_value": self.group_value,
            "overall_value": self.overall_value,
            "gap": self.gap,
            "size": self.size,
            "severity": self.severity,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DisparityFlag":
        return cls(**raw)


def flag_disparities(
    report: SubgroupReport, gap_threshold: float = 0.10, min_group: int = 10
) -> list[DisparityFlag]:
    """One flag per (attribute, group, metric) trailing the overall value
    by at least the threshold; groups below min_group only rate "info".

    Metrics undefined in a group (or overall) are skipped rather than
    treated as zero. Output is sorted by gap descending.
    """
    flags = []
    for attr, groups in report.attributes.items():
        for g in groups:
            if g.report is None:
                continue
            for metric in AUDITED_METRICS:
                overall = report.overall.metric(metric)
                value = g.report.metric(metric)
                if overall is None or value is None:
                    continue
                gap = overall - value
                if gap >= gap_threshold:
                    flags.append(
                        DisparityFlag(
                            attribute=attr,
                            group=g.label,
                            metric=metric,
                            group_value=value,
                            overall_value=overall,
                            gap=gap,
                            size=g.size,
                            severity="warn" if g.size >= min_group else "info",
                        )
                    )
    flags.sort(key=lambda f: (-f.gap, f.attribute, f.group, f.metric))
    return flags
