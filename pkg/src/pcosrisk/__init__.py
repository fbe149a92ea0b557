"""Calibrated, fairness-audited PCOS risk prediction toolkit."""

__version__ = "0.1.0"
