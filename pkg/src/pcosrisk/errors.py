"""Exception types shared across the package."""


class PcosRiskError(Exception):
    """Base class for all package errors."""


class SchemaError(PcosRiskError):
    """Manifest is inconsistent or references columns the data does not have."""


class DataValidationError(PcosRiskError):
    """A cell value violates its declared column role."""


class EmptyDatasetError(PcosRiskError):
    """No rows survive cleaning."""


class FitError(PcosRiskError):
    """A model or calibrator cannot be fitted on the given data."""


class ConvergenceError(FitError):
    """An iterative fit ran out of iterations before reaching tolerance."""

    def __init__(self, message, iterations):
        super().__init__(message)
        self.iterations = iterations


class ModelError(PcosRiskError):
    """A trained model is structurally unusable for the requested operation."""


class CostGuardError(PcosRiskError):
    """An exponential-cost oracle was asked for more than it can afford."""


class BundleError(PcosRiskError):
    """Bundle file cannot be loaded."""


class BundleCorruptionError(BundleError):
    """Stored content hash does not match the payload."""


class BundleVersionError(BundleError):
    """Bundle was written by an incompatible format version."""

    def __init__(self, message, found, supported):
        super().__init__(message)
        self.found = found
        self.supported = supported
