"""Exception and warning types shared across the package."""


class NearCritError(Exception):
    """Base class for all package-specific errors."""


class NotPrimitiveWithin(NearCritError):
    """No matrix power up to ``k_max`` is entrywise positive."""

    def __init__(self, k_max: int):
        super().__init__(
            f"matrix is not primitive within {k_max} powers; a zero row/column "
            f"or a periodic structure will never pass"
        )
        self.k_max = k_max


class ConvergenceFailure(NearCritError):
    """Power iteration did not reach the target residual within budget."""


class SlackTooSmall(NearCritError):
    """Basis search exhausted without certifying the requested contraction slack."""


class SpectralRadiusNotLessThanOne(NearCritError):
    """Input is not a valid critical primitive decomposition."""


class ProfileViolatesSmallO(NearCritError):
    """Noise-scale profile does not decay relative to the state on the test grid."""


class OrthantViolation(NearCritError):
    """A step left the positive orthant; signals a model-family bug."""


class ParamContractViolation(NearCritError):
    """Counterexample profile functions fail their inequality contract on the probe grid."""


class DomainError(NearCritError, ValueError):
    """Argument outside the stated domain of a scalar bound or functional."""


class EmptyPremiseSet(NearCritError):
    """A sampled slab produced no usable states."""


class NoEscapers(NearCritError):
    """Ray diagnostics require at least one escaping trajectory."""


class StructureViolation(NearCritError):
    """A structural identity of the counterexample chain failed (a bug, not randomness)."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(NearCritError):
    """Run configuration failed validation."""


class PremiseCoverageWarning(UserWarning):
    """No sampled state satisfied a condition's premise; coverage is inconclusive."""
