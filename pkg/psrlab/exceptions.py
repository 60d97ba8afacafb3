"""Exception hierarchy for psrlab."""


class PsrLabError(Exception):
    """Base class for every error raised by psrlab."""


class ConfigError(PsrLabError):
    """Invalid settings, experiment configuration or input file."""


class CapacityError(PsrLabError):
    """An exact enumeration would exceed the configured cap."""

    def __init__(self, operation, required, cap):
        """Record what was requested and the cap that rejected it."""
        super().__init__(f"{operation} needs {required} entries, above the enumeration cap of {cap}")
        self.operation = operation
        self.required = required
        self.cap = cap


class ModelValidationError(PsrLabError):
    """A model, policy or distribution violates a structural invariant."""


class DimensionMismatchError(ModelValidationError):
    """Inputs that must share dimensions or index sets do not."""


class RankDeficiencyError(PsrLabError):
    """A matrix that must have full column rank does not."""

    def __init__(self, message, sigma_min):
        """Keep the offending smallest singular value for reporting."""
        super().__init__(f"{message} (sigma_min={sigma_min:.3e})")
        self.sigma_min = sigma_min


class DecoderError(PsrLabError):
    """A decoder disagrees with the latent state on a positive-probability trajectory."""


class ConstraintViolationError(PsrLabError):
    """A supplied operator family fails its defining identity."""

    def __init__(self, message, residual):
        """Keep the residual norm of the violated identity."""
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
