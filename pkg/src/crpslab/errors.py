"""Exception taxonomy shared by all crpslab modules."""


class InputError(ValueError):
    """Invalid argument values: non-finite data, dimension mismatch, empty input."""


class ConfigError(ValueError):
    """Invalid configuration: bad grids, missing keys, out-of-range settings."""


class CapabilityError(RuntimeError):
    """Request exceeds a documented limit (e.g. simplex grid oracle beyond M=4)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance.

    Carries the best available estimate in ``estimate`` so callers can decide
    whether to proceed with a degraded value.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
