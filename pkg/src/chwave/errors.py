"""Exception and warning types shared across the package."""


class DiagnosticsError(ValueError):
    """Raised when a field or intermediate quantity is not finite."""


class ConfigError(ValueError):
    """Raised for invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class CFLError(ValueError):
    def __init__(self, dt, suggested_dt):
        self.dt = dt
        self.suggested_dt = suggested_dt
        super().__init__(f"dt={dt:g} violates the advective CFL bound; use dt <= {suggested_dt:g}")


class IntegrationError(RuntimeError):
    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class PreconditionFailed(ValueError):
    pass


class NoInflection(LookupError):
    pass


class TrackingLost(RuntimeError):
    pass


class NoSpectrum(ValueError):
    pass


class PeaksNotSeparated(RuntimeError):
    pass


class IndefiniteWeight(UserWarning):
    """Momentum changes sign: the weight of the spectral problem is indefinite."""
