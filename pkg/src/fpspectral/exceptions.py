"""Exception hierarchy for fpspectral."""


class FPSpectralError(Exception):
    """Base class for all fpspectral errors."""


class NonConfiningError(FPSpectralError):
    """The potential does not confine the stationary density on any
    admissible domain box (or the supplied box is too small)."""


class NoConvergenceError(FPSpectralError):
    """An iterative solver failed to converge.

    Carries solver diagnostics in ``history`` (e.g. residual norms per
    iteration) for post-mortem inspection.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class SingularSystemError(FPSpectralError):
    """A linear system required by the shape-function design is numerically
    singular beyond the regularization threshold."""


class StepFailureError(FPSpectralError):
    """Time integration failed (step size underflow or solver abort).

    Attributes ``t`` and ``state_norm`` record where the failure happened.
    """

    def __init__(self, message, t=None, state_norm=None):
        super().__init__(message)
        self.t = t
        self.state_norm = state_norm


class ParticleEscapeError(FPSpectralError):
    """A particle left the truncation box by more than one box width,
    which signals an unstable step size in the SDE integrator."""


class ConfigError(FPSpectralError):
    """Invalid experiment configuration (bad key, value, or file)."""
