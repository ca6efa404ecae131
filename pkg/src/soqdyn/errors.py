"""Exception hierarchy shared by all soqdyn modules."""


class SoqdynError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(SoqdynError, ValueError):
    """Invalid parameters, grid specification or experiment configuration."""


class SpaceMismatchError(ConfigError):
    """A field was handed to an operation expecting the other representation."""


class NumericalError(SoqdynError, RuntimeError):
    """A numerical run left its validity envelope (norm drift, overflow, ...)."""


class ConvergenceError(NumericalError):
    """An iterative procedure exhausted its budget without converging."""


class IntegrationError(NumericalError):
    """Adaptive ODE integration failed (step-size underflow, non-finite state)."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state
