"""Exception hierarchy shared by all synchro modules."""


class SynchroError(Exception):
    """Base class for every error raised by the library."""


class ParameterError(SynchroError, ValueError):
    """A parameter document is malformed or a required field is missing."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class SingularConstantError(SynchroError, ZeroDivisionError):
    """A derived constant would divide by zero."""

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class ApplicabilityError(SynchroError, ValueError):
    """A model was asked to run on a machine it does not describe."""


class ContractError(SynchroError, ValueError):
    """Caller-supplied options contradict each other or the parameters."""


class DomainError(SynchroError, ValueError):
    """Non-finite input reached a numerical kernel."""


class ConvergenceError(SynchroError, RuntimeError):
    """An iterative solve stopped without meeting its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleLoadError(ConvergenceError):
    """The bus solve found no operating point that serves the load."""


class EquilibriumError(ConvergenceError):
    """Newton and pseudo-transient continuation both failed to find a steady state."""


class AutotuneError(ConvergenceError):
    """No reference voltage in the search bracket meets the bus-voltage target."""


class DivergenceError(SynchroError, RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, message, t_last=float("nan"), partial=None):
        super().__init__(message)
        self.t_last = t_last
        # samples recorded up to t_last, when the integrator had any
        self.partial = partial


class StepFailureError(ConvergenceError):
    """The implicit integrator's Newton iteration failed on a step."""


class FileError(SynchroError, OSError):
    """An input or output file could not be read or written."""
