"""Exception hierarchy shared across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, ordering, sign)."""


class DomainError(ValueError):
    """A quantity is evaluated outside its mathematical domain."""


class ConfigError(ValueError):
    """Invalid experiment or training configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverError(RuntimeError):
    """Base class for integration failures; ``t`` is the last time reached."""

    def __init__(self, message, t=float("nan"), states=None):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t
        # grid states produced before the failure
        self.states = states


class DivergenceError(SolverError):
    """The step budget was exhausted before reaching the end of the grid."""


class StiffnessError(SolverError):
    """The step size fell below the configured minimum."""


class BlowUpError(SolverError):
    """A trial state became non-finite."""


class TapeExhaustedError(RuntimeError):
    """Gradient evaluation was requested on a tape that was already consumed."""


class TrainingCollapse(RuntimeError):
    """Every initial condition of an epoch failed to integrate."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch
