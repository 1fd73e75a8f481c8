"""Exception hierarchy shared by every navguard module."""


class NavguardError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(NavguardError, ValueError):
    pass


class NotPsd(NavguardError, ValueError):
    """A covariance failed its definiteness check."""


class NoConvergence(NavguardError, RuntimeError):
    pass


class NotDetectable(NavguardError, ValueError):
    pass


class NonFiniteState(NavguardError, FloatingPointError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class EmptyRoute(NavguardError, ValueError):
    pass


class SingularInnovation(NavguardError, ArithmeticError):
    pass


class InsufficientData(NavguardError, ValueError):
    pass


class WindowTooShort(NavguardError, ValueError):
    pass


class NotCalibrated(NavguardError, RuntimeError):
    pass


class ConfigInvalid(NavguardError, ValueError):
    """Raised with one diagnostic per offending field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class RunFailed(NavguardError, RuntimeError):
    """A Monte-Carlo run failed; ``run_index`` and ``seed`` locate it."""

    def __init__(self, run_index, seed, cause):
        super().__init__(f"run {run_index} (seed {seed}) failed: {cause}")
        self.run_index = run_index
        self.seed = seed
        self.cause = cause
