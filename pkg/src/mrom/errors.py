"""Exception hierarchy shared by the solver, the reduced model and the CLI."""


class MromError(Exception):
    """Base class for all package errors."""


class ConfigError(MromError, ValueError):
    """Invalid configuration (bad parameter, CFL violation, unknown key)."""


class OutOfDomainError(MromError, ValueError):
    """A particle or query point lies outside a non-periodic domain."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class HoleError(MromError, ValueError):
    """Reference points without any donor particle inside their support."""

    def __init__(self, indices):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:20])
        more = "" if len(self.indices) <= 20 else f" (+{len(self.indices) - 20} more)"
        super().__init__(f"{len(self.indices)} reference point(s) have empty support: {shown}{more}")


class NumericalError(MromError, ArithmeticError):
    """Non-finite values or singular systems encountered during a run."""

    def __init__(self, message, stage=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.step = step


class FormatError(MromError, IOError):
    """Malformed, truncated or mismatched archive file."""


class AlignmentError(MromError, ValueError):
    """Archives that cannot be compared (different particle counts or times)."""
