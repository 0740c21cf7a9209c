"""Exception hierarchy shared by every module."""


class LPRFError(Exception):
    """Base class for all library errors."""


class ConfigurationError(LPRFError, ValueError):
    """Inconsistent parameters, grids or symmetry specifications."""


class DomainError(LPRFError, ValueError):
    """A requested sample point lies outside the data's domain."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SymmetryRangeError(LPRFError, ValueError):
    """Extension needs more symmetry applications than allowed."""


class PreconditionError(LPRFError, ValueError):
    """Input data violates an operation's precondition."""


class SplittingError(LPRFError, RuntimeError):
    """Data splitting could not reach the requested smallness."""

    def __init__(self, message, achieved=None, level=None):
        super().__init__(message)
        self.achieved = achieved
        self.level = level


class DivergenceError(LPRFError, RuntimeError):
    """Picard iteration diverged."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class CutoffError(LPRFError, RuntimeError):
    """No admissible cutoff radius inside the computational box."""

    def __init__(self, message, best_norm=None, best_radius=None):
        super().__init__(message)
        self.best_norm = best_norm
        self.best_radius = best_radius


class BlowUpError(LPRFError, FloatingPointError):
    """Time integration produced non-finite values."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class FixedPointError(LPRFError, RuntimeError):
    """Periodic fixed point not found, or ball invariance failed."""

    def __init__(self, message, residual=None, suggested_radius=None):
        super().__init__(message)
        self.residual = residual
        self.suggested_radius = suggested_radius


class IntegrityError(LPRFError, IOError):
    """A stored artifact is missing or corrupt."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ConfigParseError(ConfigurationError):
    """Malformed configuration text; carries the line number and key."""

    def __init__(self, message, line=None, key=None):
        where = f"line {line}" if line is not None else "config"
        if key is not None:
            where += f", key {key!r}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.key = key
