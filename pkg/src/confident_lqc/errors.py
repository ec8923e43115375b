"""Exception hierarchy shared by every module of the package."""


class LQCError(Exception):
    """Base class for all errors raised by confident_lqc."""


class BadInput(LQCError, ValueError):
    """Malformed arguments: wrong shapes, indefinite cost matrices, out-of-range steps."""


class NonConvergence(LQCError):
    """The Riccati fixed-point iteration did not settle within ``max_iter``."""


class NotStabilizable(LQCError):
    """The Riccati iteration converged but the closed loop ``A - BK`` is not stable."""


class NumericalError(LQCError):
    """An eigen-decomposition or other linear-algebra kernel failed."""


class DegenerateInstance(LQCError):
    """The offline optimal cost is not strictly positive, so ratios are undefined."""


class CausalityError(LQCError):
    """A controller tried to read a disturbance that has not been revealed yet."""


class Diverged(LQCError):
    """A rollout produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"state became non-finite at step {step}")


class EpisodeFailed(LQCError):
    """The pole angle left the admissible band during a Cart-Pole episode."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"pole angle exceeded the failure threshold at step {step}")


class MissingFile(LQCError, FileNotFoundError):
    """An input file does not exist."""


class ParseError(LQCError):
    """A CSV cell could not be parsed."""

    def __init__(self, row: int, column: str, message: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class ValidationError(LQCError):
    """A parsed CSV row violates a domain invariant."""

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class ConfigError(LQCError):
    """The experiment configuration is missing fields or has invalid values."""
