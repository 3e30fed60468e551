"""Exception hierarchy shared by every dimflow module."""

from __future__ import annotations


class DimflowError(Exception):
    """Base class for all errors raised by dimflow."""


# -- dimension spaces ---------------------------------------------------------


class CycleError(DimflowError):
    def __init__(self, dim: str):
        super().__init__(f"dependency cycle through dimension {dim!r}")
        self.dim = dim


class UnknownDimension(DimflowError, KeyError):
    def __init__(self, dim: str):
        DimflowError.__init__(self, f"unknown dimension {dim!r}")
        self.dim = dim

    def __str__(self) -> str:
        return self.args[0]


class InvalidDimensionName(DimflowError, ValueError):
    pass


class NotExtendable(DimflowError):
    """A preferred ordering contradicts the dependency order."""


# -- shapes and coordinates ---------------------------------------------------


class IncompatibleResolution(DimflowError):
    def __init__(self, dim: str, at, cause: str):
        super().__init__(f"resolution of {dim!r} at {dict(at)} is incompatible: {cause}")
        self.dim = dim
        self.at = at
        self.cause = cause  # "out-of-bounds" | "duplicate" | "malformed"


class InvalidShape(DimflowError):
    pass


class FrameNotClosed(DimflowError):
    pass


class DimOutsideFrame(DimflowError):
    pass


class NotConvex(DimflowError):
    pass


class AnchorOutOfBounds(DimflowError):
    pass


# -- entity arrays ------------------------------------------------------------


class DuplicateWrite(DimflowError):
    pass


class ArityMismatch(DimflowError):
    pass


class Incomplete(DimflowError):
    """A subarray read touched a cell or a length that is not known yet."""


class OrderNotExtension(DimflowError):
    pass


# -- shape builder ------------------------------------------------------------


class OracleFailure(DimflowError):
    def __init__(self, dim: str, at, shape, cause: BaseException | None = None):
        super().__init__(f"length oracle failed for {dim!r} at {dict(at)}: {cause!r}")
        self.dim = dim
        self.at = at
        self.shape = shape
        self.__cause__ = cause


# -- pipeline language --------------------------------------------------------


class PipelineSyntaxError(DimflowError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{line}:{col}: {message}{detail}")


class PipelineCheckError(DimflowError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [f"{d.task}: {d.premise}: {d.message}" for d in self.diagnostics]
        super().__init__("pipeline rejected:\n  " + "\n  ".join(lines))


# -- engine -------------------------------------------------------------------


class UnboundFunction(DimflowError):
    pass


class TaskError(DimflowError):
    def __init__(self, task: str, at, attempts: int, cause: BaseException):
        super().__init__(f"task {task} failed at {dict(at)} after {attempts} attempt(s): {cause!r}")
        self.task = task
        self.at = at
        self.attempts = attempts
        self.__cause__ = cause


class EngineFailed(DimflowError):
    def __init__(self, cause: BaseException):
        super().__init__(f"engine halted: {cause}")
        self.cause = cause
        self.__cause__ = cause


class Deadlock(DimflowError):
    def __init__(self, stuck):
        self.stuck = list(stuck)
        preview = ", ".join(f"{t}@{dict(c)}" for t, c in self.stuck[:8])
        super().__init__(f"engine quiescent with {len(self.stuck)} unfinished ticket(s): {preview}")


class InvariantViolation(DimflowError, AssertionError):
    pass


# -- journal ------------------------------------------------------------------


class JournalError(DimflowError):
    pass


class CorruptJournal(JournalError):
    pass


class VersionMismatch(JournalError):
    pass


class JournalIOError(JournalError, OSError):
    pass


# -- expansions ---------------------------------------------------------------


class ShapeIncomplete(DimflowError):
    pass


class NotExtension(DimflowError):
    pass


class ArrayIncomplete(DimflowError):
    pass
