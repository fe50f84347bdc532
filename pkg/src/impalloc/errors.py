"""Exception hierarchy shared by the package."""


class ImpallocError(Exception):
    """Base class for all package errors."""


class DomainError(ImpallocError, ValueError):
    """An operation was called outside its precondition (e.g. an inadmissible quad)."""


class ModelError(ImpallocError, ValueError):
    """The instance is missing data needed to build a linear program."""


class InfeasibleError(ImpallocError):
    """The linear program has no feasible point."""


class IterationLimitError(ImpallocError):
    """The simplex ran out of iterations.

    ``best_point`` holds the last primal feasible point seen, or ``None`` when the
    limit was hit during phase 1.
    """

    def __init__(self, message, best_point=None, iterations=0):
        super().__init__(message)
        self.best_point = best_point
        self.iterations = iterations


class ContractViolation(ImpallocError):
    """An internal invariant did not hold."""


class ParseError(ImpallocError, ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line
