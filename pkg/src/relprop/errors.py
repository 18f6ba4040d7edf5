"""Exception types shared across the package."""


class RelpropError(Exception):
    """Base class for all package-specific errors."""


class ParseError(RelpropError):
    """Base class for ingestion failures, tagged with file and line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class MalformedRow(ParseError):
    def __init__(self, path, line, message="malformed row"):
        super().__init__(path, line, message)


class EmptyFile(ParseError):
    def __init__(self, path, message="no data rows"):
        super().__init__(path, 0, message)


class NegativeValue(ParseError):
    def __init__(self, path, line, column, value):
        self.column = column
        self.value = value
        super().__init__(path, line, f"negative value {value!r} in column {column!r}")


class NonPositiveCount(ParseError):
    def __init__(self, path, line, value):
        self.value = value
        super().__init__(path, line, f"count must be >= 1, got {value!r}")


class NoOverlap(RelpropError):
    """Expression and sensitivity panels share no cell line."""


class NoObservables(RelpropError):
    """A subgraph was requested around observable nodes but none exist."""


class DegenerateGraph(RelpropError):
    """A generated graph has no usable structure (e.g. every drug isolated)."""


class EmptyOverlap(RelpropError):
    """The panel observations do not touch any node of the skeleton."""


class Diverged(RelpropError):
    """A parameter became non-finite during training."""

    def __init__(self, epoch, iteration):
        self.epoch = epoch
        self.iteration = iteration
        where = f"epoch {epoch}" + ("" if iteration is None else f", inner iteration {iteration}")
        super().__init__(f"non-finite parameter detected at {where}")


class UnknownDrug(RelpropError):
    pass


class ShapeMismatch(RelpropError):
    pass


class TooFewCellLines(RelpropError):
    pass


class EmptyIntersection(RelpropError):
    pass


class NonFiniteFeatures(RelpropError):
    pass
