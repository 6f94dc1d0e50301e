"""Exception types shared across the package."""


class LatreeError(Exception):
    """Base class for all package-specific errors."""


class InvalidTreeError(LatreeError):
    """A node/edge collection does not form a valid semi-labeled tree."""


class NewickParseError(LatreeError):
    """Malformed Newick input.

    Carries the 1-based line and column of the offending character.
    """

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownNodeError(LatreeError):
    """A distance query referenced a node the oracle cannot answer for."""


class StoreConflictError(LatreeError):
    """store() attempted to overwrite an oracle-native distance."""


class NotATreeMetric(LatreeError):
    """Queried distances are inconsistent with any weighted tree."""


class InvalidDelta(LatreeError):
    """Observed branching exceeds the degree bound supplied to recovery."""


class NoiseTooLarge(LatreeError):
    """Noisy grouping is ambiguous at the configured noise level."""


class RoundBudgetExceeded(LatreeError):
    """Noisy recovery exceeded its round budget."""


class InfiniteDistance(LatreeError):
    """A correlation of zero maps to an infinite distance."""


class InvalidCorrelation(LatreeError):
    """A correlation or rank-correlation value lies outside [-1, 1]."""


class SingularMarginal(LatreeError):
    """A marginal distribution has a zero entry, so its determinant vanishes."""


class EstimateDegenerate(LatreeError):
    """An estimated correlation is zero or sign-ambiguous."""
