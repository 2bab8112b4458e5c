"""Exception hierarchy shared by all quantal modules."""


class QuantalError(Exception):
    """Base class for all errors raised by this package."""


class UaiSyntaxError(QuantalError):
    """Malformed network or evidence text: bad token, count mismatch, trailing junk."""


class UnsupportedArity(QuantalError):
    """A variable with cardinality other than 2 was declared."""


class NegativeValue(QuantalError):
    """A potential table entry is negative."""


class UnknownVariable(QuantalError):
    """A variable index that does not name an active variable."""


class BadParameter(QuantalError):
    """A parameter outside its documented domain (grid size, beta, budget, mode name)."""


class UnorderedVariable(QuantalError):
    """A variable without a position in the decision-diagram store's order."""


class DivisionByZero(QuantalError):
    """Pointwise division hit a zero denominator under a nonzero numerator."""


class BadTarget(QuantalError):
    """A cluster count outside [1, number of distinct leaf values]."""


class TooLarge(QuantalError):
    """Exhaustive enumeration refused: too many unassigned variables."""


class DegenerateReference(QuantalError):
    """Relative difference undefined because the reference log value is ~0."""


class OutOfBudget(QuantalError):
    """The node pool hit its configured memory cap."""


class DeadlineExceeded(QuantalError):
    """A run passed its wall-clock deadline and was stopped."""
