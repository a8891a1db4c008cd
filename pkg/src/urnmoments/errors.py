"""Exception hierarchy.

Each family maps onto one CLI exit code (see :mod:`urnmoments.cli`):
invalid specifications exit with 2, failed theorem hypotheses with 3,
everything else with 1.
"""


class UrnError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(UrnError, ValueError):
    """The urn specification is malformed or violates an invariant."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class IncompleteSpecError(SpecError):
    """The configuration is a partial fragment and cannot drive computations."""


class NotBalanced(SpecError):
    def __init__(self, message, offenders=()):
        self.offenders = list(offenders)
        super().__init__(message)


class NonPositiveBalance(SpecError):
    pass


class HypothesisError(UrnError):
    """A hypothesis of the limit theorems does not hold for this urn."""


class DominantMismatch(HypothesisError):
    def __init__(self, message, eigenvalue=None, balance=None):
        self.eigenvalue = eigenvalue
        self.balance = balance
        super().__init__(message)


class DominantNotSimple(HypothesisError):
    pass


class NotStrictlySmall(HypothesisError):
    pass


class LargeUrn(HypothesisError):
    pass


class HypothesisFailed(HypothesisError):
    pass


class IrreducibilityRequired(HypothesisError):
    pass


class NumericalError(UrnError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class ClusteringAmbiguous(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class SingularSolve(NumericalError):
    pass


class PoleProximity(NumericalError):
    pass


class MissingDerivatives(NumericalError, ValueError):
    pass


class CapExceeded(UrnError, ValueError):
    pass


class TenabilityViolation(UrnError, RuntimeError):
    """A simulated trajectory left the admissible region."""

    def __init__(self, message, state=None, color=None):
        self.state = state
        self.color = color
        super().__init__(message)
