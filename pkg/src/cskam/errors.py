"""Exception hierarchy shared by all modules."""


class KAMError(Exception):
    """Base class for numerical failures reported by this package."""


class NonZeroAverage(KAMError):
    pass


class LambdaOnUnitCircle(KAMError):
    pass


class NoDriftParameter(KAMError):
    pass


class StepTooLarge(KAMError, ValueError):
    pass


class LiftDiscontinuity(KAMError):
    pass


class DegenerateEmbedding(KAMError):
    pass


class NondegeneracyFailure(KAMError):
    pass


class SmallDivisorOverflow(KAMError):
    pass


class MaxIterations(KAMError):
    pass


class InsufficientData(KAMError):
    pass


class ConservativeCase(KAMError):
    pass


class NewtonDiverged(KAMError):
    pass


class SingularClosureJacobian(KAMError):
    pass


class IncompleteTongue(KAMError):
    pass


class UnresolvedCriterion(KAMError):
    pass


class Unbounded(KAMError):
    pass


class RationalFrequency(KAMError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration; carries a location tag in the message."""
