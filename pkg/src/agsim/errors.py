"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for malformed input,
3 for a guard that refused to run, 4 for a numerical failure.
"""


class AgsimError(Exception):
    exit_code = 4


class SpecError(AgsimError):
    exit_code = 2


class GuardError(AgsimError):
    exit_code = 3


class NumericalError(AgsimError):
    exit_code = 4


# input validation
class DimensionMismatch(SpecError):
    pass


class NonUnitaryInput(SpecError):
    pass


class NotSquare(SpecError):
    pass


class OddSize(SpecError):
    pass


class CapMismatch(SpecError):
    pass


class BadGrouping(SpecError):
    pass


class CutoffExceeded(SpecError):
    pass


class ZeroNormObservable(SpecError):
    pass


class BranchTableIncomplete(SpecError):
    pass


class EmptyInput(SpecError):
    pass


# guards
class TooLarge(GuardError):
    pass


class RankTooLarge(GuardError):
    pass


class CapOverflow(GuardError):
    pass


class GuardExceeded(GuardError):
    pass


# numerical failures
class NotSymplectic(NumericalError):
    pass


class LeakageAboveTolerance(NumericalError):
    pass


class NormalizationFailure(NumericalError):
    pass


class EnvelopeViolation(NumericalError):
    pass


class SamplerFailure(NumericalError):
    pass


class QuadratureMismatch(NumericalError):
    pass
