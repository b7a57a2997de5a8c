"""Exception taxonomy shared by all modules."""


class HkeLabError(Exception):
    """Base class for all library errors."""


class SpecInvalid(HkeLabError):
    """A scale-function spec violates its invariants."""


class QuadratureFailure(HkeLabError):
    """An adaptive integral could not be classified or resolved within budget."""


class RangeTooNarrow(HkeLabError):
    """A scaling estimate was requested on a range too short to be meaningful."""


class IntegrabilityViolation(HkeLabError):
    """The near-origin integral of s/psi(s) diverges."""


class OutOfRange(HkeLabError):
    """Evaluation requested beyond the trusted extrapolation window of a table."""


class LowerIndexTooSmall(HkeLabError):
    """A running-supremum scale requires lower scaling index > 1 and none holds."""


class MissingTable(HkeLabError):
    """An envelope variant needs a derived table that was not built."""


class DimensionTooSmall(HkeLabError):
    """Green-function estimates require d > min(beta_upper, 2)."""


class RegimeViolation(HkeLabError):
    """A closed-form example was evaluated outside its stated time regime."""


class CheckpointMissing(HkeLabError):
    """A tail estimate was requested at a time that is not a checkpoint."""


class HorizonTooShort(HkeLabError):
    """Too many paths were censored before exiting; increase the horizon."""


class NotTransient(HkeLabError):
    """Occupation-time estimates require the transient regime d > min(beta_upper, 2)."""
