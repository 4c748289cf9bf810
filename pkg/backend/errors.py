class TermStructureError(ValueError):
    """Base class for every error raised by the toolkit"""


class InputValidationError(TermStructureError):
    """Raised when an operation receives inputs outside its domain"""


class OutOfRangeError(TermStructureError):
    """Raised when a time or maturity lies beyond the covered tenor grid"""


class ExtrapolationError(TermStructureError):
    """Raised when a discount factor is requested beyond the last curve pillar"""


class DegenerateRateError(TermStructureError):
    """Raised when 1 + delta * L is not strictly positive"""


class InvalidStateError(TermStructureError):
    """Raised when a jump factor or density value is not strictly positive"""


class DependencyError(TermStructureError):
    """Raised when a required rate, fixing or numeraire value is missing"""


class ConfigurationError(TermStructureError):
    """Raised when the model or simulation configuration is inconsistent"""


class ConditionViolationError(TermStructureError):
    """Raised when the integrability conditions on the driving process fail"""


class InfeasibleCurveError(TermStructureError):
    """Raised when the sampled numeraires cannot reproduce the target discount factor"""


class MaturedBondError(TermStructureError):
    """Raised when a bond price is requested after its maturity"""


class MeasureMismatchError(TermStructureError):
    """Raised when paths were simulated under a measure the operation cannot use"""


class MeasureCoverageError(TermStructureError):
    """Raised when a measure refers to a maturity the grid does not cover"""


class ScenarioError(TermStructureError):
    """Raised when a scenario document cannot be turned into a valid model"""
