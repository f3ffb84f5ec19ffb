"""
Error types raised by the library
The CLI maps ConfigError to exit code 2 and every other BregmanError to 1
"""


class BregmanError(Exception):
    """Root of all library errors"""


class ConfigError(BregmanError):
    """Invalid or unknown configuration entry"""


class DomainViolation(BregmanError):
    """Argument lies outside dom(h)"""


class DimensionMismatch(BregmanError):
    """GridFunctions or operators with incompatible sizes/spacings"""


class ConvergenceFailure(BregmanError):
    """An iterative solve hit its iteration cap"""


class DegenerateFit(BregmanError):
    """Not enough distinct points for a log-log fit"""


class EmptySample(BregmanError):
    """No sampled point was usable"""


class InnerFailure(BregmanError):
    """The variational solve inside a Bregman step did not converge"""

    def __init__(self, message: str, result=None, xi=None):
        super().__init__(message)
        self.result = result
        self.xi = xi


class NotInvertible(BregmanError):
    """The subdifferential cannot be inverted for this penalty"""


class MembershipFailure(BregmanError):
    """Supplied xi is not an element of the subdifferential at u"""


class HypothesisViolated(BregmanError):
    """A rate-bound hypothesis such as c*||omega|| < 1 fails"""


class NotSmooth(BregmanError):
    """Second-order information requested from a nonsmooth penalty"""


class DegenerateNoise(BregmanError):
    """Drawn perturbation was the zero vector"""


class SingularSystem(BregmanError):
    """Normal equations could not be factorised"""
