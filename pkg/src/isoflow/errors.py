"""Exception hierarchy shared by all modules.

Every numerical failure raised by the library derives from
:class:`IsoflowError`; the CLI maps those to exit code 2 and reports the
class name on stderr.
"""


class IsoflowError(Exception):
    """Base class for numerical failures."""

    @property
    def name(self) -> str:
        return type(self).__name__


class DimensionMismatch(IsoflowError, ValueError):
    pass


class UnknownName(IsoflowError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class BlowUp(IsoflowError):
    """Trajectory left the escape ball before the requested time."""

    def __init__(self, t_star, state=None):
        super().__init__(f"trajectory escaped at t*={t_star!r}")
        self.t_star = t_star
        self.state = state


class IntervalNotCovered(IsoflowError):
    pass


class NotInBand(IsoflowError):
    pass


class MonotonicityViolated(IsoflowError):
    pass


class BandExit(IsoflowError):
    pass


class OnCriticalLevel(IsoflowError):
    pass


class GridTooCoarse(IsoflowError):
    pass


class SigmaVanishes(IsoflowError):
    pass


class SingularAverage(IsoflowError):
    pass


class NoNullVector(IsoflowError):
    pass


class WitnessConstant(IsoflowError):
    pass


class NoCriteriumFrame(IsoflowError):
    pass


class NonPositiveAverage(IsoflowError):
    pass
