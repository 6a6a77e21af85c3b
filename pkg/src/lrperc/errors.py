"""Exception taxonomy shared by every module.

All errors derive from LrpercError so callers (and the CLI) can catch the
package's failures without swallowing programming errors.
"""


class LrpercError(Exception):
    pass


class DimensionMismatch(LrpercError):
    pass


class ZeroDisplacement(LrpercError):
    pass


class OverlappingSets(LrpercError):
    pass


class DivergentTail(LrpercError):
    pass


class SelfLoop(LrpercError):
    pass


class SameStream(LrpercError):
    pass


class BudgetInfeasible(LrpercError):
    pass


class SourceOutsideSet(LrpercError):
    pass


class EmptySet(LrpercError):
    pass


class EmptySources(LrpercError):
    pass


class EmptyProxy(LrpercError):
    pass


class SubcriticalRegime(LrpercError):
    pass


class DegenerateNorm(LrpercError):
    pass


class TooLarge(LrpercError):
    pass


class NoCrossing(LrpercError):
    pass


class OriginMissing(LrpercError):
    pass


class GeometryInfeasible(LrpercError):
    pass


class SplitInvalid(LrpercError):
    pass


class IsolatedStart(LrpercError):
    pass


class Disconnected(LrpercError):
    pass


class ConfigParse(LrpercError):
    pass


class UnknownExperiment(LrpercError):
    pass
