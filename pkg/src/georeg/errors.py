"""Exception types raised by the library."""


class GeoregError(Exception):
    """Base class for all library errors."""


class DegenerateMatchPair(GeoregError, ValueError):
    """Two matches coincide in the second frame, so no rotation is defined."""


class InsufficientMatches(GeoregError, ValueError):
    pass


class AllPairsDegenerate(GeoregError, ValueError):
    pass


class InvalidCount(GeoregError, ValueError):
    pass


class InvalidSpeed(GeoregError, ValueError):
    pass


class PoleSingularity(GeoregError, ValueError):
    """Latitude too close to a pole for the longitude update (cos(lat) ~ 0)."""


class SpeedTooHigh(GeoregError, ValueError):
    """Aircraft speed is at or above the sequential-mode maximum speed."""


class ProvisoViolated(GeoregError, ValueError):
    """The optimal relative count exceeds the largest feasible count."""


class NumericalFailure(GeoregError, RuntimeError):
    pass


class VerdictMismatch(GeoregError, RuntimeError):
    """Analytic convergence conditions and the iteration check disagree."""


class DegenerateDesign(GeoregError, ValueError):
    """Timing samples do not contain enough distinct descriptor counts."""


class ConfigError(GeoregError, ValueError):
    """Invalid run configuration document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
