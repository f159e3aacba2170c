"""Exception and warning types shared across the toolkit."""


class PaspeedError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PaspeedError):
    """Scenario or CLI configuration is malformed (unknown keys, bad types)."""


class FormatError(PaspeedError):
    """A serialized artifact is corrupt; carries the failing byte offset when known."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class GeometryViolation(PaspeedError):
    """Inclusion/hole geometry breaks disjointness or containment; names the pair."""


class NumericBlowup(PaspeedError):
    """Field amplitude exceeded the stability guard (CFL violation or NaN)."""


class SensorOutsideGrid(PaspeedError):
    """A sensor point falls outside the interpolable region of the lattice."""


class NoConvergence(PaspeedError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class IllConditioned(PaspeedError):
    """A fit system is numerically rank deficient or too poorly conditioned."""


class LayoutMismatch(PaspeedError):
    """Two per-sensor objects do not share the same sensor layout."""


class CoincidentPoints(PaspeedError):
    """Evaluation point coincides with a source point of a singular kernel."""


class NotConstant(PaspeedError):
    """A quantity that must be sensor-constant varies beyond tolerance."""


class DegenerateB(PaspeedError):
    """The recovered source constant is too close to zero to divide by."""


class RankAmbiguous(PaspeedError):
    """Hankel singular values show no clear gap at the requested threshold."""


class CollisionUnresolved(PaspeedError):
    """Projected node collision persisted through all rotation retries."""


class InconsistentMass(PaspeedError):
    """A recovered mass is incompatible with a real positive speed."""


class HorizonTooShort(PaspeedError):
    """Recorded trace is shorter than the observability horizon requires."""


class GridTooCoarseWarning(UserWarning):
    """An inclusion or hole spans fewer than three grid spacings."""


class TailWarning(UserWarning):
    """Trailing time window still carries weight; moments may be truncated."""
