"""Piecewise-constant speed fields, bump sources, and admissibility checks.

A speed field is a constant background b0 with finitely many disjoint ball
inclusions, each carrying its own constant speed; an inclusion may contain
disjoint spherical holes where the speed reverts to b0.  Sources are sums of
compactly supported polynomial bumps A*(1 - |x-c|^2/rho^2)_+^m with m >= 3,
which keeps them in H^3 and makes every integral needed by the test oracles
available in closed form.

A pair (field, source) is admissible when the contrast norm
max_k |1 - b_k^2/b0^2| stays below 1 and the source integral of f/c^2 is
bounded away from zero; both are evaluated exactly or by midpoint quadrature
in :func:`check_admissible`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import yaml

from .errors import ConfigError, GeometryViolation, GridTooCoarseWarning

__all__ = [
    "Hole",
    "BallInclusion",
    "SpeedField",
    "Bump",
    "SourceSpec",
    "AdmissibilityReport",
    "eval_speed",
    "eval_source",
    "check_admissible",
    "sample_speed",
    "sample_source",
    "load_scenario",
    "parse_scenario",
    "scenario_to_dict",
    "save_scenario",
]

# |integral| must exceed this times ||f||_inf * |Omega| to count as nonzero
NONDEGENERACY_FACTOR = 1e-6


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    return v


@dataclass(frozen=True)
class Hole:
    """Spherical hole carved out of an inclusion; speed inside is b0."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec3(self.center)))
        if self.radius <= 0:
            raise GeometryViolation(f"hole radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class BallInclusion:
    """Ball of one constant speed, possibly with disjoint interior holes."""

    center: tuple
    radius: float
    speed: float
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec3(self.center)))
        object.__setattr__(self, "holes", tuple(self.holes))
        if self.radius <= 0:
            raise GeometryViolation(f"inclusion radius must be positive, got {self.radius}")
        if self.speed <= 0:
            raise GeometryViolation(f"inclusion speed must be positive, got {self.speed}")
        c = np.array(self.center)
        for i, h in enumerate(self.holes):
            d = np.linalg.norm(np.array(h.center) - c)
            if d + h.radius >= self.radius:
                raise GeometryViolation(
                    f"hole {i} (closure) not contained in the open inclusion ball"
                )
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                hi, hj = self.holes[i], self.holes[j]
                d = np.linalg.norm(np.array(hi.center) - np.array(hj.center))
                if d <= hi.radius + hj.radius:
                    raise GeometryViolation(f"holes {i} and {j} overlap")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask: inside the ball and outside every hole."""
        pts = np.atleast_2d(pts)
        inside = np.linalg.norm(pts - np.array(self.center), axis=-1) < self.radius
        for h in self.holes:
            inside &= np.linalg.norm(pts - np.array(h.center), axis=-1) >= h.radius
        return inside


@dataclass(frozen=True)
class SpeedField:
    """Background speed plus ball inclusions inside the support ball Omega."""

    b0: float
    R0: float
    omega_radius: float
    inclusions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        if self.b0 <= 0:
            raise GeometryViolation("background speed must be positive")
        if not (0 < self.omega_radius < self.R0):
            raise GeometryViolation("need 0 < omega_radius < R0")

    def validate_geometry(self):
        """Pairwise disjointness and containment in Omega; raises on violation."""
        for k, inc in enumerate(self.inclusions):
            if np.linalg.norm(inc.center) + inc.radius >= self.omega_radius:
                raise GeometryViolation(
                    f"inclusion {k} (closure) escapes the Omega ball"
                )
        for i in range(len(self.inclusions)):
            for j in range(i + 1, len(self.inclusions)):
                a, b = self.inclusions[i], self.inclusions[j]
                d = np.linalg.norm(np.array(a.center) - np.array(b.center))
                if d <= a.radius + b.radius:
                    raise GeometryViolation(f"inclusions {i} and {j} overlap")

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Speed at points, shape (..., 3) -> (...)."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 3)
        out = np.full(flat.shape[0], self.b0)
        for inc in self.inclusions:
            out = np.where(inc.contains(flat), inc.speed, out)
        return out.reshape(pts.shape[:-1])

    def contrast_norm(self) -> float:
        """ess-sup of |1 - c^2/b0^2|, exact over the finitely many speeds."""
        if not self.inclusions:
            return 0.0
        return max(abs(1.0 - inc.speed**2 / self.b0**2) for inc in self.inclusions)

    @property
    def c_min(self) -> float:
        speeds = [self.b0] + [inc.speed for inc in self.inclusions]
        return min(speeds)

    @property
    def c_max(self) -> float:
        speeds = [self.b0] + [inc.speed for inc in self.inclusions]
        return max(speeds)

    def point_masses(self):
        """Signed masses (location, (b^-2 - b0^-2)*|ball|); holes flip sign.

        This is the ground-truth object the harmonic-moment inversion targets.
        Returns (positions (N,3), masses (N,)).
        """
        locs, lams = [], []
        for inc in self.inclusions:
            contrast = inc.speed**-2 - self.b0**-2
            locs.append(inc.center)
            lams.append(contrast * (4.0 / 3.0) * np.pi * inc.radius**3)
            for h in inc.holes:
                locs.append(h.center)
                lams.append(-contrast * (4.0 / 3.0) * np.pi * h.radius**3)
        if not locs:
            return np.zeros((0, 3)), np.zeros(0)
        return np.array(locs, dtype=float), np.array(lams, dtype=float)


# volume factor of the unit bump profile: int_0^1 (1-u^2)^m u^2 du
def _bump_radial_moment(m: int, power: int) -> float:
    # int_0^1 (1-u^2)^m u^power du = B((power+1)/2, m+1) / 2
    return 0.5 * math.gamma((power + 1) / 2) * math.gamma(m + 1) / math.gamma(
        (power + 1) / 2 + m + 1
    )


@dataclass(frozen=True)
class Bump:
    """One polynomial bump A*(1 - |x-c|^2/rho^2)_+^m."""

    center: tuple
    rho: float
    amplitude: float
    m: int = 3

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec3(self.center)))
        if self.rho <= 0:
            raise ConfigError("bump support radius must be positive")
        if self.m < 3:
            raise ConfigError("bump smoothness exponent must be >= 3")

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        s2 = np.sum((pts - np.array(self.center)) ** 2, axis=-1) / self.rho**2
        return self.amplitude * np.clip(1.0 - s2, 0.0, None) ** self.m

    def integral(self) -> float:
        """Exact integral over R^3."""
        return self.amplitude * 4.0 * np.pi * self.rho**3 * _bump_radial_moment(self.m, 2)

    def second_moment(self) -> float:
        """Exact integral of |x-center|^2 * bump."""
        return self.amplitude * 4.0 * np.pi * self.rho**5 * _bump_radial_moment(self.m, 4)


@dataclass(frozen=True)
class SourceSpec:
    """Initial pressure as a finite sum of bumps supported inside Omega."""

    bumps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bumps", tuple(self.bumps))

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for b in self.bumps:
            out = out + b.eval(pts)
        return out

    def integral(self) -> float:
        return sum(b.integral() for b in self.bumps)

    def max_abs(self) -> float:
        # bumps may overlap; bound by the sum of amplitudes
        return sum(abs(b.amplitude) for b in self.bumps)

    def support_radius(self) -> float:
        """Radius of the smallest origin-centered ball containing the support."""
        if not self.bumps:
            return 0.0
        return max(np.linalg.norm(b.center) + b.rho for b in self.bumps)

    def validate_support(self, omega_radius: float):
        for i, b in enumerate(self.bumps):
            if np.linalg.norm(b.center) + b.rho > omega_radius:
                raise GeometryViolation(f"bump {i} support escapes the Omega ball")


@dataclass(frozen=True)
class AdmissibilityReport:
    contrast_norm: float
    source_integral: float
    verdict: bool
    reasons: tuple = ()


def eval_speed(field: SpeedField, x) -> float:
    """Speed at a single point (background inside holes and outside inclusions)."""
    return float(field.eval(np.asarray(x, dtype=float)))


def eval_source(src: SourceSpec, x) -> float:
    """Initial pressure at a single point; zero outside all bump supports."""
    return float(src.eval(np.asarray(x, dtype=float)))


def _midpoint_lattice(half_width: float, n: int):
    """Cell-center coordinates of an n^3 lattice on [-half_width, half_width]^3."""
    h = 2.0 * half_width / n
    ax = -half_width + (np.arange(n) + 0.5) * h
    return ax, h


def source_integral_quadrature(
    field: SpeedField, src: SourceSpec, n: int = 96, half_width: float | None = None
) -> float:
    """Midpoint quadrature of integral f / c^2 over a box covering the support."""
    if half_width is None:
        half_width = field.omega_radius
    ax, h = _midpoint_lattice(half_width, n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    f = src.eval(pts)
    c = field.eval(pts)
    return float(np.sum(f / c**2) * h**3)


def check_admissible(
    field: SpeedField, src: SourceSpec, n_quad: int = 96
) -> AdmissibilityReport:
    """Contrast bound, geometry, and non-degeneracy of the source integral.

    Raises GeometryViolation for overlapping or escaping inclusions; other
    failures are reported in the verdict with reason codes.
    """
    field.validate_geometry()
    src.validate_support(field.omega_radius)
    reasons = []
    contrast = field.contrast_norm()
    if contrast >= 1.0:
        reasons.append(f"contrast_norm {contrast:.6g} >= 1")
    integral = source_integral_quadrature(field, src, n=n_quad)
    omega_vol = (4.0 / 3.0) * np.pi * field.omega_radius**3
    floor = NONDEGENERACY_FACTOR * src.max_abs() * omega_vol
    if not src.bumps or src.max_abs() == 0.0:
        reasons.append("source vanishes identically")
    elif abs(integral) <= floor:
        reasons.append(
            f"source integral {integral:.3e} below non-degeneracy floor {floor:.3e}"
        )
    return AdmissibilityReport(
        contrast_norm=contrast,
        source_integral=integral,
        verdict=not reasons,
        reasons=tuple(reasons),
    )


def sample_speed(field: SpeedField, axes) -> np.ndarray:
    """Pointwise speed on a cell-center lattice; sharp interfaces, no smoothing.

    axes is a tuple of three 1-D coordinate arrays.  Warns when any inclusion
    or hole spans fewer than three spacings of the finest axis.
    """
    ax, ay, az = axes
    h = max(float(ax[1] - ax[0]), float(ay[1] - ay[0]), float(az[1] - az[0]))
    for k, inc in enumerate(field.inclusions):
        radii = [inc.radius] + [hh.radius for hh in inc.holes]
        if min(radii) < 3.0 * h:
            warnings.warn(
                f"inclusion {k} has a feature below three grid spacings",
                GridTooCoarseWarning,
                stacklevel=2,
            )
    X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
    return field.eval(np.stack([X, Y, Z], axis=-1))


def sample_source(src: SourceSpec, axes) -> np.ndarray:
    """Pointwise source values on a cell-center lattice."""
    ax, ay, az = axes
    X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
    return src.eval(np.stack([X, Y, Z], axis=-1))


# ---------------------------------------------------------------------------
# Scenario configuration (YAML, strict keys)
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = {"b0", "R0", "omega_radius", "inclusions", "bumps"}
_INCLUSION_KEYS = {"center", "radius", "speed", "holes"}
_HOLE_KEYS = {"center", "radius"}
_BUMP_KEYS = {"center", "rho", "amplitude", "m"}


def _require_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def parse_scenario(doc: dict) -> tuple[SpeedField, SourceSpec]:
    """Build (SpeedField, SourceSpec) from a parsed config mapping."""
    _require_keys(doc, _SCENARIO_KEYS, "scenario")
    try:
        b0 = float(doc["b0"])
        R0 = float(doc["R0"])
        omega = float(doc.get("omega_radius", 0.8 * R0))
    except KeyError as exc:
        raise ConfigError(f"scenario: missing required key {exc}") from exc
    inclusions = []
    for i, item in enumerate(doc.get("inclusions") or []):
        _require_keys(item, _INCLUSION_KEYS, f"inclusions[{i}]")
        holes = []
        for j, hitem in enumerate(item.get("holes") or []):
            _require_keys(hitem, _HOLE_KEYS, f"inclusions[{i}].holes[{j}]")
            holes.append(Hole(center=hitem["center"], radius=float(hitem["radius"])))
        inclusions.append(
            BallInclusion(
                center=item["center"],
                radius=float(item["radius"]),
                speed=float(item["speed"]),
                holes=tuple(holes),
            )
        )
    bumps = []
    for i, item in enumerate(doc.get("bumps") or []):
        _require_keys(item, _BUMP_KEYS, f"bumps[{i}]")
        bumps.append(
            Bump(
                center=item["center"],
                rho=float(item["rho"]),
                amplitude=float(item["amplitude"]),
                m=int(item.get("m", 3)),
            )
        )
    field = SpeedField(b0=b0, R0=R0, omega_radius=omega, inclusions=tuple(inclusions))
    return field, SourceSpec(bumps=tuple(bumps))


def scenario_to_dict(field: SpeedField, src: SourceSpec) -> dict:
    return {
        "b0": float(field.b0),
        "R0": float(field.R0),
        "omega_radius": float(field.omega_radius),
        "inclusions": [
            {
                "center": [float(v) for v in inc.center],
                "radius": float(inc.radius),
                "speed": float(inc.speed),
                "holes": [
                    {"center": [float(v) for v in h.center], "radius": float(h.radius)}
                    for h in inc.holes
                ],
            }
            for inc in field.inclusions
        ],
        "bumps": [
            {
                "center": [float(v) for v in b.center],
                "rho": float(b.rho),
                "amplitude": float(b.amplitude),
                "m": int(b.m),
            }
            for b in src.bumps
        ],
    }


def load_scenario(path) -> tuple[SpeedField, SourceSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if doc is None:
        raise ConfigError(f"{path} is empty")
    return parse_scenario(doc)


def save_scenario(path, field: SpeedField, src: SourceSpec):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(field, src), fh, sort_keys=False)
