"""Harmonic test functions, the Dirichlet Green function of a ball, and the
boundary functionals that turn Cauchy data into interior integrals.

The probe library covers constants, shifted coordinates, the complex powers
(x1 + i x2)^n and x3 (x1 + i x2)^n, and the complex-exponential probe
exp((x-a).w1 + i (x-a).w2) with orthonormal w1, w2.  All are harmonic with
analytic gradients, and any probe can be precomposed with a rotation.

For Cauchy data (g, g_nu) of a field u on a sphere, the functional
F(phi) = surface integral of (g d_nu(phi) - g_nu phi) equals the volume
integral of (-Lap u) phi whenever phi is harmonic inside, which is how
point-mass sums sum(lam_k phi(x_k)) become measurable from the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPoints, LayoutMismatch
from .quadrature import fibonacci_sphere

__all__ = [
    "HarmonicProbe",
    "Constant",
    "Coordinate",
    "ComplexPower",
    "ComplexPowerZ3",
    "ExpProbe",
    "Rotated",
    "standard_library",
    "green_ball",
    "point_source_solution",
    "conormal_point_source",
    "PointMassSet",
    "CauchyData",
    "green_identity_functional",
    "mean_value_check",
    "discrete_laplacian",
]


class HarmonicProbe:
    """Base class: eval(points) -> complex values, grad(points) -> (...,3)."""

    def eval(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(HarmonicProbe):
    value: complex = 1.0

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        return np.full(pts.shape[:-1], self.value, dtype=complex)

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        return np.zeros(pts.shape, dtype=complex)


@dataclass(frozen=True)
class Coordinate(HarmonicProbe):
    """v(x) = x_axis - offset_axis."""

    axis: int
    offset: tuple = (0.0, 0.0, 0.0)

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        return (pts[..., self.axis] - self.offset[self.axis]).astype(complex)

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        g = np.zeros(pts.shape, dtype=complex)
        g[..., self.axis] = 1.0
        return g


@dataclass(frozen=True)
class ComplexPower(HarmonicProbe):
    """phi(x) = (x1 + i x2)^n."""

    n: int

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        w = pts[..., 0] + 1j * pts[..., 1]
        return w**self.n

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        g = np.zeros(pts.shape, dtype=complex)
        if self.n == 0:
            return g
        w = pts[..., 0] + 1j * pts[..., 1]
        d = self.n * w ** (self.n - 1)
        g[..., 0] = d
        g[..., 1] = 1j * d
        return g


@dataclass(frozen=True)
class ComplexPowerZ3(HarmonicProbe):
    """phi(x) = x3 (x1 + i x2)^n."""

    n: int

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        w = pts[..., 0] + 1j * pts[..., 1]
        return pts[..., 2] * w**self.n

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        g = np.zeros(pts.shape, dtype=complex)
        w = pts[..., 0] + 1j * pts[..., 1]
        if self.n > 0:
            d = self.n * w ** (self.n - 1) * pts[..., 2]
            g[..., 0] = d
            g[..., 1] = 1j * d
        g[..., 2] = w**self.n
        return g


@dataclass(frozen=True)
class ExpProbe(HarmonicProbe):
    """phi(x) = exp((x-a).w1 + i (x-a).w2), |w1| = |w2| = 1, w1.w2 = 0."""

    base: tuple
    w1: tuple
    w2: tuple

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=float)
        w2 = np.asarray(self.w2, dtype=float)
        if abs(np.linalg.norm(w1) - 1.0) > 1e-12 or abs(np.linalg.norm(w2) - 1.0) > 1e-12:
            raise ValueError("ExpProbe directions must be unit vectors")
        if abs(float(w1 @ w2)) > 1e-12:
            raise ValueError("ExpProbe directions must be orthogonal")
        object.__setattr__(self, "base", tuple(np.asarray(self.base, dtype=float)))
        object.__setattr__(self, "w1", tuple(w1))
        object.__setattr__(self, "w2", tuple(w2))

    def _omega(self):
        return np.array(self.w1) + 1j * np.array(self.w2)

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        rel = pts - np.array(self.base)
        return np.exp(rel @ self._omega())

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        vals = self.eval(pts)
        return vals[..., None] * self._omega()


@dataclass(frozen=True)
class Rotated(HarmonicProbe):
    """phi_R(x) = phi(R x); rotation of the probe frame."""

    inner: HarmonicProbe
    rotation: tuple  # 3x3, row-major tuple of tuples

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "rotation", tuple(map(tuple, R)))

    def _R(self):
        return np.asarray(self.rotation, dtype=float)

    def eval(self, pts):
        pts = np.atleast_2d(pts)
        return self.inner.eval(pts @ self._R().T)

    def grad(self, pts):
        pts = np.atleast_2d(pts)
        g = self.inner.grad(pts @ self._R().T)
        return g @ self._R()


def standard_library(scale: float = 1.0) -> list:
    """Representative probe set used by the identity and harmonicity suites."""
    w1 = np.array([1.0, 0.0, 0.0])
    w2 = np.array([0.0, 1.0, 0.0])
    return [
        Constant(1.0),
        Coordinate(0),
        Coordinate(1, offset=(0.0, 0.1 * scale, 0.0)),
        Coordinate(2),
        ComplexPower(1),
        ComplexPower(2),
        ComplexPower(3),
        ComplexPowerZ3(1),
        ComplexPowerZ3(2),
        ExpProbe(base=(0.0, 0.0, 0.0), w1=tuple(w1), w2=tuple(w2)),
    ]


# ---------------------------------------------------------------------------
# Ball Green function and point sources
# ---------------------------------------------------------------------------


def green_ball(x, y, R: float):
    """Dirichlet Green function of -Lap on the ball of radius R.

    G(x, y) = 1/(4 pi |x-y|) - R / (4 pi |y| |x - (R^2/|y|^2) y|),
    with the image term degenerating to 1/(4 pi R) as y -> 0.
    Broadcasts over leading axes of x; y is a single interior point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(3)
    r = np.linalg.norm(x - y, axis=-1)
    if np.any(r < 1e-14):
        raise CoincidentPoints("green_ball evaluated at its singular point")
    direct = 1.0 / (4.0 * np.pi * r)
    ynorm = np.linalg.norm(y)
    if ynorm < 1e-14:
        image = 1.0 / (4.0 * np.pi * R) * np.ones_like(r)
    else:
        ystar = (R**2 / ynorm**2) * y
        rstar = np.linalg.norm(x - ystar, axis=-1)
        image = R / (4.0 * np.pi * ynorm * rstar)
    return direct - image


def _green_ball_grad_x(x, y, R: float):
    """Gradient in x of green_ball; same broadcasting rules."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(3)
    d = x - y
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    grad = -d / (4.0 * np.pi * r**3)
    ynorm = np.linalg.norm(y)
    if ynorm < 1e-14:
        return grad  # image term is constant in x
    ystar = (R**2 / ynorm**2) * y
    ds = x - ystar
    rs = np.linalg.norm(ds, axis=-1, keepdims=True)
    grad = grad + R / ynorm * ds / (4.0 * np.pi * rs**3)
    return grad


@dataclass(frozen=True)
class PointMassSet:
    """Signed point masses (x_k, lam_k), pairwise distinct, nonzero."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        lam = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if pos.shape[0] != lam.shape[0]:
            raise ValueError("positions and masses disagree in length")
        if np.any(lam == 0.0):
            raise ValueError("masses must be nonzero")
        for i in range(pos.shape[0]):
            for j in range(i + 1, pos.shape[0]):
                if np.linalg.norm(pos[i] - pos[j]) < 1e-12:
                    raise ValueError(f"point masses {i} and {j} coincide")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", lam)

    def __len__(self):
        return self.positions.shape[0]

    def to_text(self) -> str:
        lines = [f"{len(self)}"]
        for p, lam in zip(self.positions, self.masses):
            lines.append(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} {lam:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PointMassSet":
        rows = text.strip().splitlines()
        n = int(rows[0])
        vals = [list(map(float, r.split())) for r in rows[1 : n + 1]]
        arr = np.array(vals)
        return cls(positions=arr[:, :3], masses=arr[:, 3])


def point_source_solution(masses: PointMassSet, x, R: float):
    """v(x) = sum_k lam_k G(x, x_k; R); transposition solution on the ball."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for pos, lam in zip(masses.positions, masses.masses):
        out = out + lam * green_ball(x, pos, R)
    return out


def conormal_point_source(masses: PointMassSet, boundary_points, R: float):
    """Analytic radial derivative of the Green representation at |x| = R."""
    pts = np.atleast_2d(np.asarray(boundary_points, dtype=float))
    normals = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    out = np.zeros(pts.shape[0])
    for pos, lam in zip(masses.positions, masses.masses):
        g = _green_ball_grad_x(pts, pos, R)
        out = out + lam * np.sum(g * normals, axis=-1)
    return out


# ---------------------------------------------------------------------------
# Cauchy data and the boundary functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CauchyData:
    """Field values and radial derivatives on a measurement sphere.

    weights are the surface-quadrature weights and must sum to 4 pi radius^2.
    """

    radius: float
    points: np.ndarray  # (N, 3) on the sphere
    g: np.ndarray  # (N,) field values
    g_nu: np.ndarray  # (N,) radial derivatives
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = pts.shape[0]
        w = self.weights
        if w is None:
            w = np.full(n, 4.0 * np.pi * self.radius**2 / n)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "g", np.asarray(self.g).reshape(n))
        object.__setattr__(self, "g_nu", np.asarray(self.g_nu).reshape(n))
        object.__setattr__(self, "weights", np.asarray(w, dtype=float).reshape(n))

    @classmethod
    def from_point_sources(
        cls, masses: PointMassSet, R_ball: float, radius: float, n_sensors: int = 512
    ) -> "CauchyData":
        """Synthetic data of the ball point-source solution on an interior sphere."""
        pts = radius * fibonacci_sphere(n_sensors)
        g = point_source_solution(masses, pts, R_ball)
        g_nu = conormal_point_source(masses, pts, R_ball)
        return cls(radius=radius, points=pts, g=g, g_nu=g_nu)

    def scaled(self, factor: float) -> "CauchyData":
        return CauchyData(
            radius=self.radius,
            points=self.points,
            g=factor * self.g,
            g_nu=factor * self.g_nu,
            weights=self.weights,
        )


def green_identity_functional(data: CauchyData, phi: HarmonicProbe) -> complex:
    """F(phi) = surface integral of (g d_nu(phi) - g_nu phi).

    Equals the interior integral of (-Lap u) phi when (g, g_nu) are the
    Cauchy data of u and phi is harmonic on the closed ball.
    """
    normals = data.points / np.linalg.norm(data.points, axis=-1, keepdims=True)
    dnu_phi = np.sum(phi.grad(data.points) * normals, axis=-1)
    vals = phi.eval(data.points)
    return complex(np.sum(data.weights * (data.g * dnu_phi - data.g_nu * vals)))


def mean_value_check(
    phi: HarmonicProbe, center, radius: float, n_grid: int = 24
) -> float:
    """Relative gap between the ball average of phi and phi(center)."""
    center = np.asarray(center, dtype=float).reshape(3)
    h = 2.0 * radius / n_grid
    ax = -radius + (np.arange(n_grid) + 0.5) * h
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1) + center
    inside = np.sum((pts - center) ** 2, axis=-1) <= radius**2
    vals = phi.eval(pts.reshape(-1, 3)).reshape(inside.shape)
    avg = np.sum(np.where(inside, vals, 0.0)) / max(np.count_nonzero(inside), 1)
    ref = complex(phi.eval(center[None, :])[0])
    return float(abs(avg - ref) / max(1.0, abs(ref)))


_FD6 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0


def discrete_laplacian(phi: HarmonicProbe, pts: np.ndarray, h: float = 1e-2):
    """Sixth-order finite-difference Laplacian of a probe at points."""
    pts = np.atleast_2d(pts)
    acc = np.zeros(pts.shape[0], dtype=complex)
    offsets = np.arange(-3, 4)
    for axis in range(3):
        for off, w in zip(offsets, _FD6):
            shifted = pts.copy()
            shifted[:, axis] += off * h
            acc += w * phi.eval(shifted)
    return acc / h**2


def check_layout(a: CauchyData, b: CauchyData):
    if a.points.shape != b.points.shape or not np.allclose(a.points, b.points):
        raise LayoutMismatch("Cauchy data sets use different sensor layouts")
