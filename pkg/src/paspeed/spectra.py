"""Low-frequency objects extracted from boundary traces.

Two independent routes to the power-series coefficients u^(k) of the
time-Laplace transform at p = 0:

* time moments: u^(k) = (-1)^k m_k / k! with m_k the Simpson-weighted
  integral of t^k u(t, x) over the recorded window;
* elliptic frequency solves of -Lap w + c^{-2} p^2 w = p c^{-2} f at a small
  Chebyshev p-grid, followed by a constrained polynomial fit in p.

The two routes share no code path and cross-validate each other.  The solver
uses conjugate gradients on the SPD 7-point operator with a monopole-matched
Robin condition d_nu(w) + (p/b0 + 1/|x|) w = 0 on the box faces, which is
exact for the far-field kernel exp(-p r / b0)/r.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import medium
from .elliptic import CauchyData
from .errors import IllConditioned, LayoutMismatch, NoConvergence, TailWarning
from .forward import BoundaryTrace, Grid, SensorShell, _TrilinearSampler
from .quadrature import chebyshev_nodes, simpson_weights

__all__ = [
    "SeriesCoefficients",
    "LaplaceSamples",
    "time_moments",
    "moments_to_order",
    "coeffs_from_moments",
    "laplace_at",
    "elliptic_frequency_oracle",
    "default_p_grid",
    "default_delta_fit",
    "fit_series",
    "cross_validate",
]

TAIL_WINDOW_FRACTION = 0.1
TAIL_TOLERANCE = 0.01


@dataclass
class SeriesCoefficients:
    """Per-sensor values of u^(k), k = 0..K, on both shell spheres."""

    shell: SensorShell
    inner: np.ndarray  # (K+1, N)
    outer: np.ndarray  # (K+1, N)
    residual: float = 0.0

    @property
    def order(self) -> int:
        return self.inner.shape[0] - 1

    def u0_flag(self, tol: float = 1e-2) -> bool:
        """True when max |u^(0)| stays below tol * max |u^(1)|."""
        scale = max(np.max(np.abs(self.inner[1])), np.max(np.abs(self.outer[1])))
        top = max(np.max(np.abs(self.inner[0])), np.max(np.abs(self.outer[0])))
        return bool(top <= tol * scale)

    def u2_constancy(self) -> tuple[float, float]:
        """(mean, std/|mean|) of u^(2) over all sensors on both spheres."""
        vals = np.concatenate([self.inner[2], self.outer[2]])
        mean = float(np.mean(vals))
        spread = float(np.std(vals) / max(abs(mean), 1e-300))
        return mean, spread

    def cauchy_data(self, k: int) -> CauchyData:
        """Cauchy data of u^(k) on the midpoint sphere (second-order pairing)."""
        shell = self.shell
        r_mid = 0.5 * (shell.r_inner + shell.r_outer)
        g = 0.5 * (self.inner[k] + self.outer[k])
        g_nu = (self.outer[k] - self.inner[k]) / shell.dr
        return CauchyData(radius=r_mid, points=r_mid * shell.directions, g=g, g_nu=g_nu)

    def scaled(self, factor: float) -> "SeriesCoefficients":
        return SeriesCoefficients(
            shell=self.shell,
            inner=factor * self.inner,
            outer=factor * self.outer,
            residual=self.residual,
        )

    # -- text serialization (17 significant digits, bit-exact round trip) ---

    def to_text(self) -> str:
        shell = self.shell
        K = self.order
        lines = [
            f"# series coefficients, order {K}, sensors {shell.n_sensors}",
            f"order {K}",
            f"sensors {shell.n_sensors}",
            f"r_inner {shell.r_inner:.17g}",
            f"r_outer {shell.r_outer:.17g}",
            f"residual {self.residual:.17g}",
            "# sphere x y z " + " ".join(f"u{k}" for k in range(K + 1)),
        ]
        for name, pts, block in (
            ("inner", shell.points_inner, self.inner),
            ("outer", shell.points_outer, self.outer),
        ):
            for j in range(shell.n_sensors):
                vals = " ".join(f"{block[k, j]:.17g}" for k in range(K + 1))
                lines.append(
                    f"{name} {pts[j, 0]:.17g} {pts[j, 1]:.17g} {pts[j, 2]:.17g} {vals}"
                )
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "SeriesCoefficients":
        order = None
        n = None
        r_inner = r_outer = None
        residual = 0.0
        rows_inner, rows_outer = [], []
        dirs = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "order":
                order = int(parts[1])
            elif parts[0] == "sensors":
                n = int(parts[1])
            elif parts[0] == "r_inner":
                r_inner = float(parts[1])
            elif parts[0] == "r_outer":
                r_outer = float(parts[1])
            elif parts[0] == "residual":
                residual = float(parts[1])
            elif parts[0] in ("inner", "outer"):
                xyz = np.array(list(map(float, parts[1:4])))
                vals = list(map(float, parts[4:]))
                if parts[0] == "inner":
                    dirs.append(xyz / np.linalg.norm(xyz))
                    rows_inner.append(vals)
                else:
                    rows_outer.append(vals)
        shell = SensorShell(
            r_inner=r_inner, r_outer=r_outer, directions=np.array(dirs)
        )
        return cls(
            shell=shell,
            inner=np.array(rows_inner).T,
            outer=np.array(rows_outer).T,
            residual=residual,
        )

    @classmethod
    def load(cls, path) -> "SeriesCoefficients":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _window(trace: BoundaryTrace, t_max: float | None):
    """Sample count covering [0, t_max] with an odd count for Simpson."""
    if t_max is None:
        return trace.n_samples
    k = int(np.floor(t_max / trace.dt)) + 1
    k = min(k, trace.n_samples)
    if k % 2 == 0:
        k -= 1
    return max(k, 3)


def _taper(t: np.ndarray, taper_fraction: float) -> np.ndarray:
    """Quintic-smoothstep roll-off over the trailing fraction of the window.

    Identity on the early window, so moments of signals that die before the
    roll-off are untouched; oscillatory truncation error of a late coda is
    suppressed by the smooth cut instead of rung by a hard one.
    """
    if taper_fraction <= 0 or t.size < 3:
        return np.ones_like(t)
    t_end = t[-1]
    t_start = t_end * (1.0 - taper_fraction)
    s = np.clip((t - t_start) / max(t_end - t_start, 1e-300), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _tail_check(values: np.ndarray, weighted: np.ndarray, what: str, tail_tol: float):
    """Warn when the trailing window carries a non-negligible share."""
    m = values.shape[0]
    tail = max(int(TAIL_WINDOW_FRACTION * m), 2)
    total = np.sum(np.abs(weighted), axis=0)
    trailing = np.sum(np.abs(weighted[-tail:]), axis=0)
    worst = float(np.max(trailing / np.maximum(total, 1e-300)))
    if worst > tail_tol:
        warnings.warn(
            f"{what}: trailing {TAIL_WINDOW_FRACTION:.0%} window carries "
            f"{worst:.2%} of the integrand mass",
            TailWarning,
            stacklevel=3,
        )


def time_moments(
    trace: BoundaryTrace,
    k: int,
    t_max: float | None = None,
    tail_tol: float = TAIL_TOLERANCE,
) -> np.ndarray:
    """m_k(x) = Simpson integral of t^k u(t, x); shape (2, N) inner/outer."""
    m = _window(trace, t_max)
    w = simpson_weights(m, trace.dt)
    t = trace.dt * np.arange(m)
    wt = w * t**k
    out = np.stack(
        [wt @ trace.inner[:m], wt @ trace.outer[:m]],
        axis=0,
    )
    _tail_check(trace.inner[:m], wt[:, None] * trace.inner[:m], f"m_{k}", tail_tol)
    return out


def moments_to_order(
    trace: BoundaryTrace,
    K: int,
    t_max: float | None = None,
    tail_tol: float = TAIL_TOLERANCE,
) -> np.ndarray:
    """Moments m_0..m_K stacked as (K+1, 2, N)."""
    return np.stack(
        [time_moments(trace, k, t_max=t_max, tail_tol=tail_tol) for k in range(K + 1)],
        axis=0,
    )


def coeffs_from_moments(
    moments: np.ndarray, shell: SensorShell
) -> SeriesCoefficients:
    """u^(k) = (-1)^k m_k / k! from stacked moments (K+1, 2, N)."""
    K = moments.shape[0] - 1
    fac = np.array([(-1.0) ** k / math.factorial(k) for k in range(K + 1)])
    coeffs = fac[:, None, None] * moments
    return SeriesCoefficients(shell=shell, inner=coeffs[:, 0], outer=coeffs[:, 1])


def laplace_at(
    trace: BoundaryTrace, p: float, t_max: float | None = None
) -> np.ndarray:
    """Half-line Laplace transform sample at frequency p; shape (2, N)."""
    if p <= 0:
        raise ValueError("p must be positive")
    m = _window(trace, t_max)
    w = simpson_weights(m, trace.dt)
    t = trace.dt * np.arange(m)
    wt = w * np.exp(-p * t)
    return np.stack([wt @ trace.inner[:m], wt @ trace.outer[:m]], axis=0)


@dataclass
class LaplaceSamples:
    """Samples of the transform at distinct positive frequencies."""

    ps: np.ndarray  # (P,)
    values: np.ndarray  # (P, 2, N)
    shell: SensorShell

    def __post_init__(self):
        ps = np.asarray(self.ps, dtype=float)
        if len(np.unique(ps)) != len(ps):
            raise ValueError("fit frequencies must be distinct")
        if np.any(ps <= 0):
            raise ValueError("fit frequencies must be positive")
        self.ps = ps


def default_delta_fit(b0: float, R0: float) -> float:
    """Stand-in for the analyticity radius: 0.5 * b0 / R0."""
    return 0.5 * b0 / R0


def default_p_grid(K: int, delta_fit: float) -> np.ndarray:
    """K + 4 Chebyshev points on (0.1 delta, delta)."""
    return chebyshev_nodes(0.1 * delta_fit, delta_fit, K + 4)


# ---------------------------------------------------------------------------
# Elliptic frequency route
# ---------------------------------------------------------------------------


def _robin_gamma(grid_axis: np.ndarray, h: float, alpha_fn):
    """Ghost-cell factor per face cell for d_nu u + alpha u = 0."""
    # centered at the face: u_ghost = u_cell (1 - alpha h / 2)/(1 + alpha h / 2)
    a = alpha_fn(grid_axis)
    return (1.0 - 0.5 * a * h) / (1.0 + 0.5 * a * h)


def elliptic_frequency_oracle(
    field: medium.SpeedField,
    src: medium.SourceSpec,
    p: float,
    shell: SensorShell,
    n: int = 96,
    half_width: float = 2.0,
    rtol: float = 1e-8,
    maxiter: int = 20000,
) -> np.ndarray:
    """Solve -Lap w + c^{-2} p^2 w = p c^{-2} f and sample the shell.

    Returns shape (2, N) matching laplace_at.  Conjugate gradients on the
    matrix-free 7-point operator; Robin faces with coefficient p/b0 + 1/|x|.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    grid = Grid(n=n, half_width=half_width, dt=1.0, steps=0)
    ax = grid.axis
    h = grid.h
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    c2inv = 1.0 / field.eval(pts) ** 2
    rhs = p * c2inv * src.eval(pts)

    kappa = p / field.b0

    # per-face ghost factors; alpha evaluated at the cell-center radius
    def alpha_at(axis_idx, fixed):
        # coordinates of face cells along the two free axes
        A, B = np.meshgrid(ax, ax, indexing="ij")
        if axis_idx == 0:
            r = np.sqrt(fixed**2 + A**2 + B**2)
        elif axis_idx == 1:
            r = np.sqrt(A**2 + fixed**2 + B**2)
        else:
            r = np.sqrt(A**2 + B**2 + fixed**2)
        return kappa + 1.0 / np.maximum(r, h)

    gammas = {}
    for axis_idx in range(3):
        for side, fixed in ((0, ax[0]), (1, ax[-1])):
            a = alpha_at(axis_idx, fixed)
            gammas[(axis_idx, side)] = (1.0 - 0.5 * a * h) / (1.0 + 0.5 * a * h)

    shape = (n, n, n)
    size = n**3

    def apply_operator(vec):
        u = vec.reshape(shape)
        out = 6.0 * u.copy()
        out[1:, :, :] -= u[:-1, :, :]
        out[:-1, :, :] -= u[1:, :, :]
        out[:, 1:, :] -= u[:, :-1, :]
        out[:, :-1, :] -= u[:, 1:, :]
        out[:, :, 1:] -= u[:, :, :-1]
        out[:, :, :-1] -= u[:, :, 1:]
        # Robin ghosts: missing neighbor value is gamma * u(face cell)
        out[0, :, :] -= gammas[(0, 0)] * u[0, :, :]
        out[-1, :, :] -= gammas[(0, 1)] * u[-1, :, :]
        out[:, 0, :] -= gammas[(1, 0)] * u[:, 0, :]
        out[:, -1, :] -= gammas[(1, 1)] * u[:, -1, :]
        out[:, :, 0] -= gammas[(2, 0)] * u[:, :, 0]
        out[:, :, -1] -= gammas[(2, 1)] * u[:, :, -1]
        out /= h**2
        out += (p**2) * c2inv * u
        return out.reshape(size)

    op = LinearOperator((size, size), matvec=apply_operator, dtype=float)
    b = rhs.reshape(size)
    sol, info = cg(op, b, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise NoConvergence(f"conjugate gradients stopped with info={info}")
    w = sol.reshape(shape)
    sampler_in = _TrilinearSampler(grid, shell.points_inner)
    sampler_out = _TrilinearSampler(grid, shell.points_outer)
    return np.stack([sampler_in.sample(w), sampler_out.sample(w)], axis=0)


def elliptic_samples(
    field: medium.SpeedField,
    src: medium.SourceSpec,
    shell: SensorShell,
    ps: np.ndarray,
    n: int = 96,
    half_width: float = 2.0,
    rtol: float = 1e-8,
) -> LaplaceSamples:
    vals = np.stack(
        [
            elliptic_frequency_oracle(
                field, src, float(p), shell, n=n, half_width=half_width, rtol=rtol
            )
            for p in ps
        ],
        axis=0,
    )
    return LaplaceSamples(ps=np.asarray(ps, dtype=float), values=vals, shell=shell)


def fit_series(
    samples: LaplaceSamples,
    K: int,
    cond_cap: float = 1e12,
) -> SeriesCoefficients:
    """Least-squares fit w(p) ~ sum_{1<=k<=K} u^(k) p^k with u^(0) fixed at 0."""
    ps = samples.ps
    if len(ps) < K + 2:
        raise IllConditioned(
            f"need at least {K + 2} distinct frequencies for order {K}, got {len(ps)}"
        )
    # scale p to its maximum for conditioning; unscale coefficients afterwards
    scale = float(np.max(ps))
    V = np.vander(ps / scale, N=K + 1, increasing=True)[:, 1:]  # columns p^1..p^K
    cond = np.linalg.cond(V)
    if cond > cond_cap:
        raise IllConditioned(f"fit matrix condition number {cond:.3e}")
    P, two, N = samples.values.shape
    flat = samples.values.reshape(P, two * N)
    coef, _, _, _ = np.linalg.lstsq(V, flat, rcond=None)
    resid = float(np.sqrt(np.mean((V @ coef - flat) ** 2)))
    unscale = scale ** -np.arange(1, K + 1)
    coef = coef * unscale[:, None]
    full = np.concatenate([np.zeros((1, two * N)), coef], axis=0).reshape(K + 1, two, N)
    return SeriesCoefficients(
        shell=samples.shell, inner=full[:, 0], outer=full[:, 1], residual=resid
    )


def cross_validate(
    a: SeriesCoefficients,
    b: SeriesCoefficients,
    orders=None,
    tol: float = 0.05,
) -> dict:
    """Per-order relative RMS discrepancy of b against reference a."""
    if a.shell.n_sensors != b.shell.n_sensors or not np.allclose(
        a.shell.directions, b.shell.directions
    ):
        raise LayoutMismatch("coefficient sets use different sensor layouts")
    if orders is None:
        orders = range(1, min(a.order, b.order) + 1)
    report = {}
    for k in orders:
        va = np.concatenate([a.inner[k], a.outer[k]])
        vb = np.concatenate([b.inner[k], b.outer[k]])
        ref = np.sqrt(np.mean(va**2))
        gap = np.sqrt(np.mean((va - vb) ** 2))
        report[int(k)] = float(gap / max(ref, 1e-300))
    report["pass"] = bool(all(v <= tol for k, v in report.items() if k != "pass"))
    return report
