"""Inversion pipeline: from series coefficients to speeds and source.

Chain: the sensor-constant u^(2) gives the source constant B; the Green
identity applied to u^(4) Cauchy data against harmonic monomials yields the
harmonic moments of the speed contrast, which are the moments of a signed
point-mass distribution sitting at inclusion (and hole) centers with masses
(b_k^-2 - b0^-2) |ball|; a Hankel/Prony step localizes the masses; given a
radius prior the masses invert to speeds; and a time-reversed wave solve with
the rebuilt speed map recovers the initial pressure from the same trace.

Stability probes compare two single-inclusion data sets through coordinate
and complex-exponential test functions, mirroring the structure that yields
Lipschitz center control and linear contrast control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import yaml
from scipy.linalg import eig, hankel
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from . import medium, spectra
from .elliptic import (
    CauchyData,
    ComplexPower,
    ComplexPowerZ3,
    Constant,
    Coordinate,
    ExpProbe,
    HarmonicProbe,
    PointMassSet,
    Rotated,
    check_layout,
    green_identity_functional,
)
from .errors import (
    CollisionUnresolved,
    DegenerateB,
    HorizonTooShort,
    InconsistentMass,
    NotConstant,
    RankAmbiguous,
)
from .forward import BoundaryTrace, Grid, SensorShell, cfl_timestep, simulate
from .quadrature import fibonacci_sphere

__all__ = [
    "recover_B",
    "contrast_moments",
    "MomentSequence",
    "moment_sequence",
    "prony_localize",
    "recover_speeds",
    "stability_probe",
    "time_reversal",
    "source_error",
    "match_point_sets",
    "lq_speed_error",
    "PipelinePlan",
    "plan_pipeline",
    "roundtrip",
    "ReconstructionReport",
]


def recover_B(
    coeffs: spectra.SeriesCoefficients,
    constancy_tol: float = 2e-2,
    degenerate_floor: float = 1e-12,
) -> tuple[float, float]:
    """B = -mean u^(2); returns (B, std/|mean|).

    Raises NotConstant when u^(2) varies across sensors beyond tolerance and
    DegenerateB when |B| sits below the division guard.
    """
    mean, spread = coeffs.u2_constancy()
    if spread > constancy_tol:
        raise NotConstant(
            f"u^(2) spread {spread:.3e} exceeds tolerance {constancy_tol:.3e}"
        )
    B = -mean
    if abs(B) < degenerate_floor:
        raise DegenerateB(f"|B| = {abs(B):.3e} below floor {degenerate_floor:.3e}")
    return B, spread


def contrast_moments(
    u4_cauchy: CauchyData,
    B: float,
    b0: float,
    phi: HarmonicProbe,
    degenerate_floor: float = 1e-12,
) -> complex:
    """mu(phi) = F(phi)/B - b0^-2 |ball| phi(0) = sum_k lam_k phi(x_k).

    F is the Green-identity functional of the u^(4) Cauchy data; the
    subtraction removes the homogeneous background through the mean value of
    phi over the measurement ball.
    """
    if abs(B) < degenerate_floor:
        raise DegenerateB(f"|B| = {abs(B):.3e} below floor {degenerate_floor:.3e}")
    F = green_identity_functional(u4_cauchy, phi)
    vol = (4.0 / 3.0) * np.pi * u4_cauchy.radius**3
    phi0 = complex(phi.eval(np.zeros((1, 3)))[0])
    return F / B - (b0**-2) * vol * phi0


@dataclass
class MomentSequence:
    """Complex monomial moments m_n = sum lam_k z_k^n and the x3-weighted
    companions m'_n = sum lam_k (x_k)_3 z_k^n, with z = x1 + i x2."""

    m: np.ndarray  # (n_max+1,)
    mz: np.ndarray  # (n_max+1,)
    noise: float = 0.0
    rotation: np.ndarray | None = None  # frame applied to x before projecting

    @property
    def n_max(self) -> int:
        return self.m.shape[0] - 1


def moment_sequence(
    u4_cauchy: CauchyData,
    B: float,
    b0: float,
    n_max: int,
    rotation: np.ndarray | None = None,
) -> MomentSequence:
    """Evaluate the monomial moment ladder from u^(4) Cauchy data."""
    m = np.empty(n_max + 1, dtype=complex)
    mz = np.empty(n_max + 1, dtype=complex)
    for n in range(n_max + 1):
        p1: HarmonicProbe = ComplexPower(n)
        p2: HarmonicProbe = ComplexPowerZ3(n)
        if rotation is not None:
            p1 = Rotated(p1, tuple(map(tuple, rotation)))
            p2 = Rotated(p2, tuple(map(tuple, rotation)))
        m[n] = contrast_moments(u4_cauchy, B, b0, p1)
        mz[n] = contrast_moments(u4_cauchy, B, b0, p2)
    return MomentSequence(m=m, mz=mz, rotation=rotation)


def synthetic_moments(
    masses: PointMassSet, n_max: int, rotation: np.ndarray | None = None
) -> MomentSequence:
    """Direct-sum forward oracle for the moment ladder (test support)."""
    pos = masses.positions
    if rotation is not None:
        pos = pos @ np.asarray(rotation).T
    z = pos[:, 0] + 1j * pos[:, 1]
    n = np.arange(n_max + 1)
    zn = z[None, :] ** n[:, None]
    m = zn @ masses.masses.astype(complex)
    mz = zn @ (masses.masses * pos[:, 2]).astype(complex)
    return MomentSequence(m=m, mz=mz, rotation=rotation)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def prony_localize(
    seq: MomentSequence,
    n_maxsources: int = 4,
    rank_tol: float = 1e-8,
    separation_tol: float = 0.05,
    mass_floor: float = 1e-10,
    gap_min: float = 10.0,
    reframe=None,
    max_retries: int = 8,
    seed: int = 7,
) -> PointMassSet:
    """Recover signed point masses from the monomial moment ladder.

    The node count is the numerical rank of the square Hankel matrix of the
    m_n; nodes come from the generalized eigenvalues of the shifted Hankel
    pencil; masses and third coordinates from Vandermonde least squares.
    When two nodes collide in the x1+i x2 projection the ladder is re-evaluated
    in a random rotation frame via the reframe callback.
    """
    if seq.n_max < 2 * n_maxsources + 1:
        raise ValueError(
            f"need moments to order {2 * n_maxsources + 1}, got {seq.n_max}"
        )
    rng = np.random.default_rng(seed)
    attempt = seq
    for trial in range(max_retries + 1):
        H = hankel(attempt.m[: n_maxsources + 1], attempt.m[n_maxsources:])
        sv = np.linalg.svd(H, compute_uv=False)
        scale = sv[0]
        if scale <= mass_floor:
            return PointMassSet(positions=np.zeros((0, 3)), masses=np.zeros(0))
        threshold = max(rank_tol * scale, mass_floor)
        N = int(np.sum(sv > threshold))
        N = min(N, n_maxsources)
        if N < len(sv) and sv[N] > 0:
            gap = sv[N - 1] / sv[N]
            if gap < gap_min:
                raise RankAmbiguous(
                    f"singular values {sv} show gap {gap:.2f} < {gap_min} at rank {N}"
                )
        H0 = hankel(attempt.m[:N], attempt.m[N - 1 : 2 * N - 1])
        H1 = hankel(attempt.m[1 : N + 1], attempt.m[N : 2 * N])
        z = eig(H1, H0, right=False)
        if not np.all(np.isfinite(z)):
            collision = True
        else:
            collision = False
            for i in range(N):
                for j in range(i + 1, N):
                    if abs(z[i] - z[j]) < separation_tol:
                        collision = True
        if not collision:
            n = np.arange(attempt.n_max + 1)
            V = z[None, :] ** n[:, None]
            lam, _, _, _ = np.linalg.lstsq(V, attempt.m, rcond=None)
            xi, _, _, _ = np.linalg.lstsq(V, attempt.mz, rcond=None)
            lam_r = lam.real
            keep = np.abs(lam_r) > mass_floor
            z, lam, xi, lam_r = z[keep], lam[keep], xi[keep], lam_r[keep]
            if lam_r.size == 0:
                return PointMassSet(positions=np.zeros((0, 3)), masses=np.zeros(0))
            x3 = (xi / lam).real
            pos = np.column_stack([z.real, z.imag, x3])
            if attempt.rotation is not None:
                pos = pos @ np.asarray(attempt.rotation)
            return PointMassSet(positions=pos, masses=lam_r)
        if reframe is None:
            raise CollisionUnresolved(
                "projected nodes collide and no reframe callback was supplied"
            )
        attempt = reframe(_random_rotation(rng))
    raise CollisionUnresolved(f"collision persisted through {max_retries} retries")


def recover_speeds(masses: PointMassSet, radius: float, b0: float) -> np.ndarray:
    """b_k = (b0^-2 + lam_k / |B_r|)^{-1/2} under the common-radius prior."""
    vol = (4.0 / 3.0) * np.pi * radius**3
    base = b0**-2 + masses.masses / vol
    if np.any(base <= 0):
        bad = int(np.argmin(base))
        raise InconsistentMass(
            f"mass {bad} ({masses.masses[bad]:.3e}) implies a non-real speed"
        )
    return base**-0.5


def _orthonormal_frame(w1: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to w1."""
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(w1)))] = 1.0
    w2 = helper - (helper @ w1) * w1
    return w2 / np.linalg.norm(w2)


def stability_probe(
    u4_a: CauchyData,
    u4_b: CauchyData,
    B_a: float,
    B_b: float,
    b0: float,
    radius_prior: float,
) -> tuple[float, float]:
    """Estimate (center displacement, speed discrepancy) of two single-inclusion
    data sets from the difference of their contrast-moment functionals.

    Coordinate probes anchored at the first data set's estimated center give
    the displacement; a complex-exponential probe aligned with it gives the
    contrast gap, converted to a speed gap through the recovered speeds.
    """
    check_layout(u4_a, u4_b)
    vol_r = (4.0 / 3.0) * np.pi * radius_prior**3

    def mu(data, B, phi):
        return contrast_moments(data, B, b0, phi)

    lam_a = mu(u4_a, B_a, Constant(1.0)).real
    lam_b = mu(u4_b, B_b, Constant(1.0)).real
    if abs(lam_a) < 1e-300 or abs(lam_b) < 1e-300:
        raise DegenerateB("vanishing contrast mass in stability probe")
    x_a = np.array([mu(u4_a, B_a, Coordinate(ax)).real for ax in range(3)]) / lam_a
    x_b = np.array([mu(u4_b, B_b, Coordinate(ax)).real for ax in range(3)]) / lam_b

    disp = np.empty(3)
    for ax in range(3):
        probe = Coordinate(ax, offset=tuple(x_a))
        diff = mu(u4_a, B_a, probe) - mu(u4_b, B_b, probe)
        disp[ax] = -(diff.real) / lam_b
    displacement = float(np.linalg.norm(disp))

    b_hat_a = float(recover_speeds(PointMassSet(x_a[None, :], [lam_a]), radius_prior, b0)[0])
    b_hat_b = float(recover_speeds(PointMassSet(x_b[None, :], [lam_b]), radius_prior, b0)[0])

    if displacement > 1e-12:
        w1 = disp / displacement
    else:
        w1 = np.array([1.0, 0.0, 0.0])
    w2 = _orthonormal_frame(w1)
    probe = ExpProbe(base=tuple(x_a), w1=tuple(w1), w2=tuple(w2))
    diff = mu(u4_a, B_a, probe) - mu(u4_b, B_b, probe)
    correction = (b0**-2) * (
        complex(probe.eval(x_a[None, :])[0]) - complex(probe.eval(x_b[None, :])[0])
    )
    delta = diff / vol_r + correction
    contrast_gap = (b_hat_a**2 * b_hat_b**2 / (b_hat_a + b_hat_b)) * abs(delta)
    return displacement, float(contrast_gap)


# ---------------------------------------------------------------------------
# Time reversal
# ---------------------------------------------------------------------------


def time_reversal(
    trace: BoundaryTrace,
    field: medium.SpeedField,
    n: int = 128,
    T: float | None = None,
    safety: float = 0.9,
    shell_thickness_cells: int = 6,
    horizon_check: bool = True,
):
    """Solve the wave equation backward inside the measurement sphere.

    The recorded inner-sphere trace (radially extrapolated with the outer
    sphere) is imposed as Dirichlet data on a thin shell of lattice cells at
    the measurement radius, time-reversed, with zero final conditions; the
    state at reversed time T approximates the initial pressure.

    Returns (f_hat lattice, Grid).
    """
    r_in = trace.shell.r_inner
    duration = trace.duration if T is None else float(T)
    if duration > trace.duration + 1e-12:
        raise ValueError("requested horizon exceeds the recorded trace")
    horizon = 4.0 * field.R0 * field.b0 / field.c_min
    if horizon_check and duration < horizon:
        raise HorizonTooShort(
            f"trace spans {duration:.3f}, observability needs > {horizon:.3f}"
        )

    # box just large enough to hold the pinned shell
    pad = shell_thickness_cells + 4
    half_width = r_in / (1.0 - 2.0 * pad / n)
    h = 2.0 * half_width / n
    dt = cfl_timestep(h, field.c_max, safety)
    steps = int(np.ceil(duration / dt))
    grid = Grid(n=n, half_width=half_width, dt=dt, steps=steps, sponge_width=0)

    ax = grid.axis
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    radius = np.sqrt(X**2 + Y**2 + Z**2)
    pts = np.stack([X, Y, Z], axis=-1)
    c2 = field.eval(pts) ** 2
    coef = c2 * (dt / h) ** 2

    pinned = (radius >= r_in) & (radius <= r_in + shell_thickness_cells * h)
    pin_idx = np.nonzero(pinned.reshape(-1))[0]
    pin_r = radius.reshape(-1)[pin_idx]
    pin_dirs = pts.reshape(-1, 3)[pin_idx] / pin_r[:, None]

    # nearest-sensor interpolation on the direction sphere (4 neighbors)
    tree = cKDTree(trace.shell.directions)
    dist, cols = tree.query(pin_dirs, k=4)
    w = 1.0 / np.maximum(dist, 1e-12)
    w /= np.sum(w, axis=1, keepdims=True)

    dr = trace.shell.dr
    frac_r = (pin_r - r_in) / dr  # radial extrapolation weight

    def shell_values(t_phys: float) -> np.ndarray:
        s = np.clip(t_phys / trace.dt, 0.0, trace.n_samples - 1)
        i0 = int(np.floor(s))
        i1 = min(i0 + 1, trace.n_samples - 1)
        th = s - i0
        g_in = (1.0 - th) * trace.inner[i0] + th * trace.inner[i1]
        g_out = (1.0 - th) * trace.outer[i0] + th * trace.outer[i1]
        vi = np.sum(g_in[cols] * w, axis=1)
        vo = np.sum(g_out[cols] * w, axis=1)
        return vi + frac_r * (vo - vi)

    u_prev = np.zeros_like(c2)
    u_curr = np.zeros_like(c2)
    scratch = np.empty_like(c2)
    flat_prev = u_prev.reshape(-1)
    flat_curr = u_curr.reshape(-1)
    flat_prev[pin_idx] = shell_values(duration)
    flat_curr[pin_idx] = shell_values(duration - dt)

    from .forward import _leapfrog  # shared kernel

    for k in range(2, steps + 1):
        _leapfrog(u_prev, u_curr, coef, None, scratch)
        u_prev, u_curr, scratch = u_curr, scratch, u_prev
        u_curr.reshape(-1)[pin_idx] = shell_values(duration - k * dt)

    u_curr[radius >= r_in] = 0.0
    return u_curr, grid


def source_error(
    f_hat: np.ndarray, grid: Grid, src: medium.SourceSpec, omega_radius: float
) -> float:
    """Relative L2 error of f_hat against the true source over the Omega ball."""
    ax = grid.axis
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    inside = X**2 + Y**2 + Z**2 < omega_radius**2
    f_true = src.eval(np.stack([X, Y, Z], axis=-1))
    num = np.sum((f_hat[inside] - f_true[inside]) ** 2)
    den = np.sum(f_true[inside] ** 2)
    return float(np.sqrt(num / max(den, 1e-300)))


# ---------------------------------------------------------------------------
# Matching and field-error metrics
# ---------------------------------------------------------------------------


def match_point_sets(recovered: PointMassSet, reference: PointMassSet) -> list[dict]:
    """Minimal total-distance assignment with mass-sign compatibility."""
    nr, nt = len(recovered), len(reference)
    if nr == 0 or nt == 0:
        return []
    cost = np.linalg.norm(
        recovered.positions[:, None, :] - reference.positions[None, :, :], axis=-1
    )
    sign_mismatch = (
        np.sign(recovered.masses)[:, None] != np.sign(reference.masses)[None, :]
    )
    cost = cost + 1e6 * sign_mismatch
    rows, cols = linear_sum_assignment(cost)
    table = []
    for i, j in zip(rows, cols):
        table.append(
            {
                "recovered": int(i),
                "reference": int(j),
                "distance": float(
                    np.linalg.norm(recovered.positions[i] - reference.positions[j])
                ),
                "mass_rel_err": float(
                    abs(recovered.masses[i] - reference.masses[j])
                    / abs(reference.masses[j])
                ),
                "sign_ok": bool(~sign_mismatch[i, j]),
            }
        )
    return table


def lq_speed_error(
    field_a: medium.SpeedField,
    field_b: medium.SpeedField,
    q: float,
    n: int = 96,
) -> float:
    """||c_a - c_b||_{L^q} over the ball of radius R0, by midpoint lattice."""
    R = field_a.R0
    h = 2.0 * R / n
    ax = -R + (np.arange(n) + 0.5) * h
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    inside = X**2 + Y**2 + Z**2 < R**2
    pts = np.stack([X, Y, Z], axis=-1)
    diff = np.abs(field_a.eval(pts) - field_b.eval(pts))
    return float((np.sum(diff[inside] ** q) * h**3) ** (1.0 / q))


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelinePlan:
    """Concrete grid, shell and windows for one scenario run."""

    grid: Grid
    shell: SensorShell
    moment_window: float  # reflection-free time window for the moments
    record_window: float  # full recorded duration


def plan_pipeline(
    field: medium.SpeedField,
    src: medium.SourceSpec,
    n: int = 128,
    n_sensors: int = 2048,
    moment_window: float | None = None,
    record_window: float | None = None,
    safety: float = 0.9,
    sponge_width: int | None = None,
    sponge_strength: float = 60.0,
) -> PipelinePlan:
    """Size the box so the moment window is free of wall reflections.

    The first reflected arrival at the outer sensor sphere bounds the window:
    the box half-width solves
    (L_f - a_src)/c_max + (L_f - r_outer)/b0 = window + pad.
    """
    R0, b0 = field.R0, field.b0
    if moment_window is None:
        moment_window = 3.0 * R0 / b0
    if record_window is None:
        record_window = max(
            1.12 * 4.0 * R0 * b0 / field.c_min, moment_window
        )
    c_max = field.c_max
    a_src = min(src.support_radius(), field.omega_radius) or 0.3 * R0
    r_in = 1.1 * field.omega_radius

    from .forward import default_sponge_width

    width = default_sponge_width(n) if sponge_width is None else sponge_width

    # iterate: h depends on the box, the box on the sponge thickness and pad
    half = 2.0 * R0
    for _ in range(12):
        h = 2.0 * half / n
        dr = min(2.0 * h, 0.9 * (R0 - r_in))
        r_out = r_in + dr
        pad = 6.0 * h / b0
        free = (moment_window + pad + a_src / c_max + r_out / b0) / (
            1.0 / c_max + 1.0 / b0
        )
        free = max(free, R0 + 4.0 * h)
        half_new = free + width * h
        if abs(half_new - half) < 1e-12:
            break
        half = half_new
    grid = Grid.build(
        n=n,
        half_width=half,
        c_max=c_max,
        duration=record_window,
        safety=safety,
        sponge_width=width,
        sponge_strength=sponge_strength,
    )
    h = grid.h
    dr = min(2.0 * h, 0.9 * (R0 - r_in))
    shell = SensorShell.build(n_sensors, r_in, dr)
    # actual clean window on the final geometry
    free = grid.free_half_width
    clean = (free - a_src) / c_max + (free - shell.r_outer) / b0 - 6.0 * h / b0
    return PipelinePlan(
        grid=grid,
        shell=shell,
        moment_window=min(moment_window, clean),
        record_window=grid.duration,
    )


@dataclass
class ReconstructionReport:
    """Everything one inversion run produced, plus truth comparison if any."""

    B: float = 0.0
    B_spread: float = 0.0
    u0_ratio: float = 0.0
    n_recovered: int = 0
    positions: np.ndarray = dc_field(default_factory=lambda: np.zeros((0, 3)))
    masses: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    speeds: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    hankel_singular_values: list = dc_field(default_factory=list)
    moment_residual: float = 0.0
    f_hat_error: float | None = None
    f_hat_error_true_field: float | None = None
    matching: list = dc_field(default_factory=list)
    stages: list = dc_field(default_factory=list)
    settings: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "B": float(self.B),
            "B_spread": float(self.B_spread),
            "u0_ratio": float(self.u0_ratio),
            "n_recovered": int(self.n_recovered),
            "masses": [
                {
                    "location": [float(v) for v in p],
                    "mass": float(m),
                    "speed": float(s),
                }
                for p, m, s in zip(self.positions, self.masses, self.speeds)
            ],
            "hankel_singular_values": [float(v) for v in self.hankel_singular_values],
            "moment_residual": float(self.moment_residual),
            "stages": list(self.stages),
            "settings": dict(self.settings),
        }
        if self.f_hat_error is not None:
            d["f_hat_error"] = float(self.f_hat_error)
        if self.f_hat_error_true_field is not None:
            d["f_hat_error_true_field"] = float(self.f_hat_error_true_field)
        if self.matching:
            d["matching"] = self.matching
        return d

    def to_text(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def to_csv(self, path):
        """Flat companion: key,value rows plus one row per recovered mass."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("key,value\n")
            d = self.to_dict()
            for key in (
                "B",
                "B_spread",
                "u0_ratio",
                "n_recovered",
                "moment_residual",
                "f_hat_error",
                "f_hat_error_true_field",
            ):
                if key in d:
                    fh.write(f"{key},{d[key]}\n")
            for i, row in enumerate(d.get("masses", [])):
                loc = row["location"]
                fh.write(
                    f"mass_{i},{loc[0]} {loc[1]} {loc[2]} {row['mass']} {row['speed']}\n"
                )
            for row in d.get("matching", []):
                fh.write(
                    f"match_{row['recovered']},{row['reference']} "
                    f"{row['distance']} {row['mass_rel_err']} {row['sign_ok']}\n"
                )


def reconstruct_from_trace(
    trace: BoundaryTrace,
    b0: float,
    R0: float,
    omega_radius: float,
    radius_prior: float,
    moment_window: float | None = None,
    n_maxsources: int = 4,
    rank_tol: float = 5e-3,
    separation_tol: float = 0.05,
    mass_floor: float | None = None,
    tr_grid_n: int = 128,
    tr_horizon: float | None = None,
    reference: tuple[medium.SpeedField, medium.SourceSpec] | None = None,
    compute_source: bool = True,
    constancy_tol: float = 2e-2,
) -> ReconstructionReport:
    """Run every inversion stage from a recorded trace.

    reference, when supplied, adds truth matching and source-error numbers
    (and a second time reversal with the true field).
    """
    report = ReconstructionReport()
    report.settings = {
        "b0": b0,
        "R0": R0,
        "omega_radius": omega_radius,
        "radius_prior": radius_prior,
        "moment_window": moment_window,
        "rank_tol": rank_tol,
        "n_maxsources": n_maxsources,
    }

    stage = "moments"
    try:
        moments = spectra.moments_to_order(trace, 4, t_max=moment_window)
        coeffs = spectra.coeffs_from_moments(moments, trace.shell)
        report.stages.append(stage)

        stage = "recover_B"
        B, spread = recover_B(coeffs, constancy_tol=constancy_tol)
        report.B, report.B_spread = B, spread
        scale1 = max(
            float(np.max(np.abs(coeffs.inner[1]))),
            float(np.max(np.abs(coeffs.outer[1]))),
            1e-300,
        )
        report.u0_ratio = float(
            max(np.max(np.abs(coeffs.inner[0])), np.max(np.abs(coeffs.outer[0])))
            / scale1
        )
        report.stages.append(stage)

        stage = "contrast_moments"
        cauchy4 = coeffs.cauchy_data(4)
        n_ladder = 2 * n_maxsources + 1
        seq = moment_sequence(cauchy4, B, b0, n_ladder)
        report.stages.append(stage)

        stage = "prony_localize"
        if mass_floor is None:
            # masses below a tiny fraction of the background term are noise
            mass_floor = 1e-4 * abs(seq.m[0]) + 1e-12
        masses = prony_localize(
            seq,
            n_maxsources=n_maxsources,
            rank_tol=rank_tol,
            separation_tol=separation_tol,
            mass_floor=mass_floor,
            reframe=lambda R: moment_sequence(cauchy4, B, b0, n_ladder, rotation=R),
        )
        H = hankel(seq.m[: n_maxsources + 1], seq.m[n_maxsources:])
        report.hankel_singular_values = list(np.linalg.svd(H, compute_uv=False).real)
        report.n_recovered = len(masses)
        report.positions = masses.positions
        report.masses = masses.masses
        # ladder residual: recomputed moments of the recovered set vs measured
        if len(masses):
            back = synthetic_moments(masses, seq.n_max)
            report.moment_residual = float(
                np.linalg.norm(back.m - seq.m) / max(np.linalg.norm(seq.m), 1e-300)
            )
        report.stages.append(stage)

        stage = "recover_speeds"
        if len(masses):
            report.speeds = recover_speeds(masses, radius_prior, b0)
        else:
            report.speeds = np.zeros(0)
        report.stages.append(stage)

        stage = "rebuild_field"
        inclusions = tuple(
            medium.BallInclusion(
                center=tuple(p), radius=radius_prior, speed=float(s)
            )
            for p, s in zip(report.positions, report.speeds)
        )
        recovered_field = medium.SpeedField(
            b0=b0, R0=R0, omega_radius=omega_radius, inclusions=inclusions
        )
        report.stages.append(stage)

        if compute_source:
            stage = "time_reversal"
            f_hat, tr_grid = time_reversal(
                trace, recovered_field, n=tr_grid_n, T=tr_horizon
            )
            report.stages.append(stage)
        else:
            f_hat, tr_grid = None, None

        if reference is not None:
            true_field, true_src = reference
            truth = PointMassSet(*true_field.point_masses()) if true_field.inclusions else None
            if truth is not None and len(masses):
                report.matching = match_point_sets(masses, truth)
            if f_hat is not None:
                report.f_hat_error = source_error(
                    f_hat, tr_grid, true_src, omega_radius
                )
                f_hat_true, tr_grid_true = time_reversal(
                    trace, true_field, n=tr_grid_n, T=tr_horizon
                )
                report.f_hat_error_true_field = source_error(
                    f_hat_true, tr_grid_true, true_src, omega_radius
                )
    except Exception as exc:
        exc.stage = stage  # annotate for the CLI
        raise
    return report


def roundtrip(
    field: medium.SpeedField,
    src: medium.SourceSpec,
    n: int = 128,
    n_sensors: int = 2048,
    radius_prior: float | None = None,
    moment_window: float | None = None,
    record_window: float | None = None,
    tr_grid_n: int | None = None,
    rank_tol: float = 5e-3,
    compute_source: bool = True,
) -> tuple[ReconstructionReport, BoundaryTrace, PipelinePlan]:
    """Simulate a scenario and invert it, comparing against the ground truth."""
    report_admiss = medium.check_admissible(field, src)
    if not report_admiss.verdict:
        raise medium.GeometryViolation(
            f"scenario not admissible: {report_admiss.reasons}"
        )
    plan = plan_pipeline(
        field,
        src,
        n=n,
        n_sensors=n_sensors,
        moment_window=moment_window,
        record_window=record_window,
    )
    trace = simulate(field, src, plan.grid, plan.shell)
    if radius_prior is None:
        radius_prior = (
            field.inclusions[0].radius if field.inclusions else 0.1 * field.R0
        )
    report = reconstruct_from_trace(
        trace,
        b0=field.b0,
        R0=field.R0,
        omega_radius=field.omega_radius,
        radius_prior=radius_prior,
        moment_window=plan.moment_window,
        rank_tol=rank_tol,
        tr_grid_n=tr_grid_n if tr_grid_n is not None else n,
        reference=(field, src),
        compute_source=compute_source,
    )
    return report, trace, plan
