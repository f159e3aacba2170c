"""Explicit FDTD solver for c^{-2} u_tt = Lap u on a truncated box.

Second-order leapfrog with the 7-point Laplacian, c^2 sampled sharply at cell
centers, and a quadratic-profile sponge on the outer cells that damps the
update increment by exp(-sigma dt).  The initial condition u(0) = f,
u_t(0) = 0 enters through a half-weight first step, which preserves second
order for the even-in-time solution.

Boundary data is recorded on two concentric Fibonacci-sphere sensor layouts
(inner radius plus a small offset), trilinear-interpolated from the lattice
every step; the pair of spheres supplies the radial-derivative data used
downstream.  A constant-speed spherical-means oracle doubles as an
independent check of the solver.

Trace files use the little-endian "PATR" binary layout: magic, version u32,
sensor count u32, sample count u32, dt f64, sensor coordinates (3 f64 each,
inner sphere then outer), then row-major [time][sensor] f64 blocks for the
inner and outer values.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import medium
from .errors import FormatError, NumericBlowup, SensorOutsideGrid
from .quadrature import fibonacci_sphere

__all__ = [
    "cfl_timestep",
    "Grid",
    "SensorShell",
    "WaveState",
    "BoundaryTrace",
    "step",
    "simulate",
    "energy",
    "kirchhoff_oracle",
    "kirchhoff_trace",
    "sponge_reflection_1d",
]

BLOWUP_FACTOR = 1e6
_MAGIC = b"PATR"
_VERSION = 1


def cfl_timestep(h: float, c_max: float, safety: float = 0.9) -> float:
    """Stable time step for the 3D 7-point scheme: safety * h / (sqrt(3) c_max)."""
    if c_max <= 0:
        raise ValueError("c_max must be positive")
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    return safety * h / (np.sqrt(3.0) * c_max)


def default_sponge_width(n: int) -> int:
    # keeps the physical sponge thickness roughly constant across n=64..128 pairs
    return max(8, n // 8)


@dataclass(frozen=True)
class Grid:
    """Uniform n^3 lattice of cell centers on [-half_width, half_width]^3."""

    n: int
    half_width: float
    dt: float
    steps: int
    sponge_width: int = 0
    sponge_strength: float = 60.0

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def free_half_width(self) -> float:
        """Half-width of the sponge-free interior region."""
        return self.half_width - self.sponge_width * self.h

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n) + 0.5) * self.h

    @property
    def axes(self):
        ax = self.axis
        return (ax, ax, ax)

    @property
    def duration(self) -> float:
        return self.steps * self.dt

    @classmethod
    def build(
        cls,
        n: int,
        half_width: float,
        c_max: float,
        duration: float,
        safety: float = 0.9,
        sponge_width: int | None = None,
        sponge_strength: float = 60.0,
    ) -> "Grid":
        if sponge_width is None:
            sponge_width = default_sponge_width(n)
        h = 2.0 * half_width / n
        dt = cfl_timestep(h, c_max, safety)
        steps = int(np.ceil(duration / dt))
        if steps % 2 == 1:
            steps += 1  # odd sample count keeps Simpson panels exact
        return cls(
            n=n,
            half_width=half_width,
            dt=dt,
            steps=steps,
            sponge_width=sponge_width,
            sponge_strength=sponge_strength,
        )

    def sponge_sigma(self) -> np.ndarray | None:
        """Quadratic damping profile, zero in the interior."""
        if self.sponge_width <= 0:
            return None
        ax = np.abs(self.axis)
        depth = ax - self.free_half_width
        ramp = np.clip(depth / (self.sponge_width * self.h), 0.0, 1.0)
        rx = ramp[:, None, None]
        ry = ramp[None, :, None]
        rz = ramp[None, None, :]
        r = np.maximum(np.maximum(rx, ry), rz)
        return self.sponge_strength * r**2


@dataclass(frozen=True)
class SensorShell:
    """Sensors on two concentric Fibonacci spheres sharing one direction set."""

    r_inner: float
    r_outer: float
    directions: np.ndarray  # (N, 3) unit vectors

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        object.__setattr__(self, "directions", d)
        if not (0 < self.r_inner < self.r_outer):
            raise ValueError("need 0 < r_inner < r_outer")

    @classmethod
    def build(cls, n_sensors: int, r_inner: float, dr: float) -> "SensorShell":
        return cls(
            r_inner=r_inner,
            r_outer=r_inner + dr,
            directions=fibonacci_sphere(n_sensors),
        )

    @property
    def n_sensors(self) -> int:
        return self.directions.shape[0]

    @property
    def dr(self) -> float:
        return self.r_outer - self.r_inner

    @property
    def points_inner(self) -> np.ndarray:
        return self.r_inner * self.directions

    @property
    def points_outer(self) -> np.ndarray:
        return self.r_outer * self.directions


@dataclass(frozen=True)
class WaveState:
    """Two pressure lattices plus the squared-speed lattice."""

    u_prev: np.ndarray
    u_curr: np.ndarray
    c2: np.ndarray
    index: int = 0

    def __post_init__(self):
        if not (self.u_prev.shape == self.u_curr.shape == self.c2.shape):
            raise ValueError("lattices must share one shape")


def _neighbor_sum(u: np.ndarray, out: np.ndarray):
    """out = sum of the six face neighbors of u, zero outside the box."""
    np.multiply(u, 0.0, out=out)
    out[1:, :, :] += u[:-1, :, :]
    out[:-1, :, :] += u[1:, :, :]
    out[:, 1:, :] += u[:, :-1, :]
    out[:, :-1, :] += u[:, 1:, :]
    out[:, :, 1:] += u[:, :, :-1]
    out[:, :, :-1] += u[:, :, 1:]


def _leapfrog(u_prev, u_curr, coef, damp, out):
    """out = leapfrog update of the (possibly damped) wave equation.

    damp is None outside a sponge; otherwise the pair (f_minus, f_inv) with
    f_minus = 1 - sigma dt / 2 and f_inv = 1 / (1 + sigma dt / 2), the
    implicit discretization of the friction term sigma u_t.  Damping the
    update increment directly would rescale the effective wave speed at
    useful sigma levels and reflect instead of absorb.
    """
    _neighbor_sum(u_curr, out)
    out -= 6.0 * u_curr
    out *= coef
    out += 2.0 * u_curr
    if damp is None:
        out -= u_prev
    else:
        f_minus, f_inv = damp
        out -= f_minus * u_prev
        out *= f_inv


def _friction_factors(sigma: np.ndarray | None, dt: float):
    if sigma is None:
        return None
    half = 0.5 * sigma * dt
    return (1.0 - half, 1.0 / (1.0 + half))


def step(state: WaveState, grid: Grid) -> WaveState:
    """One leapfrog step; index 0 uses the half-weight start for u_t(0) = 0."""
    coef = state.c2 * (grid.dt / grid.h) ** 2
    damp = _friction_factors(grid.sponge_sigma(), grid.dt)
    out = np.empty_like(state.u_curr)
    if state.index == 0:
        # u1 = u0 + (dt^2 c^2 / 2) lap u0; friction moot while u_t = 0
        _neighbor_sum(state.u_curr, out)
        out -= 6.0 * state.u_curr
        out *= 0.5 * coef
        out += state.u_curr
    else:
        _leapfrog(state.u_prev, state.u_curr, coef, damp, out)
    peak = float(np.max(np.abs(out)))
    if not np.isfinite(peak):
        raise NumericBlowup("non-finite field value")
    return WaveState(u_prev=state.u_curr, u_curr=out, c2=state.c2, index=state.index + 1)


class _TrilinearSampler:
    """Precomputed trilinear gather for a fixed point set on a grid."""

    def __init__(self, grid: Grid, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = (pts + grid.half_width) / grid.h - 0.5
        i0 = np.floor(s).astype(np.int64)
        frac = s - i0
        if np.any(i0 < 0) or np.any(i0 + 1 > grid.n - 1):
            raise SensorOutsideGrid("sensor point outside the interpolable region")
        n = grid.n
        self._flat = []
        self._w = []
        for dx in (0, 1):
            wx = np.where(dx == 1, frac[:, 0], 1.0 - frac[:, 0])
            for dy in (0, 1):
                wy = np.where(dy == 1, frac[:, 1], 1.0 - frac[:, 1])
                for dz in (0, 1):
                    wz = np.where(dz == 1, frac[:, 2], 1.0 - frac[:, 2])
                    idx = ((i0[:, 0] + dx) * n + (i0[:, 1] + dy)) * n + (i0[:, 2] + dz)
                    self._flat.append(idx)
                    self._w.append(wx * wy * wz)

    def sample(self, u: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1)
        out = self._w[0] * flat[self._flat[0]]
        for idx, w in zip(self._flat[1:], self._w[1:]):
            out += w * flat[idx]
        return out


class _TriquadraticSampler:
    """27-point quadratic-Lagrange gather; exact on quadratic fields.

    The series coefficients extracted downstream have a background part that
    is a polynomial of degree two in space, so quadratic interpolation keeps
    the sensor sampling from limiting the contrast functionals.
    """

    def __init__(self, grid: Grid, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = (pts + grid.half_width) / grid.h - 0.5
        ic = np.rint(s).astype(np.int64)  # nearest cell center
        if np.any(ic < 1) or np.any(ic > grid.n - 2):
            raise SensorOutsideGrid("sensor point outside the interpolable region")
        t = s - ic  # in [-1/2, 1/2]
        n = grid.n
        # Lagrange basis on offsets -1, 0, +1
        def basis(tv):
            return (0.5 * tv * (tv - 1.0), (1.0 - tv) * (1.0 + tv), 0.5 * tv * (tv + 1.0))

        bx = basis(t[:, 0])
        by = basis(t[:, 1])
        bz = basis(t[:, 2])
        self._flat = []
        self._w = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    idx = ((ic[:, 0] + dx) * n + (ic[:, 1] + dy)) * n + (ic[:, 2] + dz)
                    self._flat.append(idx)
                    self._w.append(bx[dx + 1] * by[dy + 1] * bz[dz + 1])

    def sample(self, u: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1)
        out = self._w[0] * flat[self._flat[0]]
        for idx, w in zip(self._flat[1:], self._w[1:]):
            out += w * flat[idx]
        return out


@dataclass
class BoundaryTrace:
    """Time-sampled field values on both sensor spheres."""

    dt: float
    shell: SensorShell
    inner: np.ndarray  # (samples, N)
    outer: np.ndarray  # (samples, N)

    @property
    def n_samples(self) -> int:
        return self.inner.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_samples - 1)

    def radial_derivative(self) -> np.ndarray:
        """(outer - inner) / dr, second-order at the midpoint sphere."""
        return (self.outer - self.inner) / self.shell.dr

    def rms(self) -> float:
        stacked = np.concatenate([self.inner.ravel(), self.outer.ravel()])
        return float(np.sqrt(np.mean(stacked**2)))

    def scaled(self, factor: float) -> "BoundaryTrace":
        return BoundaryTrace(
            dt=self.dt,
            shell=self.shell,
            inner=factor * self.inner,
            outer=factor * self.outer,
        )

    # -- PATR binary format ------------------------------------------------

    def to_bytes(self) -> bytes:
        n = self.shell.n_sensors
        samples = self.n_samples
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<II", _VERSION, n))
        buf.write(struct.pack("<I", samples))
        buf.write(struct.pack("<d", self.dt))
        coords = np.concatenate(
            [self.shell.points_inner, self.shell.points_outer], axis=0
        ).astype("<f8")
        buf.write(coords.tobytes())
        buf.write(np.ascontiguousarray(self.inner, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.outer, dtype="<f8").tobytes())
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BoundaryTrace":
        def need(offset, count, what):
            if len(raw) < offset + count:
                raise FormatError(
                    f"trace file truncated at byte {len(raw)} "
                    f"(needed {offset + count} for {what})",
                    offset=len(raw),
                )

        need(0, 4, "magic")
        if raw[:4] != _MAGIC:
            raise FormatError("bad magic, not a PATR trace", offset=0)
        need(4, 12, "header")
        version, n = struct.unpack_from("<II", raw, 4)
        if version != _VERSION:
            raise FormatError(f"unsupported version {version}", offset=4)
        (samples,) = struct.unpack_from("<I", raw, 12)
        (dt,) = struct.unpack_from("<d", raw, 16)
        off = 24
        need(off, 2 * n * 3 * 8, "sensor coordinates")
        coords = np.frombuffer(raw, dtype="<f8", count=2 * n * 3, offset=off).reshape(
            2 * n, 3
        )
        off += 2 * n * 3 * 8
        need(off, samples * n * 8, "inner data block")
        inner = np.frombuffer(raw, dtype="<f8", count=samples * n, offset=off).reshape(
            samples, n
        )
        off += samples * n * 8
        need(off, samples * n * 8, "outer data block")
        outer = np.frombuffer(raw, dtype="<f8", count=samples * n, offset=off).reshape(
            samples, n
        )
        pin, pout = coords[:n], coords[n:]
        r_in = float(np.linalg.norm(pin[0]))
        r_out = float(np.linalg.norm(pout[0]))
        shell = SensorShell(r_inner=r_in, r_outer=r_out, directions=pin / r_in)
        return cls(dt=dt, shell=shell, inner=inner.copy(), outer=outer.copy())

    @classmethod
    def load(cls, path) -> "BoundaryTrace":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        """One row per time step: t, inner values, outer values."""
        n = self.shell.n_sensors
        header = ["t"]
        header += [f"inner_{i}" for i in range(n)]
        header += [f"outer_{i}" for i in range(n)]
        data = np.column_stack([self.times, self.inner, self.outer])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def simulate(
    field: medium.SpeedField,
    src: medium.SourceSpec,
    grid: Grid,
    shell: SensorShell,
    check_every: int = 16,
) -> BoundaryTrace:
    """Run the scheme for grid.steps steps, recording both sensor spheres."""
    c = medium.sample_speed(field, grid.axes)
    f0 = medium.sample_source(src, grid.axes)
    coef = (c * grid.dt / grid.h) ** 2
    damp = _friction_factors(grid.sponge_sigma(), grid.dt)

    sampler_in = _TriquadraticSampler(grid, shell.points_inner)
    sampler_out = _TriquadraticSampler(grid, shell.points_outer)

    samples = grid.steps + 1
    inner = np.empty((samples, shell.n_sensors))
    outer = np.empty((samples, shell.n_sensors))

    u_prev = f0.copy()
    u_curr = f0.copy()
    scratch = np.empty_like(f0)
    inner[0] = sampler_in.sample(u_curr)
    outer[0] = sampler_out.sample(u_curr)

    peak0 = float(np.max(np.abs(f0)))
    guard = BLOWUP_FACTOR * max(peak0, 1e-300)

    # half-weight first step encodes u_t(0) = 0
    _neighbor_sum(u_curr, scratch)
    scratch -= 6.0 * u_curr
    scratch *= 0.5 * coef
    scratch += u_curr
    u_prev, u_curr, scratch = u_curr, scratch, u_prev
    inner[1] = sampler_in.sample(u_curr)
    outer[1] = sampler_out.sample(u_curr)

    for k in range(2, samples):
        _leapfrog(u_prev, u_curr, coef, damp, scratch)
        u_prev, u_curr, scratch = u_curr, scratch, u_prev
        inner[k] = sampler_in.sample(u_curr)
        outer[k] = sampler_out.sample(u_curr)
        if k % check_every == 0:
            peak = float(np.max(np.abs(u_curr)))
            if not np.isfinite(peak) or peak > guard:
                raise NumericBlowup(f"field amplitude {peak:.3e} at step {k}")

    return BoundaryTrace(dt=grid.dt, shell=shell, inner=inner, outer=outer)


def final_state(
    field: medium.SpeedField, src: medium.SourceSpec, grid: Grid
) -> WaveState:
    """Propagate to grid.steps and return the last state (diagnostics)."""
    c = medium.sample_speed(field, grid.axes)
    state = WaveState(
        u_prev=medium.sample_source(src, grid.axes),
        u_curr=medium.sample_source(src, grid.axes),
        c2=c**2,
    )
    for _ in range(grid.steps):
        state = step(state, grid)
    return state


def energy(state: WaveState, grid: Grid) -> float:
    """Discrete energy: sum of c^-2 v^2 + |grad u_half|^2 over cells."""
    v = (state.u_curr - state.u_prev) / grid.dt
    u_half = 0.5 * (state.u_curr + state.u_prev)
    e = np.sum(v**2 / state.c2)
    for axis in range(3):
        d = np.diff(u_half, axis=axis) / grid.h
        e += np.sum(d**2)
    return float(e * grid.h**3)


# ---------------------------------------------------------------------------
# Constant-speed spherical-means oracle
# ---------------------------------------------------------------------------


def _spherical_mean(src: medium.SourceSpec, x: np.ndarray, radius, nodes: np.ndarray):
    """Mean of the source over spheres of given radii about points x."""
    radius = np.asarray(radius, dtype=float)
    pts = x[..., None, :] + radius[..., None, None] * nodes
    return np.mean(src.eval(pts), axis=-1)


def kirchhoff_oracle(
    src: medium.SourceSpec,
    x,
    t: float,
    b0: float,
    n_nodes: int = 512,
    dt_diff: float | None = None,
) -> float:
    """Constant-speed solution d/dt [ t M_{b0 t} f ](x) at one point and time.

    The time derivative is taken by central differencing of the (odd in t)
    map t -> t M_{b0 t} f(x).
    """
    x = np.asarray(x, dtype=float).reshape(3)
    nodes = fibonacci_sphere(n_nodes)
    if dt_diff is None:
        rho = min((b.rho for b in src.bumps), default=1.0)
        dt_diff = 1e-3 * rho / b0
    tp, tm = t + dt_diff, t - dt_diff

    def g(tv):
        sign = 1.0 if tv >= 0 else -1.0
        return sign * tv * float(_spherical_mean(src, x[None, :], abs(tv) * b0, nodes)[0])

    return (g(tp) - g(tm)) / (2.0 * dt_diff)


def kirchhoff_trace(
    src: medium.SourceSpec,
    points: np.ndarray,
    times: np.ndarray,
    b0: float,
    n_nodes: int = 512,
    dt_diff: float | None = None,
) -> np.ndarray:
    """Oracle solution on a point set for a vector of times, shape (T, N)."""
    points = np.atleast_2d(points)
    nodes = fibonacci_sphere(n_nodes)
    if dt_diff is None:
        rho = min((b.rho for b in src.bumps), default=1.0)
        dt_diff = 1e-3 * rho / b0
    out = np.empty((len(times), points.shape[0]))

    def g(tv):
        tv = float(tv)
        sign = 1.0 if tv >= 0 else -1.0
        return sign * tv * _spherical_mean(src, points, abs(tv) * b0, nodes)

    for i, t in enumerate(times):
        out[i] = (g(t + dt_diff) - g(t - dt_diff)) / (2.0 * dt_diff)
    return out


def sponge_reflection_1d(grid: Grid, c: float) -> float:
    """Measured amplitude reflection of the sponge profile in a 1D analogue.

    Runs a right-going pulse into a sponge with the same h, dt, width and
    strength, and reports max returning amplitude over outgoing amplitude.
    """
    if grid.sponge_width <= 0:
        return 1.0  # hard wall
    h, dt = grid.h, grid.dt
    width = grid.sponge_width
    n_free = 320  # free cells before the sponge
    n = n_free + width
    x = np.arange(n) * h
    ramp = np.clip((x - x[n_free - 1]) / (width * h), 0.0, 1.0)
    sigma = grid.sponge_strength * ramp**2
    f_minus = 1.0 - 0.5 * sigma * dt
    f_inv = 1.0 / (1.0 + 0.5 * sigma * dt)
    lam = (c * dt / h) ** 2

    x0 = x[n_free // 2]
    w = 8 * h
    # zero-mean pulse: 3D outgoing waves carry no zero-frequency content
    pulse = lambda z: -(z - x0) / w * np.exp(-((z - x0) ** 2) / (2 * w**2))
    u_prev = pulse(x)
    u_curr = pulse(x - c * dt)  # right-going d'Alembert start

    probe = int(n_free * 0.75)
    pass_time = (x[n_free - 1] - x[probe] + 6 * w) / c
    total_time = pass_time + 2.0 * (width * h + x[n_free - 1] - x[probe]) / c
    steps = int(total_time / dt)
    outgoing = 0.0
    returning = 0.0
    for k in range(steps):
        u_next = np.empty_like(u_curr)
        u_next[1:-1] = (
            2.0 * u_curr[1:-1]
            + lam * (u_curr[2:] - 2.0 * u_curr[1:-1] + u_curr[:-2])
            - f_minus[1:-1] * u_prev[1:-1]
        ) * f_inv[1:-1]
        u_next[0] = 0.0
        u_next[-1] = 0.0
        u_prev, u_curr = u_curr, u_next
        amp = abs(u_curr[probe])
        if k * dt < pass_time:
            outgoing = max(outgoing, amp)
        else:
            returning = max(returning, amp)
    return returning / max(outgoing, 1e-300)
