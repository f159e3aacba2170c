"""CLI and run orchestration: configs, manifests, noise, stability sweeps.

Subcommands: simulate, reconstruct, sweep, oracle-check, export-csv.
Exit codes: 2 config/format error, 3 admissibility failure, 4 numeric
failure, 5 reconstruction stage failure, 1 failed oracle check.

Determinism contract: identical config and seed produce byte-identical
traces, reports and sweep curves; manifests carry timings and are exempt.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from . import medium, recon, spectra
from .errors import (
    ConfigError,
    FormatError,
    GeometryViolation,
    NumericBlowup,
    PaspeedError,
)
from .forward import BoundaryTrace, simulate, sponge_reflection_1d
from .version import __version__

__all__ = [
    "add_noise",
    "scenario_hash",
    "RunManifest",
    "StabilityCurve",
    "run_simulate",
    "run_reconstruct",
    "run_sweep",
    "run_oracle_check",
    "main",
]

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_ADMISSIBILITY = 3
EXIT_NUMERIC = 4
EXIT_STAGE = 5


def add_noise(trace: BoundaryTrace, eps: float, seed: int) -> BoundaryTrace:
    """Add zero-mean Gaussian noise with std eps * RMS(trace) to every value."""
    if eps < 0:
        raise ValueError("noise level must be non-negative")
    if eps == 0.0:
        return trace
    rng = np.random.default_rng(seed)
    sigma = eps * trace.rms()
    inner = trace.inner + sigma * rng.standard_normal(trace.inner.shape)
    outer = trace.outer + sigma * rng.standard_normal(trace.outer.shape)
    return BoundaryTrace(dt=trace.dt, shell=trace.shell, inner=inner, outer=outer)


def scenario_hash(doc: dict) -> str:
    """Hash of the canonical JSON form; stable under key reordering."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _atomic_write_bytes(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str):
    _atomic_write_bytes(path, text.encode())


@dataclass
class RunManifest:
    scenario_hash: str
    seed: int
    parameters: dict = dc_field(default_factory=dict)
    timings: dict = dc_field(default_factory=dict)
    artifacts: dict = dc_field(default_factory=dict)
    tool: str = "paspeed"
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "version": self.version,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "parameters": self.parameters,
            "timings": self.timings,
            "artifacts": self.artifacts,
        }

    def save(self, path):
        _atomic_write_text(Path(path), json.dumps(self.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def run_simulate(
    config_path,
    out_dir,
    grid_n: int = 128,
    n_sensors: int = 512,
    seed: int = 0,
    noise: float = 0.0,
    moment_window: float | None = None,
    record_window: float | None = None,
) -> RunManifest:
    """Parse, check admissibility, simulate, write trace + manifest."""
    t0 = time.perf_counter()
    field, src = medium.load_scenario(config_path)
    report = medium.check_admissible(field, src)
    if not report.verdict:
        raise GeometryViolation("; ".join(report.reasons))
    plan = recon.plan_pipeline(
        field,
        src,
        n=grid_n,
        n_sensors=n_sensors,
        moment_window=moment_window,
        record_window=record_window,
    )
    t1 = time.perf_counter()
    trace = simulate(field, src, plan.grid, plan.shell)
    if noise > 0:
        trace = add_noise(trace, noise, seed)
    t2 = time.perf_counter()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.patr"
    _atomic_write_bytes(trace_path, trace.to_bytes())

    with open(config_path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    manifest = RunManifest(
        scenario_hash=scenario_hash(doc),
        seed=seed,
        parameters={
            "grid_n": grid_n,
            "n_sensors": n_sensors,
            "noise": noise,
            "half_width": plan.grid.half_width,
            "dt": plan.grid.dt,
            "steps": plan.grid.steps,
            "sponge_width": plan.grid.sponge_width,
            "sponge_strength": plan.grid.sponge_strength,
            "moment_window": plan.moment_window,
            "record_window": plan.record_window,
            "r_inner": plan.shell.r_inner,
            "r_outer": plan.shell.r_outer,
            "sponge_reflection": sponge_reflection_1d(plan.grid, field.b0),
        },
        timings={
            "setup_s": t1 - t0,
            "simulate_s": t2 - t1,
        },
        artifacts={"trace": str(trace_path)},
    )
    manifest.save(out / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------


def run_reconstruct(
    trace_path,
    out_dir,
    b0: float = 1.0,
    R0: float = 1.0,
    omega_radius: float = 0.8,
    radius_prior: float = 0.2,
    moment_window: float | None = None,
    tr_grid_n: int = 128,
    rank_tol: float = 5e-3,
    config_path=None,
    figures: bool = True,
    compute_source: bool = True,
) -> recon.ReconstructionReport:
    """Invert a stored trace; writes report.yaml, report.csv and figures."""
    trace = BoundaryTrace.load(trace_path)
    reference = None
    if config_path is not None:
        reference = medium.load_scenario(config_path)
        b0 = reference[0].b0
        R0 = reference[0].R0
        omega_radius = reference[0].omega_radius
    if moment_window is None:
        manifest_path = Path(trace_path).with_name("manifest.json")
        if manifest_path.exists():
            with open(manifest_path, "r", encoding="utf-8") as fh:
                moment_window = json.load(fh)["parameters"].get("moment_window")
    t0 = time.perf_counter()
    report = recon.reconstruct_from_trace(
        trace,
        b0=b0,
        R0=R0,
        omega_radius=omega_radius,
        radius_prior=radius_prior,
        moment_window=moment_window,
        rank_tol=rank_tol,
        tr_grid_n=tr_grid_n,
        reference=reference,
        compute_source=compute_source,
    )
    elapsed = time.perf_counter() - t0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out / "report.yaml", report.to_text())
    report.to_csv(out / "report.csv")
    manifest = RunManifest(
        scenario_hash="",
        seed=0,
        parameters=dict(report.settings),
        timings={"reconstruct_s": elapsed},
        artifacts={
            "report": str(out / "report.yaml"),
            "report_csv": str(out / "report.csv"),
        },
    )
    manifest.save(out / "manifest.json")
    if figures:
        from . import figures as figmod

        figmod.render_reconstruction(report, out / "report.png")
    return report


# ---------------------------------------------------------------------------
# stability sweep
# ---------------------------------------------------------------------------


@dataclass
class StabilityCurve:
    """Noise sweep results and fitted log-log slopes."""

    rows: list = dc_field(default_factory=list)
    slopes: dict = dc_field(default_factory=dict)
    q_values: tuple = (1, 2, 4)
    s_param: float = 0.25
    seed_base: int = 0

    def to_csv_text(self) -> str:
        cols = [
            "noise",
            "seed",
            "discrepancy",
            "center_error",
            "speed_error",
        ]
        cols += [f"lq_error_q{q:g}" for q in self.q_values]
        cols += ["f_hat_error"]
        lines = [",".join(cols)]
        for row in self.rows:
            vals = [format(row[c], ".17g") if c != "seed" else str(row[c]) for c in cols]
            lines.append(",".join(vals))
        lines.append("")
        for name, fit in self.slopes.items():
            lines.append(
                f"# slope {name}: {fit['slope']:.6g} +/- {fit['stderr']:.3g} "
                f"(n={fit['points']})"
            )
        return "\n".join(lines) + "\n"

    def save(self, path):
        _atomic_write_text(Path(path), self.to_csv_text())


def _data_discrepancy(
    coeffs_a: spectra.SeriesCoefficients, coeffs_b: spectra.SeriesCoefficients
) -> float:
    """Sensor-L2 sums of u^(2k) and conormal differences, k = 1, 2."""
    total = 0.0
    for k in (2, 4):
        ca, cb = coeffs_a.cauchy_data(k), coeffs_b.cauchy_data(k)
        for fa, fb in ((ca.g, cb.g), (ca.g_nu, cb.g_nu)):
            total += float(np.sqrt(np.sum(ca.weights * (fa - fb) ** 2)))
    return total


def _sweep_point(args):
    (
        trace,
        clean_coeffs,
        eps,
        seed,
        field,
        src,
        radius_prior,
        moment_window,
        q_values,
        tr_grid_n,
        rank_tol,
    ) = args
    noisy = add_noise(trace, eps, seed)
    coeffs = spectra.coeffs_from_moments(
        spectra.moments_to_order(noisy, 4, t_max=moment_window), noisy.shell
    )
    disc = _data_discrepancy(clean_coeffs, coeffs)
    report = recon.reconstruct_from_trace(
        noisy,
        b0=field.b0,
        R0=field.R0,
        omega_radius=field.omega_radius,
        radius_prior=radius_prior,
        moment_window=moment_window,
        rank_tol=rank_tol,
        tr_grid_n=tr_grid_n,
        reference=(field, src),
        compute_source=True,
    )
    true_pos, true_mass = field.point_masses()
    center_err = float("nan")
    speed_err = float("nan")
    if report.matching:
        center_err = float(np.mean([m["distance"] for m in report.matching]))
        true_speeds = {  # reference index -> true speed
            i: inc.speed for i, inc in enumerate(field.inclusions)
        }
        errs = []
        for m in report.matching:
            j = m["reference"]
            if j in true_speeds:
                errs.append(
                    abs(report.speeds[m["recovered"]] - true_speeds[j])
                    / true_speeds[j]
                )
        if errs:
            speed_err = float(np.mean(errs))
    rec_field = medium.SpeedField(
        b0=field.b0,
        R0=field.R0,
        omega_radius=field.omega_radius,
        inclusions=tuple(
            medium.BallInclusion(center=tuple(p), radius=radius_prior, speed=float(s))
            for p, s in zip(report.positions, report.speeds)
        ),
    )
    lq = {q: recon.lq_speed_error(field, rec_field, q) for q in q_values}
    row = {
        "noise": eps,
        "seed": seed,
        "discrepancy": disc,
        "center_error": center_err,
        "speed_error": speed_err,
        "f_hat_error": report.f_hat_error if report.f_hat_error is not None else float("nan"),
    }
    for q in q_values:
        row[f"lq_error_q{q:g}"] = lq[q]
    return row


def _fit_slope(xs: np.ndarray, ys: np.ndarray) -> dict:
    """Least-squares slope of log y against log x with its standard error."""
    mask = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    xs, ys = np.log(xs[mask]), np.log(ys[mask])
    n = xs.size
    if n < 2:
        return {"slope": float("nan"), "stderr": float("nan"), "points": int(n)}
    A = np.column_stack([xs, np.ones(n)])
    coef, res, _, _ = np.linalg.lstsq(A, ys, rcond=None)
    if n > 2 and res.size:
        s2 = float(res[0]) / (n - 2)
        cov = s2 * np.linalg.inv(A.T @ A)
        stderr = float(np.sqrt(cov[0, 0]))
    else:
        stderr = 0.0
    return {"slope": float(coef[0]), "stderr": stderr, "points": int(n)}


def run_sweep(
    config_path,
    out_dir,
    noise_levels=(0.005, 0.015, 0.05, 0.15),
    n_seeds: int = 5,
    q_values=(1, 2, 4),
    s_param: float = 0.25,
    grid_n: int = 96,
    n_sensors: int = 2048,
    radius_prior: float | None = None,
    threads: int = 1,
    seed_base: int = 0,
    figures: bool = True,
    rank_tol: float = 5e-3,
) -> StabilityCurve:
    """Noise sweep with per-point reconstructions and log-log slope fits."""
    if len(noise_levels) < 4:
        raise ConfigError("need at least four noise levels for slope fits")
    field, src = medium.load_scenario(config_path)
    admiss = medium.check_admissible(field, src)
    if not admiss.verdict:
        raise GeometryViolation("; ".join(admiss.reasons))
    if radius_prior is None:
        radius_prior = field.inclusions[0].radius if field.inclusions else 0.1 * field.R0

    plan = recon.plan_pipeline(field, src, n=grid_n, n_sensors=n_sensors)
    trace = simulate(field, src, plan.grid, plan.shell)
    clean_coeffs = spectra.coeffs_from_moments(
        spectra.moments_to_order(trace, 4, t_max=plan.moment_window), trace.shell
    )

    # noiseless floor once, then one point per (level, seed)
    jobs = [
        (
            trace,
            clean_coeffs,
            0.0,
            seed_base,
            field,
            src,
            radius_prior,
            plan.moment_window,
            tuple(q_values),
            grid_n,
            rank_tol,
        )
    ]
    for eps in noise_levels:
        for s in range(n_seeds):
            jobs.append(
                (
                    trace,
                    clean_coeffs,
                    float(eps),
                    seed_base + 1000 * s + 17,
                    field,
                    src,
                    radius_prior,
                    plan.moment_window,
                    tuple(q_values),
                    grid_n,
                    rank_tol,
                )
            )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    rows.sort(key=lambda r: (r["noise"], r["seed"]))

    floor_row = next(r for r in rows if r["noise"] == 0.0)
    noisy_rows = [r for r in rows if r["noise"] > 0.0]

    curve = StabilityCurve(
        rows=rows, q_values=tuple(q_values), s_param=s_param, seed_base=seed_base
    )

    def fit(metric):
        floor = floor_row[metric]
        pts = [
            r
            for r in noisy_rows
            if np.isfinite(r[metric]) and r[metric] > 2.0 * floor
        ]
        xs = np.array([r["discrepancy"] for r in pts])
        ys = np.array([r[metric] for r in pts])
        return _fit_slope(xs, ys)

    curve.slopes["center_error"] = fit("center_error")
    curve.slopes["speed_error"] = fit("speed_error")
    for q in q_values:
        curve.slopes[f"lq_error_q{q:g}"] = fit(f"lq_error_q{q:g}")
    curve.slopes["f_hat_error"] = fit("f_hat_error")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve.save(out / "stability_curve.csv")
    if figures:
        from . import figures as figmod

        figmod.render_curve(curve, out / "stability_curve.png")
    return curve


# ---------------------------------------------------------------------------
# oracle-check
# ---------------------------------------------------------------------------


def run_oracle_check(config_path, grid_n: int = 64, corrupt_u2: bool = False) -> list:
    """Reduced-scale invariant suite; returns [(name, measured, tol, ok), ...].

    corrupt_u2 is a fault-injection hook used by tests: it flips the sign of
    the outer-sphere u^(2) values before the constancy check.
    """
    from . import elliptic
    from .forward import kirchhoff_trace

    field, src = medium.load_scenario(config_path)
    admiss = medium.check_admissible(field, src)
    if not admiss.verdict:
        raise GeometryViolation("; ".join(admiss.reasons))

    checks = []
    plan = recon.plan_pipeline(field, src, n=grid_n, n_sensors=512)
    trace = simulate(field, src, plan.grid, plan.shell)
    coeffs = spectra.coeffs_from_moments(
        spectra.moments_to_order(trace, 4, t_max=plan.moment_window), trace.shell
    )
    if corrupt_u2:
        coeffs.outer[2] *= -1.0

    homogeneous = not field.inclusions
    if homogeneous:
        # solver vs spherical-means oracle over the early window
        m = min(trace.n_samples, int(2.0 * field.R0 / field.b0 / trace.dt))
        times = trace.times[:m]
        oracle = kirchhoff_trace(src, plan.shell.points_inner, times, field.b0)
        err = float(
            np.linalg.norm(trace.inner[:m] - oracle) / np.linalg.norm(oracle)
        )
        checks.append(("kirchhoff_trace_rel_l2", err, 0.05, err < 0.05))

    u0 = coeffs.u0_flag(tol=1e-2)
    scale1 = max(np.max(np.abs(coeffs.inner[1])), np.max(np.abs(coeffs.outer[1])))
    ratio = float(
        max(np.max(np.abs(coeffs.inner[0])), np.max(np.abs(coeffs.outer[0]))) / scale1
    )
    checks.append(("u0_over_u1", ratio, 1e-2, u0))

    mean, spread = coeffs.u2_constancy()
    checks.append(("u2_constancy_spread", spread, 2e-2, spread < 2e-2))

    try:
        B, _ = recon.recover_B(coeffs)
        b_oracle = medium.source_integral_quadrature(field, src, n=128) / (
            4.0 * np.pi * field.b0
        )
        b_err = abs(B - b_oracle) / abs(b_oracle)
        checks.append(("B_vs_quadrature", b_err, 0.03, b_err < 0.03))
    except PaspeedError as exc:
        checks.append((f"recover_B ({exc.__class__.__name__})", float("nan"), 0.0, False))

    # cross-route agreement at one frequency
    delta = spectra.default_delta_fit(field.b0, field.R0)
    p = 0.5 * delta
    lap = spectra.laplace_at(trace, p, t_max=plan.moment_window)
    ell = spectra.elliptic_frequency_oracle(
        field, src, p, plan.shell, n=64, half_width=2.0
    )
    rel = float(np.linalg.norm(lap - ell) / np.linalg.norm(ell))
    checks.append(("laplace_vs_elliptic_rel", rel, 0.02, rel < 0.02))

    # synthetic point-source identity suite
    masses = elliptic.PointMassSet(
        positions=np.array([[0.25, 0.1, -0.05], [-0.3, -0.15, 0.2]]),
        masses=np.array([2.0, -1.0]),
    )
    data = elliptic.CauchyData.from_point_sources(
        masses, R_ball=field.R0, radius=0.9 * field.R0, n_sensors=512
    )
    worst = 0.0
    for phi in elliptic.standard_library():
        F = elliptic.green_identity_functional(data, phi)
        exact = complex(np.sum(masses.masses * phi.eval(masses.positions)))
        scale = max(abs(exact), float(np.sum(np.abs(masses.masses))))
        worst = max(worst, abs(F - exact) / scale)
    checks.append(("green_identity_worst_rel", worst, 5e-3, worst < 5e-3))

    seq = recon.synthetic_moments(masses, 9)
    rec = recon.prony_localize(seq, n_maxsources=4, rank_tol=1e-10)
    match = recon.match_point_sets(rec, masses)
    prony_err = max(max(m["distance"] for m in match), max(m["mass_rel_err"] for m in match))
    checks.append(("prony_exactness", prony_err, 1e-10, prony_err < 1e-10))

    refl = sponge_reflection_1d(plan.grid, field.b0)
    checks.append(("sponge_reflection_1d", refl, 5e-2, refl < 5e-2))
    return checks


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v)


def _threads_default() -> int:
    env = os.environ.get("PASPEED_THREADS")
    return int(env) if env else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="paspeed",
        description="Passive photoacoustic simulation and joint inversion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the forward solver on a scenario")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--grid-n", type=int, default=128)
    p_sim.add_argument("--sensors", type=int, default=512)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--noise", type=float, default=0.0)
    p_sim.add_argument("--moment-window", type=float, default=None)
    p_sim.add_argument("--record-window", type=float, default=None)

    p_rec = sub.add_parser("reconstruct", help="invert a stored boundary trace")
    p_rec.add_argument("--trace", required=True)
    p_rec.add_argument("--out", required=True)
    p_rec.add_argument("--config", default=None, help="truth scenario for comparison")
    p_rec.add_argument("--b0", type=float, default=1.0)
    p_rec.add_argument("--r0", type=float, default=1.0)
    p_rec.add_argument("--omega-radius", type=float, default=0.8)
    p_rec.add_argument("--radius-prior", type=float, default=0.2)
    p_rec.add_argument("--t-max", type=float, default=None)
    p_rec.add_argument("--grid-n", type=int, default=128)
    p_rec.add_argument("--rank-tol", type=float, default=5e-3)
    p_rec.add_argument("--no-figures", action="store_true")
    p_rec.add_argument("--no-source", action="store_true")

    p_sw = sub.add_parser("sweep", help="noise sweep probing stability exponents")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--noise", type=_parse_floats, default=(0.005, 0.015, 0.05, 0.15))
    p_sw.add_argument("--seeds", type=int, default=5)
    p_sw.add_argument("--q", type=_parse_floats, default=(1.0, 2.0, 4.0))
    p_sw.add_argument("--s", type=float, default=0.25)
    p_sw.add_argument("--grid-n", type=int, default=96)
    p_sw.add_argument("--sensors", type=int, default=2048)
    p_sw.add_argument("--seed", type=int, default=0)
    p_sw.add_argument("--threads", type=int, default=_threads_default())
    p_sw.add_argument("--radius-prior", type=float, default=None)
    p_sw.add_argument("--no-figures", action="store_true")

    p_or = sub.add_parser("oracle-check", help="run the reduced-scale invariant suite")
    p_or.add_argument("--config", required=True)
    p_or.add_argument("--grid-n", type=int, default=64)

    p_csv = sub.add_parser("export-csv", help="mirror a binary trace as CSV")
    p_csv.add_argument("--trace", required=True)
    p_csv.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    try:
        if args.command == "simulate":
            manifest = run_simulate(
                args.config,
                args.out,
                grid_n=args.grid_n,
                n_sensors=args.sensors,
                seed=args.seed,
                noise=args.noise,
                moment_window=args.moment_window,
                record_window=args.record_window,
            )
            print(f"trace written: {manifest.artifacts['trace']}")
            return 0
        if args.command == "reconstruct":
            report = run_reconstruct(
                args.trace,
                args.out,
                b0=args.b0,
                R0=args.r0,
                omega_radius=args.omega_radius,
                radius_prior=args.radius_prior,
                moment_window=args.t_max,
                tr_grid_n=args.grid_n,
                rank_tol=args.rank_tol,
                config_path=args.config,
                figures=not args.no_figures,
                compute_source=not args.no_source,
            )
            print(f"recovered {report.n_recovered} inclusions, B = {report.B:.6g}")
            return 0
        if args.command == "sweep":
            curve = run_sweep(
                args.config,
                args.out,
                noise_levels=args.noise,
                n_seeds=args.seeds,
                q_values=args.q,
                s_param=args.s,
                grid_n=args.grid_n,
                n_sensors=args.sensors,
                radius_prior=args.radius_prior,
                threads=args.threads,
                seed_base=args.seed,
                figures=not args.no_figures,
            )
            for name, fit in curve.slopes.items():
                print(f"slope {name}: {fit['slope']:.4g} +/- {fit['stderr']:.2g}")
            return 0
        if args.command == "oracle-check":
            checks = run_oracle_check(args.config, grid_n=args.grid_n)
            failed = 0
            for name, measured, tol, ok in checks:
                status = "PASS" if ok else "FAIL"
                print(f"[{status}] {name}: measured {measured:.3e} (tolerance {tol:.3e})")
                failed += 0 if ok else 1
            return EXIT_CHECK_FAILED if failed else 0
        if args.command == "export-csv":
            trace = BoundaryTrace.load(args.trace)
            trace.to_csv(args.out)
            print(f"csv written: {args.out}")
            return 0
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryViolation as exc:
        print(f"admissibility failure: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except NumericBlowup as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PaspeedError as exc:
        stage = getattr(exc, "stage", "unknown")
        print(f"stage '{stage}' failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
