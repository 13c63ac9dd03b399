"""Stages behind the command-line interface: simulate, analyze, verify."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, from_dict
from .diagnostics import VerdictParams, cascade_verdict, flux_budget
from .ensemble import build_cover_ensemble, ensemble_average, large_scale_mean, refine_ensemble, single_member
from .grid import Grid3, ScalarField, VectorField3, curl, divergence
from .localization import lattice_partition_sum, radial_c0_min, make_temporal_cutoff, make_test_function, refine, verify_bounds
from .snapshot import FieldKind, read_snapshot, write_snapshot
from .solver import SolverConfig, Trajectory, initial_random_bandlimited, initial_taylor_green, run, step

MANIFEST = "manifest.json"
SNAPDIR = "snapshots"


def grid_of(cfg: RunConfig) -> Grid3:
    return Grid3(cfg.n, cfg.L)


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(dt=cfg.dt, nu=cfg.nu, dealias=cfg.dealias, nonlinear=cfg.nonlinear, cfl=cfg.cfl)


def initial_vorticity(cfg: RunConfig) -> VectorField3:
    g = grid_of(cfg)
    if cfg.ic == "zero":
        return VectorField3(g, np.zeros((3,) + g.shape))
    if cfg.ic == "taylor_green":
        u = initial_taylor_green(g, cfg.ic_amplitude)
    else:
        u = initial_random_bandlimited(g, cfg.seed, cfg.ic_kmin, cfg.ic_kmax, cfg.ic_energy)
    return curl(u)


def reference_cutoff(cfg: RunConfig):
    return make_test_function((0.0, 0.0, 0.0), cfg.R0, cfg.C0, cfg.rho)


def verdict_params(cfg: RunConfig) -> VerdictParams:
    return VerdictParams(
        K1=cfg.K1, K2=cfg.K2, C0=cfg.C0, rho=cfg.rho, beta=cfg.beta, q=cfg.q, M=cfg.M, C3=cfg.C3, C1=cfg.C1,
        coherence_samples=cfg.coherence_samples, coherence_snapshots=cfg.coherence_snapshots, seed=cfg.seed,
        morrey_center_stride=cfg.morrey_center_stride,
    )


def simulate_trajectory(cfg: RunConfig, progress=None) -> Trajectory:
    w0 = initial_vorticity(cfg)
    return run(w0, cfg.T, cfg.snapshot_every, solver_config(cfg), progress=progress, meta={"seed": cfg.seed})


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, obj) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    path.write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig, outdir=None, progress=None) -> dict:
    out = Path(outdir or cfg.output)
    snapdir = out / SNAPDIR
    snapdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj = simulate_trajectory(cfg, progress)
    t1 = time.perf_counter()
    files = {}
    for k, (t, w) in enumerate(zip(traj.times, traj.snapshots)):
        name = f"{SNAPDIR}/omega_{k:05d}.ensc"
        files[name] = write_snapshot(out / name, w, float(t), FieldKind.VORTICITY)
    t2 = time.perf_counter()
    manifest = {
        "version": __version__,
        "config": cfg.as_dict(),
        "seeds": {"ic": cfg.seed},
        "times": [float(t) for t in traj.times],
        "solver": {"dt": float(traj.history["dt"]), "nsteps": int(traj.history["nsteps"])},
        "files": files,
        "wall_time": {"simulate": t1 - t0, "write": t2 - t1},
        "history": {
            "time": [float(v) for v in traj.history["time"]],
            "enstrophy": [float(v) for v in traj.history["enstrophy"]],
            "production": [float(v) for v in traj.history["production"]],
            "palinstrophy": [float(v) for v in traj.history["palinstrophy"]],
        },
    }
    write_json(out / MANIFEST, manifest)
    return manifest


def load_trajectory(rundir) -> tuple[Trajectory, RunConfig]:
    """Rebuild a trajectory from a run directory, checking every checksum."""
    d = Path(rundir)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest in {d}: {exc}") from None
    cfg = from_dict(manifest["config"])
    times, snaps = [], []
    for name, digest in sorted(manifest["files"].items()):
        p = d / name
        if not p.exists():
            raise ConfigError(f"snapshot {name} listed in the manifest is missing")
        if _sha256(p) != digest:
            raise ConfigError(f"checksum mismatch for {name}")
        s = read_snapshot(p)
        times.append(s.time)
        snaps.append(s.field)
    if not times:
        raise ConfigError("manifest lists no snapshots")
    if not math.isclose(times[-1], cfg.T, rel_tol=0, abs_tol=1e-15):
        raise ConfigError(f"trajectory ends at t={times[-1]}, missing the t = T = {cfg.T} snapshot")
    for s in snaps:
        if s.grid != grid_of(cfg):
            raise ConfigError("snapshot grid does not match the manifest configuration")
    traj = Trajectory(grid_of(cfg), np.array(times), tuple(snaps), solver_config(cfg), meta={"seed": cfg.seed})
    return traj, cfg


# ---------------------------------------------------------------------------
# analyze

_ANALYSIS_KEYS = ("C0", "rho", "K1", "K2", "beta", "q", "M", "C3", "C1", "coherence_samples",
                  "coherence_snapshots", "morrey_center_stride", "R0")


def check_compatible(run_cfg: RunConfig, cfg: RunConfig):
    for key in ("n", "L", "T", "nu", "nonlinear", "steps", "snapshot_every", "seed", "ic"):
        if getattr(run_cfg, key) != getattr(cfg, key):
            raise ConfigError(
                f"config/trajectory mismatch: {key}={getattr(cfg, key)!r} but the run used {getattr(run_cfg, key)!r}"
            )


def analyze_trajectory(traj: Trajectory, cfg: RunConfig):
    return cascade_verdict(traj, reference_cutoff(cfg), verdict_params(cfg))


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def cmd_analyze(rundir, cfg: RunConfig | None = None, outdir=None) -> dict:
    traj, run_cfg = load_trajectory(rundir)
    if cfg is not None:
        check_compatible(run_cfg, cfg)
        merged = cfg
    else:
        merged = run_cfg
    out = Path(outdir or rundir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = analyze_trajectory(traj, merged)
    t1 = time.perf_counter()
    data = report.to_dict()
    data["analysis_config"] = {k: getattr(merged, k) for k in _ANALYSIS_KEYS}
    jdigest = write_json(out / "report.json", data)
    text = csv_text(report.csv_rows())
    (out / "report.csv").write_text(text)
    cdigest = hashlib.sha256(text.encode()).hexdigest()
    write_json(
        out / "analysis_manifest.json",
        {"version": __version__, "wall_time": {"analyze": t1 - t0},
         "files": {"report.json": jdigest, "report.csv": cdigest}},
    )
    return data


# ---------------------------------------------------------------------------
# verify


def _suite(name, checks: dict, residuals: dict) -> dict:
    return {"suite": name, "passed": all(checks.values()), "checks": checks, "residuals": residuals}


def suite_cutoffs(cfg: RunConfig) -> dict:
    g = grid_of(cfg)
    psi = reference_cutoff(cfg)
    eta = make_temporal_cutoff(cfg.T if cfg.T > 0 else 1.0, cfg.C0, cfg.rho)
    rp = verify_bounds(psi, g)
    re = verify_bounds(eta)
    tight = make_test_function((0.0, 0.0, 0.0), cfg.R0, radial_c0_min(cfg.rho), cfg.rho)
    half = verify_bounds(tight, g, c_grad=tight.c0 / 2, c_lap=tight.c0 / 2, n_sweep=10**5)
    return _suite(
        "cutoff_certificates",
        {"psi": rp.passed, "eta": re.passed, "halved_budget_fails": not half.passed},
        {"psi_gradient": rp.max_gradient_ratio, "psi_laplacian": rp.max_laplacian_ratio,
         "eta_gradient": re.max_gradient_ratio},
    )


def _random_density(rng, g: Grid3) -> ScalarField:
    return ScalarField(g, rng.random(g.shape) ** rng.uniform(0.5, 4.0))


def suite_refinement(cfg: RunConfig) -> dict:
    g = grid_of(cfg)
    psi0 = reference_cutoff(cfg)
    rng = np.random.default_rng(cfg.seed)
    checks, res = {}, {}
    parents, R = [psi0], cfg.R0
    worst_sum = worst_overlap = 0.0
    count_ok = True
    bounds_ok = True
    worst_ratio = 0.0
    for Rp in cfg.refinement_scales():
        kids_all = []
        for par in parents:
            kids = refine(par, Rp, g)
            count_ok &= len(kids) <= 64 * (R / Rp) ** 3
            idx, v = par.sample(g)
            total = np.zeros(g.n**3)
            over = np.zeros(g.n**3, dtype=int)
            for c in kids:
                ci, cv = c.sample(g)
                total[ci] += cv
                over[ci] += 1
            ref = np.zeros(g.n**3)
            ref[idx] = v
            worst_sum = max(worst_sum, float(np.max(np.abs(total - ref))))
            worst_overlap = max(worst_overlap, int(over.max()))
            kids_all.extend(kids)
        step_kids = kids_all[:: max(1, len(kids_all) // 40)]
        for c in step_kids:
            b = verify_bounds(c, g, n_sweep=2**12)
            bounds_ok &= b.passed
            worst_ratio = max(worst_ratio, b.max_gradient_ratio, b.max_laplacian_ratio)
        parents, R = kids_all, Rp
    checks["child_count"] = bool(count_ok)
    checks["overlap"] = worst_overlap <= 8
    checks["partition_sum"] = worst_sum <= 1e-12
    checks["child_bounds"] = bool(bounds_ok)
    # average preservation along the refinement chain
    e = single_member(psi0, g, cfg.K1, cfg.K2)
    chain = [e]
    for Rp in cfg.refinement_scales():
        chain.append(refine_ensemble(chain[-1], Rp))
    worst_avg = 0.0
    for _ in range(20):
        f = _random_density(rng, g)
        a0 = ensemble_average(f, chain[0])
        for ee in chain[1:]:
            worst_avg = max(worst_avg, abs(ensemble_average(f, ee) - a0) / abs(a0))
    checks["average_preserved"] = worst_avg <= 1e-12
    xs = rng.uniform(-1.0, 1.0, size=(3, 4096)) * cfg.R0
    ps = lattice_partition_sum(xs, cfg.refinement_scales()[0] if cfg.refinement_scales() else cfg.R0 / 2, cfg.rho)
    checks["lattice_sum_range"] = bool(ps.min() >= 1 - 1e-12 and ps.max() <= 8 + 1e-12)
    res.update(partition_sum=worst_sum, overlap=worst_overlap, average=worst_avg, child_bound_ratio=worst_ratio,
               lattice_sum_min=float(ps.min()), lattice_sum_max=float(ps.max()))
    return _suite("refinement", checks, res)


def suite_sandwich(cfg: RunConfig) -> dict:
    g = grid_of(cfg)
    psi0 = reference_cutoff(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    scales = cfg.refinement_scales()
    ens = [single_member(psi0, g, cfg.K1, cfg.K2)]
    ens += [build_cover_ensemble(psi0, R, cfg.K1, cfg.K2, g) for R in scales]
    e = ens[0]
    for R in scales:
        e = refine_ensemble(e, R)
        ens.append(e)
    violations, worst = 0, math.inf
    for _ in range(cfg.verify_trials):
        f = _random_density(rng, g)
        F0 = large_scale_mean(f, psi0)
        for e in ens:
            avg = ensemble_average(f, e)
            lo, hi = F0 / e.K1, e.K2 * F0
            if not (lo <= avg <= hi):
                violations += 1
            worst = min(worst, avg - lo, hi - avg)
    return _suite("ensemble_sandwich", {"no_violations": violations == 0},
                  {"violations": violations, "min_margin": worst, "ensembles": len(ens)})


def suite_budget(cfg: RunConfig, traj: Trajectory | None = None) -> dict:
    g = grid_of(cfg)
    if cfg.T == 0:
        return _suite("budget_identity", {"skipped_T0": True}, {})
    traj = traj or simulate_trajectory(cfg)
    psi0 = reference_cutoff(cfg)
    eta = make_temporal_cutoff(cfg.T, cfg.C0, cfg.rho)
    e = build_cover_ensemble(psi0, cfg.R0 / 2, cfg.K1, cfg.K2, g)
    fb = flux_budget(traj, e, eta)
    return _suite(
        "budget_identity",
        {"identity": fb.max_relative_residual <= 1e-3, "integration_by_parts": fb.max_form_discrepancy <= 1e-6},
        {"max_relative_residual": fb.max_relative_residual, "max_form_discrepancy": fb.max_form_discrepancy,
         "members": len(e.members)},
    )


def suite_solver(cfg: RunConfig) -> dict:
    g = Grid3(16, cfg.L)
    kx = 2 * math.pi / cfg.L
    x, y, z = g.coords
    w = np.stack([np.sin(kx * y), np.zeros(g.shape), np.zeros(g.shape)])
    field = VectorField3(g, w)
    sc = SolverConfig(dt=1e-4, nu=cfg.nu, nonlinear=False)
    err = div = 0.0
    for k in range(1, 101):
        field = step(field, sc)
        exact = np.exp(-cfg.nu * kx**2 * k * sc.dt) * w
        err = max(err, float(np.max(np.abs(field.values - exact))))
        div = max(div, float(np.max(np.abs(divergence(field).values))))
    return _suite("solver_stokes_decay", {"decay": err <= 1e-10, "solenoidal": div <= 1e-10},
                  {"max_decay_error": err, "max_divergence": div})


def cmd_verify(cfg: RunConfig, include_budget: bool = True) -> dict:
    suites = [suite_cutoffs(cfg), suite_refinement(cfg), suite_sandwich(cfg), suite_solver(cfg)]
    if include_budget:
        suites.append(suite_budget(cfg))
    return {"version": __version__, "passed": all(s["passed"] for s in suites), "suites": suites}
