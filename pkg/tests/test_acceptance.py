"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import dataclasses
import json
import math

import numpy as np
import pytest

from conftest import vortex_blob
from enscascade import pipeline
from enscascade.config import RunConfig
from enscascade.diagnostics import (
    flux_budget,
    sandwich_constants,
    upsample,
    vortex_stretch_kernel,
    vortex_stretch_spectral,
)
from enscascade.ensemble import (
    build_cover_ensemble,
    ensemble_average,
    large_scale_mean,
    refine_ensemble,
    single_member,
)
from enscascade.grid import Grid3, ScalarField, VectorField3, curl, divergence
from enscascade.localization import make_temporal_cutoff, make_test_function, refine, verify_bounds
from enscascade.solver import SolverConfig, initial_random_bandlimited, initial_taylor_green, run, step

pytestmark = pytest.mark.acceptance

R0 = 0.2
C0 = 60.0
G48 = Grid3(48, 1.6)


def random_density(rng, g):
    """Nonnegative densities of varied texture: powers, spikes, log-normal, squared waves."""
    kind = rng.integers(4)
    if kind == 0:
        v = rng.random(g.shape) ** rng.uniform(0.25, 6.0)
    elif kind == 1:
        v = np.where(rng.random(g.shape) < rng.uniform(1e-4, 1e-2), rng.exponential(10.0, g.shape), 0.0)
    elif kind == 2:
        v = np.exp(rng.normal(0.0, rng.uniform(0.5, 3.0), g.shape))
    else:
        x, y, z = g.coords
        k = rng.integers(1, 8, size=3) * 2 * np.pi / g.L
        v = np.sin(k[0] * x + rng.uniform(0, 6)) ** 2 * np.cos(k[1] * y + k[2] * z) ** 2
    return ScalarField(g, v)


def test_criterion_1_budget_identity(record_criterion):
    cfg = RunConfig()
    traj = pipeline.simulate_trajectory(cfg)
    psi0 = make_test_function((0.0, 0.0, 0.0), cfg.R0, cfg.C0)
    e = build_cover_ensemble(psi0, cfg.R0 / 2, cfg.K1, cfg.K2, traj.grid)
    fb = flux_budget(traj, e, make_temporal_cutoff(traj.T, cfg.C0))
    worst = fb.max_relative_residual
    passed = worst <= 1e-3 and len(e.members) > 0 and cfg.nonlinear and len(traj) == cfg.steps + 1
    record_criterion(1, passed, f"{cfg.n}^3, {len(e.members)} members, max relative residual {worst:.3e} <= 1e-3")
    assert passed


def test_criterion_2_sandwich(record_criterion):
    psi0 = make_test_function((0.0, 0.0, 0.0), R0, C0)
    e0 = single_member(psi0, G48)
    r1 = refine_ensemble(e0, R0 / 2)
    ensembles = [
        e0,
        build_cover_ensemble(psi0, R0 / 2, 64, 8, G48),
        build_cover_ensemble(psi0, R0 / 4, 64, 8, G48),
        r1,
        refine_ensemble(r1, R0 / 4),
    ]
    rng = np.random.default_rng(2024)
    violations, trials = 0, 0
    for _ in range(100):
        f = random_density(rng, G48)
        F0 = large_scale_mean(f, psi0)
        for e in ensembles:
            avg = ensemble_average(f, e)
            trials += 1
            if not (F0 / e.K1 <= avg <= e.K2 * F0):
                violations += 1
    passed = violations == 0 and trials == 500
    record_criterion(2, passed, f"{trials} trials over 5 ensembles, {violations} violations")
    assert passed


def test_criterion_3_refinement(record_criterion):
    psi0 = make_test_function((0.0, 0.0, 0.0), R0, C0)
    g = G48
    size = g.n**3
    rng = np.random.default_rng(7)
    parents, R = [psi0], R0
    worst_count = worst_overlap = 0
    worst_sum = 0.0
    worst_bound = 0.0
    bounds_ok = constants_ok = True
    for Rp in (R0 / 2, R0 / 4):
        level = []
        for par in parents:
            kids = refine(par, Rp, g)
            worst_count = max(worst_count, len(kids) / (64 * (R / Rp) ** 3))
            idx, v = par.sample(g)
            ref = np.zeros(size)
            ref[idx] = v
            total = np.zeros(size)
            over = np.zeros(size, dtype=np.int64)
            for c in kids:
                ci, cv = c.sample(g)
                total[ci] += cv
                over[ci] += 1
                constants_ok &= c.c_grad == 7 * par.c0 and c.c_lap == 4 * par.c0 + 22 * par.c0**2
            worst_sum = max(worst_sum, float(np.max(np.abs(total - ref))))
            worst_overlap = max(worst_overlap, int(over.max()))
            level.extend(kids)
        for c in level:
            b = verify_bounds(c, g, n_sweep=1024)
            bounds_ok &= b.passed
            worst_bound = max(worst_bound, b.max_gradient_ratio, b.max_laplacian_ratio)
        parents, R = level, Rp

    chain = [single_member(psi0, g)]
    for Rp in (R0 / 2, R0 / 4):
        chain.append(refine_ensemble(chain[-1], Rp))
    worst_avg = 0.0
    for _ in range(20):
        f = random_density(rng, g)
        a0 = ensemble_average(f, chain[0])
        for e in chain[1:]:
            worst_avg = max(worst_avg, abs(ensemble_average(f, e) - a0) / abs(a0))

    checks = {
        "a": worst_count <= 1.0,
        "b": worst_overlap <= 8,
        "c": worst_sum <= 1e-12,
        "d": worst_avg <= 1e-12,
        "e": bounds_ok and constants_ok,
    }
    passed = all(checks.values())
    record_criterion(
        3,
        passed,
        f"count/bound {worst_count:.3f}, overlap {worst_overlap}, sum err {worst_sum:.1e}, "
        f"avg err {worst_avg:.1e}, max bound ratio {worst_bound:.3f}, {len(parents)} leaves",
    )
    assert passed, checks


def test_criterion_4_cutoff_certificates(record_criterion):
    psi = make_test_function((0.0, 0.0, 0.0), R0, C0, 0.75)
    eta = make_temporal_cutoff(0.05, C0, 0.75)
    rp = verify_bounds(psi, G48, n_sweep=10**6)
    re = verify_bounds(eta, n_sweep=10**6)
    ratios = [rp.max_gradient_ratio, rp.max_laplacian_ratio, re.max_gradient_ratio]
    passed = rp.passed and re.passed and max(ratios) < 1.0 and rp.n_points > 10**6 and re.n_points == 10**6
    record_criterion(4, passed, "max ratios psi grad/lap {:.4f}/{:.4f}, eta {:.4f}".format(*ratios))
    assert passed


def test_criterion_5_kernel_cross_validation(record_criterion):
    g = Grid3(24)
    w = vortex_blob(g)
    probes = [np.array(p, dtype=float) * g.h for p in ((0, 0, 0), (2, 1, 0), (-2, 1, 1), (1, -2, 2), (0, 2, -2))]
    errors = []
    for factor, eps_cells in ((2, 1.0), (4, 0.5), (8, 0.25)):
        fine = upsample(w, factor)
        spectral = vortex_stretch_spectral(fine).values
        ref = np.array([spectral[tuple(fine.grid.index_of(x))] for x in probes])
        del fine, spectral
        vals = np.array([vortex_stretch_kernel(w, x, eps_cells * g.h, upsample_factor=factor) for x in probes])
        errors.append(float(np.linalg.norm(vals - ref) / np.linalg.norm(ref)))
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    passed = errors[-1] <= 5e-2 and monotone
    record_criterion(5, passed, "relative L2 errors " + ", ".join(f"{e:.3e}" for e in errors))
    assert passed


def test_criterion_6_solver(record_criterion):
    g = Grid3(16, 2.0)
    kf = 2 * math.pi / g.L
    x, y, z = g.coords
    shape = np.sin(kf * (2 * y + z))
    w0 = np.stack([shape, np.zeros(g.shape), np.zeros(g.shape)])
    k2 = 5 * kf**2
    cfg = SolverConfig(dt=1e-3, nu=0.7, nonlinear=False)
    field, decay = VectorField3(g, w0), 0.0
    for k in range(1, 101):
        field = step(field, cfg)
        decay = max(decay, float(np.max(np.abs(field.values - w0 * math.exp(-0.7 * k2 * k * cfg.dt)))))

    tg = curl(initial_taylor_green(Grid3(16)))
    T = 0.4

    def final(n):
        return run(tg, T, n, SolverConfig(dt=T / n, nu=0.05)).final.values

    ref = final(64)
    ratio = np.max(np.abs(final(4) - ref)) / np.max(np.abs(final(8) - ref))

    gr = Grid3(32, 1.6)
    traj = run(curl(initial_random_bandlimited(gr, 0, 2, 6, 20.0)), 0.05, 1, SolverConfig(dt=0.05 / 100))
    div = max(float(np.max(np.abs(divergence(s).values))) for s in traj.snapshots)

    passed = decay <= 1e-10 and abs(ratio / 16 - 1) <= 0.2 and div <= 1e-10
    record_criterion(
        6, passed, f"Stokes decay err {decay:.1e}, error ratio {ratio:.2f} (order {math.log2(ratio):.2f}), max|div w| {div:.1e}"
    )
    assert passed


def _report_bytes(cfg):
    traj = pipeline.simulate_trajectory(cfg)
    rep = pipeline.analyze_trajectory(traj, cfg)
    return json.dumps(rep.to_dict(), sort_keys=True, allow_nan=False).encode(), rep


def test_criterion_7_determinism_and_controls(record_criterion):
    base = dataclasses.replace(RunConfig(), n=32, steps=100).validate()
    a, _ = _report_bytes(base)
    b, _ = _report_bytes(base)
    identical = a == b

    stokes = dataclasses.replace(base, nonlinear=False, ic_kmin=3.0, ic_kmax=8.0).validate()
    _, srep = _report_bytes(stokes)
    t1 = [r for r in srep.rows if r.kind == "endpoint"]
    stokes_ok = bool(t1) and all(r.average_F == 0.0 and r.endpoint_lower_pass is False for r in t1)

    zero = dataclasses.replace(base, ic="zero").validate()
    _, zrep = _report_bytes(zero)
    zero_ok = (
        zrep.degenerate
        and zrep.rows == []
        and zrep.sigma0 is None
        and all(v is None for v in zrep.assumptions.values())
        and zrep.notes[0].startswith("degenerate")
    )
    passed = identical and stokes_ok and zero_ok
    record_criterion(
        7, passed, f"bit-identical {identical}, Stokes lower-bound failure {stokes_ok}, zero field degenerate {zero_ok}"
    )
    assert passed


def test_criterion_8_sandwich_evaluation(record_criterion):
    cfg = dataclasses.replace(RunConfig(), n=64, snapshot_every=2).validate()
    traj = pipeline.simulate_trajectory(cfg)
    rep = pipeline.analyze_trajectory(traj, cfg)
    again = pipeline.analyze_trajectory(traj, cfg)
    reproducible = json.dumps(rep.to_dict(), sort_keys=True) == json.dumps(again.to_dict(), sort_keys=True)
    del traj

    c = sandwich_constants(cfg.K1, cfg.K2)
    complete = (
        not rep.degenerate
        and rep.sigma0 is not None
        and rep.inertial_range is not None
        and set(rep.assumptions) == {"coherence", "kraichnan_scale", "morrey_smallness", "modulation"}
        and rep.assumptions["kraichnan_scale"] is not None
        and rep.assumptions["modulation"] is not None
        and rep.morrey_smallness_quantity is not None
        and len(rep.rows) > 0
    )
    consistent = True
    for r in rep.rows:
        consistent &= r.max_identity_residual <= 1e-3
        consistent &= r.range_lower == c["range_lower"] * rep.P0
        consistent &= r.range_upper == c["range_upper"] * rep.P0
        consistent &= r.range_lower_pass == (r.range_lower <= r.average_F)
        consistent &= r.range_upper_pass == (r.average_F <= r.range_upper)
        if r.kind == "endpoint":
            consistent &= r.endpoint_lower == c["endpoint_lower"] * rep.P0
            consistent &= r.endpoint_upper == c["endpoint_upper"] * rep.P0
            consistent &= r.endpoint_lower_pass == (r.endpoint_lower <= r.average_F)
        consistent &= r.assumptions_hold == all(v is True for v in rep.assumptions.values())
    consistent &= sum(r.kind == "endpoint" for r in rep.rows) == 1
    passed = bool(complete and consistent and reproducible)
    worst = max((r.max_identity_residual for r in rep.rows), default=float("nan"))
    record_criterion(
        8,
        passed,
        f"sigma0 {rep.sigma0:.4f}, {len(rep.rows)} rows, max row residual {worst:.2e}, "
        f"assumptions {rep.assumptions}, reproducible {reproducible}",
    )
    assert passed
