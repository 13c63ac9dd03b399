import math

import numpy as np
import pytest

from conftest import mode_vorticity
from enscascade.grid import Grid3, VectorField3, curl, div_hat
from enscascade.solver import (
    BlowUpError,
    CFLViolation,
    SolverConfig,
    Trajectory,
    initial_random_bandlimited,
    initial_taylor_green,
    run,
    step,
)


def tg_vorticity(g, amp=1.0):
    return curl(initial_taylor_green(g, amp))


class TestStep:
    def test_stokes_single_mode(self):
        g = Grid3(16, 2.0)
        w = mode_vorticity(g, (0, 2, 1))
        k2 = (2 * math.pi / g.L) ** 2 * 5
        cfg = SolverConfig(dt=1e-3, nu=0.7, nonlinear=False)
        out = step(w, cfg)
        assert np.max(np.abs(out.values - w.values * math.exp(-0.7 * k2 * 1e-3))) < 1e-10

    def test_zero_state(self):
        g = Grid3(8)
        z = VectorField3(g, np.zeros((3,) + g.shape))
        assert not np.any(step(z, SolverConfig(dt=0.1)).values)

    def test_temporal_order(self):
        g = Grid3(16)
        w0 = tg_vorticity(g)
        T = 0.4

        def final(n):
            return run(w0, T, n, SolverConfig(dt=T / n, nu=0.05)).final.values

        ref, a, b = final(64), final(4), final(8)
        ratio = np.max(np.abs(a - ref)) / np.max(np.abs(b - ref))
        assert 16 * 0.8 <= ratio <= 16 * 1.2

    def test_rejects_non_solenoidal(self):
        g = Grid3(8)
        x = g.coords[0]
        w = VectorField3(g, np.stack([np.sin(x), 0 * x, 0 * x]))
        with pytest.raises(ValueError, match="solenoidal"):
            step(w, SolverConfig(dt=0.1))

    def test_cfl_violation(self):
        g = Grid3(16)
        with pytest.raises(CFLViolation):
            step(tg_vorticity(g, 10.0), SolverConfig(dt=0.5))

    def test_blow_up_guard(self):
        # CFL check disabled and far too large a step: RK4 diverges to overflow
        g = Grid3(16)
        with pytest.raises(BlowUpError):
            run(tg_vorticity(g, 1e3), 400.0, 1000, SolverConfig(dt=1.0, nu=1e-3, cfl=1e300))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(dt=0.0)
        with pytest.raises(ValueError):
            SolverConfig(dt=0.1, nu=-1.0)


class TestRun:
    def test_stokes_enstrophy_diagonal_decay(self):
        g = Grid3(16, 1.6)
        w0 = curl(initial_random_bandlimited(g, 5, 1, 4, 1.0))
        T, nu = 0.02, 1.0
        traj = run(w0, T, 10, SolverConfig(dt=T / 40, nu=nu, nonlinear=False))
        w_hat = np.fft.fftn(w0.values, axes=(1, 2, 3))
        k = 2 * math.pi / g.L * np.fft.fftfreq(g.n, 1.0 / g.n)
        k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
        expect = 0.5 * g.cell_volume / g.n**3 * np.sum(np.abs(w_hat) ** 2 * np.exp(-2 * nu * k2 * T))
        assert traj.history["enstrophy"][-1] == pytest.approx(expect, rel=1e-8)

    def test_zero_horizon(self):
        g = Grid3(8)
        w0 = tg_vorticity(g)
        traj = run(w0, 0.0, 1, SolverConfig(dt=0.1))
        assert len(traj) == 1 and traj.T == 0.0
        assert np.array_equal(traj.final.values, w0.values)

    def test_snapshot_grid(self):
        g = Grid3(8)
        traj = run(tg_vorticity(g), 0.1, 3, SolverConfig(dt=0.01, nu=0.1))
        assert np.allclose(traj.times, [0.0, 0.03, 0.06, 0.09, 0.1])
        assert traj.weights.sum() == pytest.approx(0.1, rel=1e-14)

    def test_global_budget_history(self):
        g = Grid3(48, 1.6)
        w0 = curl(initial_random_bandlimited(g, 0, 2, 6, 20.0))
        dt = 0.05 / 300
        traj = run(w0, 20 * dt, 20, SolverConfig(dt=dt))
        h = traj.history
        Z, S, P = h["enstrophy"], h["production"], h["palinstrophy"]
        r = S - P
        # Z(t+dt) - Z(t-dt) against the Simpson integral of the right-hand side
        lhs = Z[2:] - Z[:-2]
        rhs = dt / 3 * (r[:-2] + 4 * r[1:-1] + r[2:])
        assert np.max(np.abs(lhs - rhs) / np.abs(rhs)) <= 1e-3

    def test_stokes_mode_decay_100_steps_and_solenoidality(self):
        g = Grid3(16, 1.6)
        w0 = curl(initial_random_bandlimited(g, 9, 1, 4, 1.0))
        dt = 2e-4
        traj = run(w0, 100 * dt, 1, SolverConfig(dt=dt, nonlinear=False))
        w_hat0 = g.fft(w0.values)
        for t, snap in zip(traj.times, traj.snapshots):
            w_hat = g.fft(snap.values)
            assert np.max(np.abs(w_hat - w_hat0 * np.exp(-g.k2 * t))) <= 1e-10 * np.max(np.abs(w_hat0))
            assert np.max(np.abs(g.ifft(div_hat(g, w_hat)))) <= 1e-10

    def test_nonlinear_solenoidal_and_zero_mean(self):
        g = Grid3(16)
        traj = run(tg_vorticity(g), 0.2, 1, SolverConfig(dt=0.02, nu=0.05))
        for s in traj.snapshots:
            w_hat = g.fft(s.values)
            assert np.max(np.abs(g.ifft(div_hat(g, w_hat)))) <= 1e-10
            assert np.max(np.abs(w_hat[:, 0, 0, 0])) == 0.0 or np.max(np.abs(w_hat[:, 0, 0, 0])) < 1e-12

    def test_trajectory_invariants(self):
        g = Grid3(8)
        w = tg_vorticity(g)
        with pytest.raises(ValueError):
            Trajectory(g, np.array([0.1]), (w,), SolverConfig(dt=1.0))
        with pytest.raises(ValueError):
            Trajectory(g, np.array([0.0, 0.0]), (w, w), SolverConfig(dt=1.0))


class TestInitialData:
    def test_taylor_green_amplitude(self):
        g = Grid3(16)
        u = initial_taylor_green(g, 1.0)
        assert np.max(np.sqrt(np.sum(u.values**2, axis=0))) == pytest.approx(1.0, abs=1e-12)

    def test_random_energy(self):
        g = Grid3(16, 1.6)
        u = initial_random_bandlimited(g, 4, 1, 4, 2.5)
        e = 0.5 * g.cell_volume * np.sum(u.values**2)
        assert e == pytest.approx(2.5 * g.L**3, rel=1e-10)

    def test_random_is_solenoidal_zero_mean(self):
        g = Grid3(16)
        u = initial_random_bandlimited(g, 4, 1, 4, 1.0)
        u_hat = g.fft(u.values)
        assert np.max(np.abs(g.ifft(div_hat(g, u_hat)))) < 1e-12
        assert np.max(np.abs(u.values.reshape(3, -1).mean(axis=1))) < 1e-14

    def test_seed_determinism(self):
        g = Grid3(16)
        a = initial_random_bandlimited(g, 12, 1, 4, 1.0)
        b = initial_random_bandlimited(g, 12, 1, 4, 1.0)
        assert a.values.tobytes() == b.values.tobytes()

    def test_band_outside_resolvable_range(self):
        with pytest.raises(ValueError, match="dealias"):
            initial_random_bandlimited(Grid3(16), 0, 1, 6, 1.0)
        with pytest.raises(ValueError):
            initial_random_bandlimited(Grid3(16), 0, 3, 2, 1.0)
