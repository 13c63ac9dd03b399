import numpy as np
import pytest

from enscascade.grid import Grid3, VectorField3, curl
from enscascade.solver import SolverConfig, Trajectory

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def _record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} ({detail})")

    return _record


def bump(g, c, a):
    d = g.coords - np.asarray(c, dtype=float).reshape(3, 1, 1, 1)
    r2 = np.sum(d**2, axis=0)
    return np.where(r2 < a * a, (1 - r2 / (a * a)) ** 6, 0.0)


def vortex_blob(g: Grid3) -> VectorField3:
    """Curl of a compactly supported, asymmetric vector potential."""
    L = g.L
    a = 0.28 * L
    A = np.stack(
        [
            bump(g, (0.03 * L, 0, 0), a),
            0.7 * bump(g, (0, 0.04 * L, -0.02 * L), 0.9 * a),
            0.4 * bump(g, (0, 0, 0.05 * L), 0.8 * a),
        ]
    )
    A[0] *= 1 + g.coords[1] / L
    A[2] *= 1 - g.coords[0] / L
    return curl(VectorField3(g, A))


def single_snapshot(w: VectorField3) -> Trajectory:
    return Trajectory(w.grid, np.array([0.0]), (w,), SolverConfig(dt=1.0))


def mode_vorticity(g: Grid3, kint=(0, 1, 0), amp=1.0) -> VectorField3:
    """Solenoidal single Fourier mode ``w = amp * e_x sin(k . x)`` with ``k`` orthogonal to x."""
    assert kint[0] == 0
    kf = 2 * np.pi / g.L
    phase = kf * sum(k * x for k, x in zip(kint, g.coords))
    return VectorField3(g, np.stack([amp * np.sin(phase), np.zeros(g.shape), np.zeros(g.shape)]))
