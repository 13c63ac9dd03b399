"""Pseudo-spectral integrator for the vorticity form of Navier-Stokes.

The state is the vorticity ``w`` on the periodic box,

    w_t = curl(u x w) + nu * Laplacian(w),   u = curl (-Laplacian)^{-1} w,

where ``curl(u x w) = (w . grad) u - (u . grad) w`` for solenoidal fields.
Time stepping is classical RK4 with an exact integrating factor for the
viscous term, so the Stokes limit is integrated without temporal error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import (
    Grid3,
    VectorField3,
    biot_savart_hat,
    curl,
    curl_hat,
    div_hat,
    project_hat,
    velocity_gradient,
)


class NumericalFailure(RuntimeError):
    """Base class for aborted integrations."""


class CFLViolation(NumericalFailure):
    pass


class BlowUpError(NumericalFailure):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    nu: float = 1.0
    dealias: bool = True
    nonlinear: bool = True
    cfl: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")


def _nonlinear_hat(grid: Grid3, w_hat, config: SolverConfig, check_cfl: float | None = None):
    """Spectral ``curl(u x w)`` (dealiased if configured)."""
    u_hat = biot_savart_hat(grid, w_hat)
    u = grid.ifft(u_hat)
    if check_cfl is not None:
        umax = float(np.sqrt(np.max(np.sum(u**2, axis=0))))
        if umax > 0 and check_cfl > config.cfl * grid.h / umax:
            raise CFLViolation(
                f"dt={check_cfl:.3e} exceeds CFL limit {config.cfl * grid.h / umax:.3e} (max|u|={umax:.3e})"
            )
    w = grid.ifft(w_hat)
    uxw = np.cross(u, w, axis=0)
    n_hat = curl_hat(grid, grid.fft(uxw))
    if config.dealias:
        n_hat *= grid.dealias_mask
    return n_hat


def _rk4_if(grid: Grid3, w_hat, dt: float, config: SolverConfig):
    E = np.exp(-config.nu * grid.k2 * (0.5 * dt))
    if not config.nonlinear:
        return w_hat * E * E
    N = lambda a, cfl=None: _nonlinear_hat(grid, a, config, cfl)
    k1 = N(w_hat, dt)
    k2 = N(E * (w_hat + 0.5 * dt * k1))
    k3 = N(E * w_hat + 0.5 * dt * k2)
    k4 = N(E * E * w_hat + dt * E * k3)
    return E * E * w_hat + (dt / 6.0) * (E * E * k1 + 2.0 * E * (k2 + k3) + k4)


def _advance(grid: Grid3, w_hat, dt: float, config: SolverConfig):
    with np.errstate(over="ignore", invalid="ignore"):
        return _finalize(grid, _rk4_if(grid, w_hat, dt, config))


def _finalize(grid: Grid3, w_hat):
    out = project_hat(grid, w_hat)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite vorticity after step (blow-up or instability)")
    return out


def _check_admissible(w: VectorField3, tol: float = 1e-10):
    g = w.grid
    scale = max(1.0, float(np.max(np.abs(w.values))))
    mean = np.abs(w.values.reshape(3, -1).mean(axis=1))
    if np.any(mean > 1e-12 * scale):
        raise ValueError(f"vorticity must be zero-mean, mean={mean.tolist()}")
    div = g.ifft(div_hat(g, g.fft(w.values)))
    if np.max(np.abs(div)) > tol * scale:
        raise ValueError(f"vorticity is not solenoidal, max|div|={np.max(np.abs(div)):.3e}")


def step(omega: VectorField3, config: SolverConfig) -> VectorField3:
    """Advance the vorticity by one RK4 step of size ``config.dt``."""
    _check_admissible(omega)
    g = omega.grid
    return VectorField3(g, g.ifft(_advance(g, g.fft(omega.values), config.dt, config)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered vorticity snapshots on ``[0, T]``."""

    grid: Grid3
    times: np.ndarray
    snapshots: tuple
    config: SolverConfig
    history: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.snapshots) or len(t) == 0:
            raise ValueError("times and snapshots must be non-empty and of equal length")
        if t[0] != 0.0:
            raise ValueError("trajectory must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        for s in self.snapshots:
            if s.grid != self.grid:
                raise ValueError("snapshot grid mismatch")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> VectorField3:
        return self.snapshots[-1]

    def __len__(self):
        return len(self.snapshots)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for integrals over ``[0, T]``."""
        t = self.times
        w = np.zeros_like(t)
        if len(t) > 1:
            dt = np.diff(t)
            w[:-1] += 0.5 * dt
            w[1:] += 0.5 * dt
        return w


def global_budget_terms(grid: Grid3, w_hat) -> tuple[float, float, float]:
    """Box enstrophy, stretching production and palinstrophy of a state."""
    w = grid.ifft(w_hat)
    u_hat = biot_savart_hat(grid, w_hat)
    G = velocity_gradient(grid, u_hat)
    stretch = np.einsum("j...,ij...,i...->...", w, G, w)
    dv = grid.cell_volume
    Z = 0.5 * dv * float(np.add.reduce((w**2).reshape(-1)))
    S = dv * float(np.add.reduce(stretch.reshape(-1)))
    P = 0.0
    kodd = grid.wavenumbers_odd
    for j in range(3):
        dw = grid.ifft(1j * kodd[j] * w_hat)
        P += dv * float(np.add.reduce((dw**2).reshape(-1)))
    return Z, S, P


def run(
    omega0: VectorField3,
    T: float,
    snapshot_every: int,
    config: SolverConfig,
    progress: Callable[[int, int], None] | None = None,
    meta: dict | None = None,
) -> Trajectory:
    """Integrate to time ``T``, storing a snapshot every ``snapshot_every`` steps.

    The step count is ``ceil(T / dt)`` and the step size is shrunk to
    ``T / nsteps`` so the final snapshot lands exactly on ``T``.  The box
    enstrophy budget (enstrophy, stretching production, palinstrophy) is
    recorded at every step.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    _check_admissible(omega0)
    g = omega0.grid
    nsteps = 0 if T == 0 else max(1, math.ceil(T / config.dt - 1e-9))
    dt = T / nsteps if nsteps else config.dt
    w_hat = project_hat(g, g.fft(omega0.values))
    times, snaps = [0.0], [omega0]
    hist_t, hist = [0.0], [global_budget_terms(g, w_hat)]
    for k in range(1, nsteps + 1):
        w_hat = _advance(g, w_hat, dt, config)
        t = T if k == nsteps else k * dt
        hist_t.append(t)
        hist.append(global_budget_terms(g, w_hat))
        if k % snapshot_every == 0 or k == nsteps:
            times.append(t)
            snaps.append(VectorField3(g, g.ifft(w_hat)))
        if progress is not None:
            progress(k, nsteps)
    hist = np.array(hist).reshape(-1, 3)
    history = {
        "time": np.array(hist_t),
        "enstrophy": hist[:, 0],
        "production": hist[:, 1],
        "palinstrophy": hist[:, 2],
        "dt": dt,
        "nsteps": nsteps,
    }
    return Trajectory(g, np.array(times), tuple(snaps), config, history, dict(meta or {}))


# ---------------------------------------------------------------------------
# initial data


def initial_taylor_green(grid: Grid3, amplitude: float = 1.0) -> VectorField3:
    """Taylor-Green velocity with unit box wavenumber, ``max|u| = amplitude``."""
    x, y, z = grid.coords * (2 * math.pi / grid.L)
    u = np.stack(
        [
            amplitude * np.sin(x) * np.cos(y) * np.cos(z),
            -amplitude * np.cos(x) * np.sin(y) * np.cos(z),
            np.zeros_like(x),
        ]
    )
    return VectorField3(grid, u)


def initial_random_bandlimited(
    grid: Grid3, seed: int, k_min: float, k_max: float, energy: float
) -> VectorField3:
    """Random solenoidal velocity confined to the shell ``k_min <= |k| <= k_max``.

    Wavenumbers are in units of the box fundamental ``2 pi / L``.  The field is
    scaled so that the box mean of ``|u|^2 / 2`` equals ``energy``, i.e.
    ``integral |u|^2 / 2 = energy * L^3``.
    """
    if not (0 < k_min <= k_max):
        raise ValueError(f"need 0 < k_min <= k_max, got {k_min}, {k_max}")
    if k_max >= grid.n / 3.0:
        raise ValueError(f"k_max={k_max} not below the dealias cutoff n/3={grid.n / 3.0:.3f}")
    if energy < 0:
        raise ValueError("energy must be non-negative")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3,) + grid.shape)
    kx, ky, kz = grid.integer_wavenumbers
    kmag = np.sqrt(kx**2 + ky**2 + kz**2)
    shell = (kmag >= k_min) & (kmag <= k_max)
    u_hat = project_hat(grid, grid.fft(noise) * shell)
    u = grid.ifft(u_hat)
    e = 0.5 * float(np.mean(np.sum(u**2, axis=0)))
    if e == 0:
        raise ValueError("empty wavenumber shell")
    u *= math.sqrt(energy / e)
    return VectorField3(grid, u)


def vorticity_of(u: VectorField3) -> VectorField3:
    return curl(u)
