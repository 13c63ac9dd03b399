"""Localized enstrophy flux and the four-term flux budget.

For a space-time cutoff ``phi_i = psi_i(x) eta(t)`` the localized flux

    F_i = int_0^T int 1/2 |w|^2 (u . grad phi_i) dx dt

splits, by the local enstrophy equation, into

    F_i = A_i - B_i - C_i,
    A_i = int 1/2 |w(T)|^2 psi_i + int_0^T int |grad w|^2 phi_i,
    B_i = int_0^T int 1/2 |w|^2 (d_t phi_i + Lap phi_i),
    C_i = int_0^T int (w . grad) u . phi_i w.

Because ``phi_i`` is separable, every term is an integral of a fixed
time-integrated field against ``psi_i``.  :func:`time_integrals` streams over
the snapshots once and builds those fields; per-member terms are then sparse
dot products with the sampled cutoff.  Spatial derivatives that land on the
cutoff are moved onto the field with the spectral adjoint, so discrete
integration by parts holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ensemble import Ensemble
from ..grid import Grid3, ScalarField, biot_savart_hat, box_sum, div_hat
from ..localization import TemporalCutoff
from ..solver import Trajectory

_EPS = 1e-14


@dataclass(frozen=True, eq=False)
class TimeIntegrals:
    """Time-integrated densities of a trajectory against ``eta`` (trapezoid rule).

    Attributes
    ----------
    advection
        ``int -(u . grad) w . w eta dt``; equals ``T f``.
    flux_divergence
        ``div int 1/2 |w|^2 u eta dt`` (spectral divergence).
    palinstrophy
        ``int |grad w|^2 eta dt``.
    enstrophy_deta
        ``int 1/2 |w|^2 eta' dt``.
    enstrophy_lap
        ``Lap int 1/2 |w|^2 eta dt`` (spectral Laplacian).
    stretching
        ``int (w . grad) u . w eta dt``.
    terminal
        ``1/2 |w(T)|^2``.
    active
        Whether advection and stretching were included.
    """

    grid: Grid3
    T: float
    eta: TemporalCutoff
    advection: np.ndarray
    flux_divergence: np.ndarray
    palinstrophy: np.ndarray
    enstrophy_deta: np.ndarray
    enstrophy_lap: np.ndarray
    stretching: np.ndarray
    terminal: np.ndarray
    active: bool


def _snapshot_densities(grid: Grid3, w: np.ndarray, active: bool):
    kodd = grid.wavenumbers_odd
    w_hat = grid.fft(w)
    dw = np.empty((3, 3) + grid.shape)  # dw[i, j] = d_j w_i
    for j in range(3):
        dw[:, j] = grid.ifft(1j * kodd[j] * w_hat)
    ens = 0.5 * np.sum(w**2, axis=0)
    pal = np.sum(dw**2, axis=(0, 1))
    if not active:
        return ens, pal, None, None, None
    u_hat = biot_savart_hat(grid, w_hat)
    u = grid.ifft(u_hat)
    adv = -np.einsum("j...,ij...,i...->...", u, dw, w)
    du = np.empty((3, 3) + grid.shape)
    for j in range(3):
        du[:, j] = grid.ifft(1j * kodd[j] * u_hat)
    stretch = np.einsum("j...,ij...,i...->...", w, du, w)
    return ens, pal, adv, ens * u, stretch


def time_integrals(traj: Trajectory, eta: TemporalCutoff, active: bool | None = None) -> TimeIntegrals:
    """Stream over the snapshots and accumulate the budget densities.

    ``active`` selects whether the advective and stretching terms belong to
    the dynamics; it defaults to the trajectory's ``nonlinear`` flag, so a
    Stokes trajectory carries no flux and no stretching.
    """
    g = traj.grid
    if active is None:
        active = bool(traj.config.nonlinear)
    if not np.isclose(eta.T, traj.T, rtol=1e-12, atol=0.0):
        raise ValueError(f"temporal cutoff horizon {eta.T} does not match trajectory T={traj.T}")
    wt = traj.weights
    ev, ed, _ = eta.evaluate(traj.times)
    acc = {k: np.zeros(g.shape) for k in ("adv", "pal", "edeta", "eeta", "stretch")}
    fluxvec = np.zeros((3,) + g.shape)
    for k, snap in enumerate(traj.snapshots):
        a, b = wt[k] * ev[k], wt[k] * ed[k]
        if a == 0.0 and b == 0.0:
            continue
        ens, pal, adv, fv, stretch = _snapshot_densities(g, snap.values, active and a != 0.0)
        acc["edeta"] += b * ens
        if a == 0.0:
            continue
        acc["eeta"] += a * ens
        acc["pal"] += a * pal
        if adv is not None:
            acc["adv"] += a * adv
            fluxvec += a * fv
            acc["stretch"] += a * stretch
    flux_div = g.ifft(div_hat(g, g.fft(fluxvec)))
    lap = g.ifft(-g.k2 * g.fft(acc["eeta"]))
    terminal = 0.5 * np.sum(traj.final.values**2, axis=0)
    return TimeIntegrals(
        g, traj.T, eta, acc["adv"], flux_div, acc["pal"], acc["edeta"], lap, acc["stretch"], terminal, active
    )


def flux_density(traj: Trajectory, eta: TemporalCutoff, integrals: TimeIntegrals | None = None) -> ScalarField:
    """``f = -(1/T) int_0^T (u . grad) w . w eta dt``."""
    ti = integrals or time_integrals(traj, eta)
    if ti.T == 0:
        return ScalarField(ti.grid, np.zeros(ti.grid.shape))
    return ScalarField(ti.grid, ti.advection / ti.T)


def _dots(e: Ensemble, field: np.ndarray) -> np.ndarray:
    return e.member_integrals(field)


@dataclass(frozen=True)
class LocalizedFlux:
    F: np.ndarray
    F_gradient: np.ndarray | None
    average: float

    @property
    def max_form_discrepancy(self) -> float | None:
        """Largest relative gap between the two forms of ``F_i``."""
        if self.F_gradient is None or len(self.F) == 0:
            return None
        scale = np.maximum(np.abs(self.F), np.abs(self.F_gradient)) + _EPS
        return float(np.max(np.abs(self.F - self.F_gradient) / scale))


def localized_flux(
    f: ScalarField, e: Ensemble, T: float = 1.0, integrals: TimeIntegrals | None = None
) -> LocalizedFlux:
    """Per-member ``F_i = T int f psi_i`` and the average ``<F>_R``.

    With ``integrals`` the gradient form ``int int 1/2|w|^2 u . grad phi_i``
    is computed as well, and ``T`` is taken from it.
    """
    if f.grid != e.grid:
        from ..grid import GridMismatchError

        raise GridMismatchError(f"flux density grid {f.grid} != ensemble grid {e.grid}")
    if integrals is not None:
        T = integrals.T
    F = T * _dots(e, f.values)
    Fg = None if integrals is None else -_dots(e, integrals.flux_divergence)
    avg = box_sum(F) / (e.nominal_count * e.R**3 * T) if T > 0 else 0.0
    return LocalizedFlux(F, Fg, avg)


@dataclass(frozen=True)
class FluxBudget:
    """Per-member budget terms, time-integrated and unnormalized."""

    F: np.ndarray
    F_gradient: np.ndarray
    A: np.ndarray
    A_sup: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.F - (self.A - self.B - self.C)

    @property
    def relative_residual(self) -> np.ndarray:
        return np.abs(self.residual) / (np.abs(self.A) + np.abs(self.B) + np.abs(self.C) + _EPS)

    @property
    def max_relative_residual(self) -> float:
        r = self.relative_residual
        return float(r.max()) if r.size else 0.0

    @property
    def max_form_discrepancy(self) -> float:
        if not self.F.size:
            return 0.0
        gap = np.abs(self.F - self.F_gradient)
        scale = np.abs(self.A) + np.abs(self.B) + np.abs(self.C) + _EPS
        return float(np.max(gap / scale))

    def sums(self) -> dict:
        return {k: box_sum(getattr(self, k)) for k in ("F", "F_gradient", "A", "A_sup", "B", "C")}


def sup_localized_enstrophy(traj: Trajectory, e: Ensemble) -> np.ndarray:
    """``max_k int 1/2 |w(t_k)|^2 psi_i`` over the stored snapshots."""
    out = np.full(len(e.members), -np.inf)
    for snap in traj.snapshots:
        ens = 0.5 * np.sum(snap.values**2, axis=0)
        np.maximum(out, e.member_integrals(ens), out=out)
    return out


def flux_budget(
    traj: Trajectory,
    e: Ensemble,
    eta: TemporalCutoff,
    integrals: TimeIntegrals | None = None,
) -> FluxBudget:
    """All four budget terms for every stored member of ``e``."""
    if traj.grid != e.grid:
        from ..grid import GridMismatchError

        raise GridMismatchError("trajectory and ensemble live on different grids")
    if traj.T <= 0:
        raise ValueError("flux budget needs a trajectory with T > 0 ending at t = T")
    ti = integrals or time_integrals(traj, eta)
    F = _dots(e, ti.advection)
    Fg = -_dots(e, ti.flux_divergence)
    pal = _dots(e, ti.palinstrophy)
    A = _dots(e, ti.terminal) + pal
    A_sup = sup_localized_enstrophy(traj, e) + pal
    B = _dots(e, ti.enstrophy_deta + ti.enstrophy_lap)
    C = _dots(e, ti.stretching)
    return FluxBudget(F, Fg, A, A_sup, B, C)
