"""Scale-R0 means, the Kraichnan scale and the estimators behind the assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import Grid3, biot_savart_hat, box_sum, velocity_gradient
from ..localization import RefinedTestFunction, SpaceTimeCutoff
from ..solver import Trajectory
from .flux import TimeIntegrals


def _pow(v, d):
    """``v**d`` with ``0**0 := 0``, so a zero exponent gives the support indicator."""
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(v > 0, v**d, 0.0)


def _local(grid: Grid3, psi: RefinedTestFunction, density: np.ndarray, power: float = 1.0) -> float:
    idx, v = psi.sample(grid)
    w = v if power == 1.0 else _pow(v, power)
    return grid.cell_volume * float(np.dot(density.reshape(-1)[idx], w))


def outer_radius(R0: float) -> float:
    """Radius ``2 R0 + R0^(2/3)`` of the region seen by the localized terms."""
    return 2.0 * R0 + R0 ** (2.0 / 3.0)


def mean_enstrophy_E0(traj: Trajectory, phi0: SpaceTimeCutoff) -> float:
    """``(1/T) R0^-3 int int 1/2 |w|^2 phi0^(2 rho - 1) dx dt``."""
    psi, eta = phi0.psi, phi0.eta
    if traj.T == 0:
        return 0.0
    d = 2.0 * psi.rho - 1.0
    ew = traj.weights * _pow(eta(traj.times), d)
    total = 0.0
    for k, snap in enumerate(traj.snapshots):
        if ew[k] == 0.0:
            continue
        total += ew[k] * _local(traj.grid, psi, 0.5 * np.sum(snap.values**2, axis=0), d)
    return total / (traj.T * psi.R**3)


def modified_palinstrophy_P0(
    traj: Trajectory, phi0: SpaceTimeCutoff, integrals: TimeIntegrals | None = None
) -> float:
    """``(1/T) R0^-3 [int int |grad w|^2 phi0 + int |w(T)|^2 psi0]``."""
    psi, eta = phi0.psi, phi0.eta
    g = traj.grid
    if traj.T == 0:
        return 0.0
    if integrals is not None:
        pal = integrals.palinstrophy
    else:
        pal = np.zeros(g.shape)
        ev = traj.weights * eta(traj.times)
        kodd = g.wavenumbers_odd
        for k, snap in enumerate(traj.snapshots):
            if ev[k] == 0.0:
                continue
            w_hat = g.fft(snap.values)
            for j in range(3):
                pal += ev[k] * np.sum(g.ifft(1j * kodd[j] * w_hat) ** 2, axis=0)
    terminal = np.sum(traj.final.values**2, axis=0)
    return (_local(g, psi, pal) + _local(g, psi, terminal)) / (traj.T * psi.R**3)


def kraichnan_scale(E0: float, P0: float) -> float | None:
    """``sigma0 = (E0 / P0)^(1/2)``; ``None`` when ``P0 = 0``."""
    if P0 <= 0:
        return None
    return math.sqrt(E0 / P0)


def vorticity_l1_sup(traj: Trajectory) -> float:
    """``B_T = max_k int |w(t_k)| dx`` over the box."""
    dv = traj.grid.cell_volume
    return max(dv * box_sum(np.sqrt(np.sum(s.values**2, axis=0))) for s in traj.snapshots)


# ---------------------------------------------------------------------------
# Morrey norm


@dataclass(frozen=True)
class MorreyResult:
    value: float
    q: float
    radii: tuple[float, ...]
    n_centers: int
    center_stride: int
    per_snapshot: np.ndarray = field(repr=False)
    argmax_radius: float | None = None


def default_radii(grid: Grid3, R0: float) -> tuple[float, ...]:
    """Dyadic radii ``2h, 4h, ...`` below ``2R0 + R0^(2/3)``, plus that radius itself."""
    rmax = outer_radius(R0)
    out, r = [], 2.0 * grid.h
    while r < rmax:
        out.append(r)
        r *= 2.0
    out.append(rmax)
    return tuple(out)


class _BallSums:
    """Sums of a density over ``B(y, r)`` for all nodes ``y`` of a region crop."""

    def __init__(self, grid: Grid3, rmax: float, radii):
        self.grid = grid
        h = grid.h
        half = int(math.floor(rmax / h + 1e-9))
        if 2 * half + 1 > grid.n:
            raise ValueError("the Morrey region does not fit in the periodic box")
        c = grid.n // 2  # origin node
        self.sl = slice(c - half, c + half + 1)
        self.size = 2 * half + 1
        axis = h * np.arange(-half, half + 1)
        X = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"))
        self.offsets = X
        self.region = np.sum(X**2, axis=0) <= rmax**2 * (1 + 1e-12)
        self.kernels = []
        for r in radii:
            k = int(math.floor(r / h + 1e-9))
            a = h * np.arange(-k, k + 1)
            D = np.stack(np.meshgrid(a, a, a, indexing="ij"))
            self.kernels.append((k, (np.sum(D**2, axis=0) <= r * r * (1 + 1e-12)).astype(float)))
        kmax = max(k for k, _ in self.kernels)
        self.shape = tuple([self.size + 2 * kmax] * 3)
        self.kmax = kmax
        self.kernel_hats = []
        for k, K in self.kernels:
            pad = np.zeros(self.shape)
            pad[: 2 * k + 1, : 2 * k + 1, : 2 * k + 1] = K
            self.kernel_hats.append((k, np.fft.rfftn(pad)))

    def crop(self, density: np.ndarray) -> np.ndarray:
        return np.where(self.region, density[self.sl, self.sl, self.sl], 0.0)

    def sums(self, cropped: np.ndarray):
        """Yield ball sums (times cell volume) for each radius, on the crop."""
        pad = np.zeros(self.shape)
        pad[: self.size, : self.size, : self.size] = cropped
        f_hat = np.fft.rfftn(pad)
        dv = self.grid.cell_volume
        for k, K_hat in self.kernel_hats:
            full = np.fft.irfftn(f_hat * K_hat, s=self.shape, axes=(0, 1, 2))
            yield dv * full[k : k + self.size, k : k + self.size, k : k + self.size]


def _center_mask(bs: _BallSums, stride: int) -> np.ndarray:
    half = (bs.size - 1) // 2
    j = np.arange(-half, half + 1)
    on = (np.mod(j, stride) == 0)
    lattice = on[:, None, None] & on[None, :, None] & on[None, None, :]
    return bs.region & lattice


def morrey_norm(traj, q: float, R0: float, radii=None, center_stride: int = 1) -> MorreyResult:
    """Discrete ``L^2_t M^{2,q}_x`` norm of the vorticity on ``B(0, 2R0 + R0^(2/3))``.

    Per snapshot ``m(t) = max_{y, r} r^{-3(1 - 2/q)} int_{B(y,r) ∩ region} |w|^2``
    over region nodes ``y`` (every ``center_stride``-th node per axis, counted
    from the origin) and the given radii.  The norm is
    ``(int_0^T m(t) dt)^(1/2)`` with trapezoid weights; a single snapshot at
    ``T = 0`` returns ``m(0)^(1/2)``.

    ``traj`` may be a :class:`Trajectory` or a sequence of vorticity fields
    (then equally weighted on ``[0, 1]``).
    """
    if not q > 2:
        raise ValueError(f"Morrey exponent q must exceed 2, got {q}")
    if isinstance(traj, Trajectory):
        snaps, weights, grid = traj.snapshots, traj.weights, traj.grid
        if len(snaps) == 1:
            weights = np.ones(1)
    else:
        snaps = tuple(traj)
        grid = snaps[0].grid
        weights = np.full(len(snaps), 1.0 / len(snaps))
    radii = tuple(sorted(default_radii(grid, R0) if radii is None else radii))
    if not radii or radii[0] <= 0:
        raise ValueError("radii must be positive")
    rmax = outer_radius(R0)
    bs = _BallSums(grid, rmax, radii)
    centers = _center_mask(bs, int(center_stride))
    expo = 3.0 * (1.0 - 2.0 / q)
    per = np.zeros(len(snaps))
    best_r = np.zeros(len(snaps))
    for t, s in enumerate(snaps):
        dens = bs.crop(np.sum(s.values**2, axis=0))
        if not dens.any():
            continue
        for r, S in zip(radii, bs.sums(dens)):
            val = float(S[centers].max()) / r**expo
            if val > per[t]:
                per[t], best_r[t] = val, r
    value = math.sqrt(max(0.0, float(np.dot(weights, per))))
    top = int(np.argmax(per)) if per.size else 0
    return MorreyResult(value, float(q), radii, int(centers.sum()), int(center_stride), per,
                        float(best_r[top]) if per[top] > 0 else None)


def local_l2_norms(grid: Grid3, wsq_time: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """``||w||_{L^2(B(c, radius) x (0, T))}`` for each centre, from ``int |w|^2 dt``.

    Balls are taken on the torus (minimum-image distance).
    """
    out = np.empty(len(centers))
    X = grid.coords
    L = grid.L
    for i, c in enumerate(centers):
        d = X - np.asarray(c, dtype=float).reshape(3, 1, 1, 1)
        d -= L * np.rint(d / L)
        mask = np.sum(d**2, axis=0) <= radius * radius
        out[i] = math.sqrt(max(0.0, grid.cell_volume * float(np.sum(wsq_time[mask]))))
    return out


# ---------------------------------------------------------------------------
# coherence of the vorticity direction


@dataclass(frozen=True)
class CoherenceResult:
    C1_measured: float | None
    threshold_M: float
    n_points: int
    n_samples: int
    n_pairs: int
    snapshots_used: int
    violating_fraction: float | None = None
    C1_bound: float | None = None


def _sample_indices(count: int, n_samples: int | None, seed: int) -> np.ndarray:
    if n_samples is None or n_samples >= count:
        return np.arange(count)
    from scipy.stats import qmc

    m = max(0, math.ceil(math.log2(n_samples)))
    u = qmc.Sobol(1, scramble=True, seed=seed).random_base2(m)[:n_samples, 0]
    return np.unique(np.minimum((u * count).astype(np.int64), count - 1))


def coherence_estimate(
    traj: Trajectory,
    M: float,
    R0: float,
    n_samples: int | None = 512,
    seed: int = 0,
    max_snapshots: int = 8,
    C1: float | None = None,
    chunk: int = 2048,
) -> CoherenceResult:
    """Measured Hölder constant of the vorticity direction near intense gradients.

    Points ``x`` are all nodes of ``B(0, 2R0)`` with Frobenius ``|grad u| > M``;
    partners ``y`` are a Sobol subsample of the nodes of
    ``B(0, 2R0 + R0^(2/3))``.  The measured constant is the largest
    ``|xi(x) x xi(y)| / |x - y|^(1/2)`` over those pairs and over up to
    ``max_snapshots`` evenly spaced snapshots (always including ``t = T``).
    Pairs where either ``|w| < 1e-12`` are skipped.  With ``C1`` supplied the
    fraction of pairs exceeding it is reported as well.
    """
    if not M > 0:
        raise ValueError("the gradient threshold M must be positive")
    g = traj.grid
    nsnap = len(traj.snapshots)
    picks = np.unique(np.rint(np.linspace(0, nsnap - 1, min(max_snapshots, nsnap))).astype(int))
    X = g.coords.reshape(3, -1)
    r = g.radius.reshape(-1)
    inner = r < 2.0 * R0
    outer = np.nonzero(r < outer_radius(R0))[0]
    best, pairs, over, npts, nsamp = -1.0, 0, 0, 0, 0
    for k in picks:
        w = traj.snapshots[k].values
        G = velocity_gradient(g, biot_savart_hat(g, g.fft(w)))
        frob = np.sqrt(np.sum(G**2, axis=(0, 1))).reshape(-1)
        W = w.reshape(3, -1)
        mag = np.sqrt(np.sum(W**2, axis=0))
        ok = mag >= 1e-12
        xs = np.nonzero(inner & (frob > M) & ok)[0]
        ycand = outer[ok[outer]]
        if xs.size == 0 or ycand.size == 0:
            continue
        ys = ycand[_sample_indices(ycand.size, n_samples, seed + int(k))]
        npts += xs.size
        nsamp += ys.size
        xi_y = W[:, ys] / mag[ys]
        Y = X[:, ys]
        for s in range(0, xs.size, chunk):
            xi = xs[s : s + chunk]
            xi_x = W[:, xi] / mag[xi]
            cx = np.cross(xi_x[:, :, None], xi_y[:, None, :], axis=0)
            sin = np.sqrt(np.sum(cx**2, axis=0))
            dist = np.sqrt(np.sum((X[:, xi][:, :, None] - Y[:, None, :]) ** 2, axis=0))
            valid = dist > 0
            ratio = np.where(valid, sin / np.sqrt(np.where(valid, dist, 1.0)), 0.0)
            pairs += int(valid.sum())
            if ratio.size:
                best = max(best, float(ratio.max()))
            if C1 is not None:
                over += int(np.sum(ratio > C1))
    measured = best if pairs else None
    frac = (over / pairs if pairs else None) if C1 is not None else None
    return CoherenceResult(measured, float(M), npts, nsamp, pairs, len(picks), frac, C1)


# ---------------------------------------------------------------------------
# modulation


@dataclass(frozen=True)
class ModulationResult:
    ratio: float
    terminal: float
    supremum: float

    @property
    def passed(self) -> bool:
        return self.ratio >= 0.5


def modulation_check(traj: Trajectory, psi0: RefinedTestFunction) -> ModulationResult:
    """``int |w(T)|^2 psi0 / max_k int |w(t_k)|^2 psi0``, with ``0/0 := 1``."""
    vals = [_local(traj.grid, psi0, np.sum(s.values**2, axis=0)) for s in traj.snapshots]
    sup, term = max(vals), vals[-1]
    ratio = 1.0 if sup == 0.0 else term / sup
    return ModulationResult(float(ratio), float(term), float(sup))
