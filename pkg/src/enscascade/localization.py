"""Refined test functions, temporal cutoffs and lattice partitions of unity.

Every cutoff is a power of the cosine ramp

    theta(s) = 1                          s <= 1
             = (1 + cos(pi (s - 1))) / 2  1 < s < 2
             = 0                          s >= 2

raised to ``m = 1 / (1 - rho)``.  With that exponent ``psi^rho = theta^(m-1)``
and ``psi^(2 rho - 1) = theta^(m-2)``, so the weighted derivative bounds hold
with explicit constants that depend only on ``rho``.

Spatial cutoffs are radial, ``psi(x) = theta(|x - x0| / R)^m``.  Refinement
multiplies a cutoff by lattice factors ``h_p = g_p / sum_q g_q`` with the
tensor-product generator ``g_0(x) = prod_a theta(|x_a| / R')^m``, which equals
one on the cube ``[-R', R']^3`` and vanishes outside ``[-2R', 2R']^3``.
Because the generator is a tensor product, so is the partition: ``h_p`` is a
product of one-dimensional partition functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grid import Grid3, ScalarField

SWEEP_POINTS = 1_000_000


class CutoffConstantError(ValueError):
    """Requested bound constant is below what the profile achieves."""


# ---------------------------------------------------------------------------
# the ramp


def ramp(s):
    """Cosine ramp and its first two derivatives in ``s``."""
    s = np.asarray(s, dtype=float)
    inside = (s > 1.0) & (s < 2.0)
    a = np.pi * (s - 1.0)
    th = np.where(s <= 1.0, 1.0, np.where(inside, 0.5 * (1.0 + np.cos(a)), 0.0))
    d1 = np.where(inside, -0.5 * np.pi * np.sin(a), 0.0)
    d2 = np.where(inside, -0.5 * np.pi**2 * np.cos(a), 0.0)
    return th, d1, d2


def exponent(rho: float) -> float:
    if not (0.5 <= rho < 1.0):
        raise ValueError(f"rho must lie in [1/2, 1), got {rho}")
    return 1.0 / (1.0 - rho)


def _ramp_value(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 1.0) & (s < 2.0)
    return np.where(s <= 1.0, 1.0, np.where(inside, 0.5 * (1.0 + np.cos(np.pi * (s - 1.0))), 0.0))


def _powers(th, m):
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = th**m
        p1 = np.where(th > 0, th ** (m - 1.0), 0.0)
        p2 = np.where(th > 0, th ** (m - 2.0), 1.0 if m == 2.0 else 0.0)
    return p0, p1, p2


def _sweep(points=SWEEP_POINTS):
    return np.linspace(1.0, 2.0, points + 2)[1:-1]


@lru_cache(maxsize=None)
def radial_ratio_sup(rho: float, points: int = SWEEP_POINTS) -> tuple[float, float]:
    """Sup over a dense sweep of ``R|grad psi|/psi^rho`` and ``R^2|Lap psi|/psi^(2rho-1)``.

    Using the power structure the ratios are ``m|theta'|`` and
    ``|m(m-1) theta'^2 + m theta (theta'' + 2 theta'/s)|``, evaluated without
    any division by ``psi``.
    """
    m = exponent(rho)
    s = _sweep(points)
    th, d1, d2 = ramp(s)
    grad = m * np.abs(d1)
    lap = np.abs(m * (m - 1.0) * d1**2 + m * th * (d2 + 2.0 * d1 / s))
    return float(grad.max()), float(lap.max())


@lru_cache(maxsize=None)
def lattice_generator_bounds(rho: float, points: int = 401) -> tuple[float, float]:
    """Sup of the weighted derivative ratios of the tensor generator ``g_0``.

    Per axis ``L1 = m(m-1) theta'^2 + m theta theta''``; then
    ``|Lap g|/g^(2rho-1) = |sum_a L1_a prod_{b!=a} theta_b^2|`` and
    ``|grad g|/g^rho = m (sum_a theta_a'^2 prod_{b!=a} theta_b^2)^(1/2)``.
    Both are swept on a tensor grid of ramp coordinates.  The Laplacian ratio
    approaches ``3 m pi^2 / 2`` at the cube corners (``s -> 1+`` on every axis),
    a limit the open sweep cannot reach, so it is included explicitly.
    """
    m = exponent(rho)
    s = np.linspace(1.0, 2.0, points)
    th, d1, d2 = ramp(s)
    L1 = m * (m - 1.0) * d1**2 + m * th * d2
    G = m * np.abs(d1)
    t2 = th**2
    lap, grad = 0.0, 0.0
    for i in range(points):
        f = L1[i] * t2[:, None] * t2[None, :] + t2[i] * (L1[:, None] * t2[None, :] + t2[:, None] * L1[None, :])
        lap = max(lap, float(np.abs(f).max()))
        q = (G[i] * th[:, None] * th[None, :]) ** 2 + (th[i] * G[:, None] * th[None, :]) ** 2
        q = q + (th[i] * th[:, None] * G[None, :]) ** 2
        grad = max(grad, float(np.sqrt(q.max())))
    lap = max(lap, 3.0 * m * 0.5 * math.pi**2, float(np.abs(L1).max()))
    grad = max(grad, m * 0.5 * math.pi)
    return grad, lap


_MARGIN = 1.0 + 1e-9


def radial_c0_min(rho: float) -> float:
    """Smallest constant certified for the radial profile."""
    g, l = radial_ratio_sup(rho)
    return _MARGIN * max(g, l)


def lattice_c0_min(rho: float) -> float:
    """Smallest constant certified for both the radial profile and ``g_0``."""
    return _MARGIN * max(radial_c0_min(rho), *lattice_generator_bounds(rho))


def temporal_c0_min(rho: float) -> float:
    return _MARGIN * 3.0 * exponent(rho) * 0.5 * math.pi


# ---------------------------------------------------------------------------
# one-dimensional lattice partition


def _lattice_1d(x, Rp: float, m: float, p: int):
    """Value and derivatives of ``h_p = g_p / sum_q g_q`` along one axis."""
    spacing = 2.0 * Rp
    q0 = np.floor(x / spacing)
    S = np.zeros_like(x)
    S1 = np.zeros_like(x)
    S2 = np.zeros_like(x)
    for dq in (-1.0, 0.0, 1.0, 2.0):
        y = x - spacing * (q0 + dq)
        th, d1, d2 = ramp(np.abs(y) / Rp)
        p0, p1, p2 = _powers(th, m)
        sgn = np.sign(y)
        S += p0
        S1 += m * p1 * d1 * sgn / Rp
        S2 += (m * (m - 1.0) * p2 * d1**2 + m * p1 * d2) / Rp**2
    y = x - spacing * p
    th, d1, d2 = ramp(np.abs(y) / Rp)
    p0, p1, p2 = _powers(th, m)
    g0 = p0
    g1 = m * p1 * d1 * np.sign(y) / Rp
    g2 = (m * (m - 1.0) * p2 * d1**2 + m * p1 * d2) / Rp**2
    v = g0 / S
    d = g1 / S - g0 * S1 / S**2
    dd = g2 / S - 2.0 * g1 * S1 / S**2 - g0 * S2 / S**2 + 2.0 * g0 * S1**2 / S**3
    return v, d, dd, S


def _lattice_1d_value(x, Rp: float, m: float, p: int):
    """Value-only fast path of :func:`_lattice_1d` (same arithmetic)."""
    spacing = 2.0 * Rp
    q0 = np.floor(x / spacing)
    S = np.zeros_like(x)
    for dq in (-1.0, 0.0, 1.0, 2.0):
        S += _ramp_value(np.abs(x - spacing * (q0 + dq)) / Rp) ** m
    return _ramp_value(np.abs(x - spacing * p) / Rp) ** m / S


def lattice_partition_sum(points, Rp: float, rho: float) -> np.ndarray:
    """``sum_p g_p`` of the scale-``Rp`` lattice at the given points ``(3, ...)``."""
    m = exponent(rho)
    out = np.ones(np.shape(points)[1:])
    for a in range(3):
        _, _, _, S = _lattice_1d(np.asarray(points[a], dtype=float), Rp, m, 0)
        out = out * S
    return out


@dataclass(frozen=True)
class LatticeFactor:
    """Partition factor ``h_p`` of the scale-``scale`` lattice at index ``p``."""

    scale: float
    p: tuple[int, int, int]
    rho: float

    @property
    def center(self) -> np.ndarray:
        return 2.0 * self.scale * np.asarray(self.p, dtype=float)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.center
        return c - 2.0 * self.scale, c + 2.0 * self.scale

    def evaluate(self, x):
        m = exponent(self.rho)
        parts = [_lattice_1d(np.asarray(x[a], dtype=float), self.scale, m, self.p[a]) for a in range(3)]
        v = parts[0][0] * parts[1][0] * parts[2][0]
        grad = np.stack([parts[a][1] * parts[(a + 1) % 3][0] * parts[(a + 2) % 3][0] for a in range(3)])
        lap = sum(parts[a][2] * parts[(a + 1) % 3][0] * parts[(a + 2) % 3][0] for a in range(3))
        return v, grad, lap

    def value(self, x):
        m = exponent(self.rho)
        parts = [_lattice_1d_value(np.asarray(x[a], dtype=float), self.scale, m, self.p[a]) for a in range(3)]
        return parts[0] * parts[1] * parts[2]


# ---------------------------------------------------------------------------
# spatial test functions


@dataclass(frozen=True, eq=False)
class RefinedTestFunction:
    """Radial cutoff, optionally multiplied by lattice partition factors.

    ``c_grad`` and ``c_lap`` are the constants the function is claimed to
    satisfy at its own scale; for an unrefined function both equal ``c0``.
    """

    center: tuple[float, float, float]
    R: float
    c0: float
    rho: float
    factors: tuple[LatticeFactor, ...] = ()
    c_grad: float | None = None
    c_lap: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.c_grad is None:
            object.__setattr__(self, "c_grad", float(self.c0))
        if self.c_lap is None:
            object.__setattr__(self, "c_lap", float(self.c0))

    @property
    def scale(self) -> float:
        """Scale of the function: the finest lattice scale, else ``R``."""
        return self.factors[-1].scale if self.factors else self.R

    @property
    def support_center(self) -> np.ndarray:
        return self.factors[-1].center if self.factors else np.asarray(self.center)

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        lo, hi = c - 2.0 * self.R, c + 2.0 * self.R
        for f in self.factors:
            flo, fhi = f.box()
            lo, hi = np.maximum(lo, flo), np.minimum(hi, fhi)
        return lo, hi

    def has_support(self) -> bool:
        """Whether the open support is non-empty."""
        lo, hi = self.support_box()
        if np.any(hi <= lo):
            return False
        # distance from the ball centre to the box must be < 2R
        c = np.asarray(self.center)
        nearest = np.clip(c, lo, hi)
        return bool(np.linalg.norm(nearest - c) < 2.0 * self.R)

    def evaluate(self, x):
        """Analytic value, gradient ``(3, ...)`` and Laplacian at points ``x``."""
        x = np.asarray(x, dtype=float)
        m = exponent(self.rho)
        d = x - np.asarray(self.center).reshape((3,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum(d**2, axis=0))
        s = r / self.R
        th, d1, d2 = ramp(s)
        p0, p1, p2 = _powers(th, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r > 0, d / np.where(r > 0, r, 1.0), 0.0)
            radial_term = np.where(s > 0, 2.0 * d1 / np.where(s > 0, s, 1.0), 0.0)
        v = p0
        dr = m * p1 * d1 / self.R
        grad = dr * unit
        lap = (m * (m - 1.0) * p2 * d1**2 + m * p1 * (d2 + radial_term)) / self.R**2
        for f in self.factors:
            fv, fg, fl = f.evaluate(x)
            lap = lap * fv + 2.0 * np.sum(grad * fg, axis=0) + v * fl
            grad = grad * fv + v * fg
            v = v * fv
        return v, grad, lap

    def value(self, x) -> np.ndarray:
        """Value only; bit-identical to ``evaluate(x)[0]``."""
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center).reshape((3,) + (1,) * (x.ndim - 1))
        v = _ramp_value(np.sqrt(np.sum(d**2, axis=0)) / self.R) ** exponent(self.rho)
        for f in self.factors:
            v = v * f.value(x)
        return v

    def __call__(self, x) -> np.ndarray:
        return self.value(x)

    # grid sampling -------------------------------------------------------

    def node_box(self, grid: Grid3) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.support_box()
        jlo = np.ceil((lo + 0.5 * grid.L) / grid.h - 1e-9).astype(int)
        jhi = np.floor((hi + 0.5 * grid.L) / grid.h + 1e-9).astype(int)
        if np.any(jhi - jlo + 1 > grid.n):
            raise ValueError("test function support exceeds the periodic box")
        return jlo, jhi

    def sample(self, grid: Grid3) -> tuple[np.ndarray, np.ndarray]:
        """Sparse samples ``(flat_indices, values)`` of the nonzero nodes."""
        key = ("sample", grid)
        if key in self._cache:
            return self._cache[key]
        idx, x = self._nodes(grid)
        v = self.value(x)
        keep = v > 0
        out = (idx[keep], v[keep])
        for a in out:
            a.flags.writeable = False
        self._cache[key] = out
        return out

    def _nodes(self, grid: Grid3):
        jlo, jhi = self.node_box(grid)
        if np.any(jhi < jlo):
            return np.zeros(0, dtype=np.int64), np.zeros((3, 0))
        axes = [np.arange(jlo[a], jhi[a] + 1) for a in range(3)]
        J = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(3, -1)
        x = -0.5 * grid.L + grid.h * J
        w = np.mod(J, grid.n)
        idx = np.ravel_multi_index((w[0], w[1], w[2]), grid.shape)
        return idx, x

    def on_grid(self, grid: Grid3) -> ScalarField:
        idx, v = self.sample(grid)
        out = np.zeros(grid.n**3)
        out[idx] = v
        return ScalarField(grid, out.reshape(grid.shape))

    def max_on_grid(self, grid: Grid3) -> float:
        v = self.sample(grid)[1]
        return float(v.max()) if v.size else 0.0


def make_test_function(x0, R: float, c0: float, rho: float = 0.75) -> RefinedTestFunction:
    """Radial ``(c0, rho)`` test function at scale ``R`` centred at ``x0``."""
    if not R > 0:
        raise ValueError(f"scale must be positive, got {R}")
    cmin = radial_c0_min(rho)
    if c0 < cmin:
        raise CutoffConstantError(f"C0={c0} below the certified profile constant {cmin:.6f} for rho={rho}")
    return RefinedTestFunction(tuple(x0), float(R), float(c0), float(rho))


def refine(psi: RefinedTestFunction, Rp: float, grid: Grid3 | None = None) -> list[RefinedTestFunction]:
    """Split ``psi`` into the pieces ``psi * h_p`` over the scale-``Rp`` lattice.

    Pieces with empty support are never produced; with a grid, pieces whose
    maximum on the nodes is below ``1e-14`` are dropped as well.
    """
    if not (0 < Rp < psi.scale):
        raise ValueError(f"refinement scale R'={Rp} must satisfy 0 < R' < R={psi.scale}")
    cmin = lattice_c0_min(psi.rho)
    if psi.c0 < cmin:
        raise CutoffConstantError(f"C0={psi.c0} below the lattice generator constant {cmin:.6f}")
    lo, hi = psi.support_box()
    spacing = 2.0 * Rp
    # lattice cubes (half-width 2R') with open overlap of [lo, hi]
    plo = np.floor(lo / spacing - 1.0 + 1e-12).astype(int)
    phi = np.ceil(hi / spacing + 1.0 - 1e-12).astype(int)
    c0 = psi.c0
    c_grad = 7.0 * c0
    c_lap = 4.0 * c0 + 22.0 * c0**2
    children = []
    for px in range(plo[0], phi[0] + 1):
        for py in range(plo[1], phi[1] + 1):
            for pz in range(plo[2], phi[2] + 1):
                fac = LatticeFactor(float(Rp), (px, py, pz), psi.rho)
                child = RefinedTestFunction(
                    psi.center,
                    psi.R,
                    max(c_grad, c_lap),
                    psi.rho,
                    psi.factors + (fac,),
                    c_grad=c_grad,
                    c_lap=c_lap,
                )
                if not child.has_support():
                    continue
                if grid is not None and child.max_on_grid(grid) < 1e-14:
                    continue
                children.append(child)
    return children


# ---------------------------------------------------------------------------
# temporal cutoff


@dataclass(frozen=True)
class TemporalCutoff:
    """``eta(t) = theta(3 - 3t/T)^m``: zero on ``[0, T/3]``, one on ``[2T/3, T]``."""

    T: float
    c0: float
    rho: float

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        m = exponent(self.rho)
        s = 3.0 - 3.0 * t / self.T
        th, d1, d2 = ramp(s)
        p0, p1, p2 = _powers(th, m)
        k = -3.0 / self.T
        value = p0
        d = m * p1 * d1 * k
        dd = (m * (m - 1.0) * p2 * d1**2 + m * p1 * d2) * k**2
        return value, d, dd

    def __call__(self, t):
        return self.evaluate(t)[0]

    def derivative(self, t):
        return self.evaluate(t)[1]


def make_temporal_cutoff(T: float, c0: float, rho: float = 0.75) -> TemporalCutoff:
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    cmin = temporal_c0_min(rho)
    if c0 < cmin:
        raise CutoffConstantError(f"C0={c0} below the certified temporal constant {cmin:.6f}")
    return TemporalCutoff(float(T), float(c0), float(rho))


@dataclass(frozen=True)
class SpaceTimeCutoff:
    """``phi(x, t) = psi(x) * eta(t)``."""

    psi: RefinedTestFunction
    eta: TemporalCutoff

    def __call__(self, x, t):
        return self.psi(x) * self.eta(t)


# ---------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class BoundReport:
    max_gradient_ratio: float
    max_laplacian_ratio: float | None
    passed: bool
    n_points: int


def _ratios(v, grad, lap, scale, rho, c_grad, c_lap):
    live = v > 1e-250
    if not np.any(live):
        return 0.0, 0.0
    v, lap = v[live], lap[live]
    gnorm = np.sqrt(np.sum(grad[:, live] ** 2, axis=0))
    gr = gnorm * scale / (c_grad * v**rho)
    lr = np.abs(lap) * scale**2 / (c_lap * v ** (2.0 * rho - 1.0))
    return float(gr.max()), float(lr.max())


def verify_bounds(
    obj,
    grid: Grid3 | None = None,
    c_grad: float | None = None,
    c_lap: float | None = None,
    n_sweep: int = SWEEP_POINTS,
    seed: int = 0,
) -> BoundReport:
    """Measure the weighted derivative ratios of a cutoff against its constants.

    Ratios are ``|grad psi| R / (C psi^rho)`` and ``|Lap psi| R^2 / (C psi^(2rho-1))``
    over the nonzero grid nodes and a dense sweep: radial for unrefined
    functions, quasi-random in the support box for refined ones, uniform in
    ``(0, T)`` for temporal cutoffs.  The check passes iff all ratios are < 1.
    """
    if isinstance(obj, TemporalCutoff):
        c = obj.c0 if c_grad is None else c_grad
        t = np.linspace(0.0, obj.T, n_sweep + 2)[1:-1]
        v, d, _ = obj.evaluate(t)
        live = v > 1e-250
        r = np.abs(d[live]) * obj.T / (c * v[live] ** obj.rho) if np.any(live) else np.zeros(1)
        gr = float(r.max())
        return BoundReport(gr, None, gr < 1.0, int(t.size))

    psi = obj
    cg = psi.c_grad if c_grad is None else c_grad
    cl = psi.c_lap if c_lap is None else c_lap
    scale = psi.scale
    gmax, lmax, count = 0.0, 0.0, 0
    if grid is not None:
        _, x = psi._nodes(grid)
        if x.shape[1]:
            gr, lr = _ratios(*psi.evaluate(x), scale, psi.rho, cg, cl)
            gmax, lmax = max(gmax, gr), max(lmax, lr)
            count += x.shape[1]
    if n_sweep:
        if psi.factors:
            from scipy.stats import qmc

            lo, hi = psi.support_box()
            u = qmc.Sobol(3, scramble=True, seed=seed).random_base2(max(1, math.ceil(math.log2(n_sweep))))
            x = (lo + (hi - lo) * u).T
        else:
            s = np.linspace(0.0, 2.0 * psi.R, n_sweep + 2)[1:-1]
            e = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)
            x = np.asarray(psi.center)[:, None] + e[:, None] * s[None, :]
        gr, lr = _ratios(*psi.evaluate(x), scale, psi.rho, cg, cl)
        gmax, lmax = max(gmax, gr), max(lmax, lr)
        count += x.shape[1]
    return BoundReport(gmax, lmax, gmax < 1.0 and lmax < 1.0, count)
