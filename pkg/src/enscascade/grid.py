"""Periodic-box grids, sampled fields and spectral differential operators.

The box is ``[-L/2, L/2)^3`` sampled at ``n`` nodes per axis, so the origin
is a grid node.  Arrays are indexed ``[ix, iy, iz]``; vector fields carry the
component as a leading axis, shape ``(3, n, n, n)``.

All derivatives are taken in Fourier space with real-to-complex transforms.
Odd derivatives zero the Nyquist plane, which keeps them real and exactly
skew-adjoint with respect to the rectangle-rule inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Fields living on different grids were combined."""


class NonFiniteFieldError(ValueError):
    """A field contains NaN or infinite values."""


@dataclass(frozen=True)
class Grid3:
    n: int
    L: float = 2 * math.pi

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"box length must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return -0.5 * self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(3, n, n, n)``."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance of every node from the origin."""
        return np.sqrt(np.sum(self.coords**2, axis=0))

    def wrap_index(self, i):
        """Periodic wrap-around of integer node indices."""
        return np.mod(i, self.n)

    def index_of(self, x) -> np.ndarray:
        """Nearest node index (with wrap-around) of a point."""
        x = np.asarray(x, dtype=float)
        return self.wrap_index(np.rint((x + 0.5 * self.L) / self.h).astype(int))

    # spectral machinery -------------------------------------------------

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable angular wavenumbers for the rfftn layout."""
        n = self.n
        k = np.fft.fftfreq(n, d=1.0 / n) * (2 * math.pi / self.L)
        kr = np.fft.rfftfreq(n, d=1.0 / n) * (2 * math.pi / self.L)
        return (k[:, None, None], k[None, :, None], kr[None, None, :])

    @cached_property
    def wavenumbers_odd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers with the Nyquist entry zeroed, for odd derivatives."""
        out = []
        for k in self.wavenumbers:
            k = k.copy()
            flat = k.reshape(-1)
            nyq = self.n // 2
            if flat.size > nyq:
                flat[nyq] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def k2_safe(self) -> np.ndarray:
        k2 = self.k2.copy()
        k2[0, 0, 0] = 1.0
        return k2

    @cached_property
    def integer_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        k = np.fft.fftfreq(n, d=1.0 / n)
        kr = np.fft.rfftfreq(n, d=1.0 / n)
        return (k[:, None, None], k[None, :, None], kr[None, None, :])

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with every ``|k_i| < n/3``."""
        cut = self.n / 3.0
        kx, ky, kz = self.integer_wavenumbers
        return (np.abs(kx) < cut) & (np.abs(ky) < cut) & (np.abs(kz) < cut)

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(a, axes=(-3, -2, -1))

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(a_hat, s=self.shape, axes=(-3, -2, -1))


def _check_finite(a: np.ndarray):
    if not np.all(np.isfinite(a)):
        raise NonFiniteFieldError("field contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"scalar field shape {v.shape} != {self.grid.shape}")
        _check_finite(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class VectorField3:
    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (3,) + self.grid.shape:
            raise ValueError(f"vector field shape {v.shape} != {(3,) + self.grid.shape}")
        _check_finite(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])

    @property
    def x(self) -> ScalarField:
        return self.component(0)

    @property
    def y(self) -> ScalarField:
        return self.component(1)

    @property
    def z(self) -> ScalarField:
        return self.component(2)

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=0)))


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")
    return g


# ---------------------------------------------------------------------------
# array-level spectral kernels (used by the solver and diagnostics)


def curl_hat(grid: Grid3, v_hat: np.ndarray, kodd=None) -> np.ndarray:
    kx, ky, kz = grid.wavenumbers_odd if kodd is None else kodd
    out = np.empty_like(v_hat)
    out[0] = 1j * (ky * v_hat[2] - kz * v_hat[1])
    out[1] = 1j * (kz * v_hat[0] - kx * v_hat[2])
    out[2] = 1j * (kx * v_hat[1] - ky * v_hat[0])
    return out


def grad_hat(grid: Grid3, s_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.wavenumbers_odd
    return np.stack([1j * kx * s_hat, 1j * ky * s_hat, 1j * kz * s_hat])


def div_hat(grid: Grid3, v_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.wavenumbers_odd
    return 1j * (kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2])


def project_hat(grid: Grid3, v_hat: np.ndarray) -> np.ndarray:
    """Leray projection onto divergence-free, zero-mean fields."""
    kx, ky, kz = grid.wavenumbers_odd
    k2 = kx**2 + ky**2 + kz**2
    k2[k2 == 0] = 1.0
    kdotv = kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2]
    out = np.stack([v_hat[0] - kx * kdotv / k2, v_hat[1] - ky * kdotv / k2, v_hat[2] - kz * kdotv / k2])
    out[:, 0, 0, 0] = 0.0
    return out


def biot_savart_hat(grid: Grid3, w_hat: np.ndarray) -> np.ndarray:
    """``u = curl (-Delta)^{-1} w`` in spectral space, zero-mean gauge."""
    u_hat = curl_hat(grid, w_hat) / grid.k2_safe
    u_hat[:, 0, 0, 0] = 0.0
    return u_hat


def velocity_gradient(grid: Grid3, u_hat: np.ndarray) -> np.ndarray:
    """``G[i, j] = d u_i / d x_j`` on the grid, shape ``(3, 3, n, n, n)``."""
    kodd = grid.wavenumbers_odd
    out = np.empty((3, 3) + grid.shape)
    for j in range(3):
        out[:, j] = grid.ifft(1j * kodd[j] * u_hat)
    return out


# ---------------------------------------------------------------------------
# typed operators


def curl(v: VectorField3) -> VectorField3:
    g = v.grid
    return VectorField3(g, g.ifft(curl_hat(g, g.fft(v.values))))


def gradient(s: ScalarField) -> VectorField3:
    g = s.grid
    return VectorField3(g, g.ifft(grad_hat(g, g.fft(s.values))))


def divergence(v: VectorField3) -> ScalarField:
    g = v.grid
    return ScalarField(g, g.ifft(div_hat(g, g.fft(v.values))))


def laplacian(f):
    """Spectral Laplacian of a scalar or vector field (same kind returned)."""
    g = f.grid
    out = g.ifft(-g.k2 * g.fft(f.values))
    return type(f)(g, out)


def velocity_from_vorticity(w: VectorField3, tol: float = 1e-12) -> VectorField3:
    """Periodic Biot-Savart inversion ``u = curl (-Delta)^{-1} w``.

    The vorticity must have zero spatial mean: a mean component cannot be the
    curl of a periodic velocity.  The tolerance is relative to ``max|w|``
    (absolute for fields of order one or smaller).
    """
    g = w.grid
    mean = w.values.reshape(3, -1).mean(axis=1)
    scale = max(1.0, float(np.max(np.abs(w.values))))
    if np.any(np.abs(mean) > tol * scale):
        raise ValueError(f"vorticity has nonzero mean {mean.tolist()}")
    return VectorField3(g, g.ifft(biot_savart_hat(g, g.fft(w.values))))


def dealias(f, mask: bool = True):
    """Apply the two-thirds truncation to a field (identity if ``mask`` is off)."""
    if not mask:
        return f
    g = f.grid
    return type(f)(g, g.ifft(g.fft(f.values) * g.dealias_mask))


# ---------------------------------------------------------------------------
# quadrature


def box_sum(a: np.ndarray) -> float:
    """Sum of all entries in a fixed pairwise order.

    ``np.add.reduce`` on a C-contiguous copy is single-threaded and uses the
    same pairwise tree for a given shape, so repeated calls are bit-identical.
    """
    return float(np.add.reduce(np.ascontiguousarray(a, dtype=float).reshape(-1)))


def integrate(s: ScalarField) -> float:
    """Rectangle rule on the torus, ``h^3 * sum(values)``."""
    return s.grid.cell_volume * box_sum(s.values)


def integrate_weighted(s: ScalarField, w: ScalarField) -> float:
    g = _same_grid(s, w)
    return g.cell_volume * box_sum(s.values * w.values)
