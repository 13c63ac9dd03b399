"""Vortex stretching: pointwise spectral density and the singular-kernel form.

The kernel representation writes the stretching at ``x`` as a principal-value
integral over ``y``,

    (w . grad) u . w (x) = c PV int (w(x) x w(y)) . G(x, y) dy,
    G_k = (x_k - y_k)(x_i - y_i) w_i(x) / |x - y|^5 + w_k(x) / |x - y|^3,

with ``u = curl (-Delta)^{-1} w`` and the free-space Green's function
``1 / (4 pi |x|)``.  In that convention ``c = -3 / (4 pi)``.  The second part
of ``G`` is parallel to ``w(x)`` and drops out against ``w(x) x w(y)``.
"""

from __future__ import annotations

import math

import numpy as np

from ..grid import Grid3, ScalarField, VectorField3, biot_savart_hat, velocity_gradient

KERNEL_CONSTANT = -3.0 / (4.0 * math.pi)

# fraction of the box, measured from the centre, that a kernel source may occupy
INTERIOR_FRACTION = 0.375


class SupportError(ValueError):
    """Vorticity reaches the outer box shell, so the free-space kernel is invalid."""


def stretching_density(grid: Grid3, w: np.ndarray, w_hat=None) -> np.ndarray:
    """Array form of ``(w . grad) u . w``."""
    if w_hat is None:
        w_hat = grid.fft(w)
    G = velocity_gradient(grid, biot_savart_hat(grid, w_hat))
    return np.einsum("j...,ij...,i...->...", w, G, w)


def vortex_stretch_spectral(omega: VectorField3) -> ScalarField:
    """Pointwise stretching density with ``u`` recovered by Biot-Savart."""
    g = omega.grid
    return ScalarField(g, stretching_density(g, omega.values))


def upsample(omega: VectorField3, factor: int) -> VectorField3:
    """Trigonometric interpolation onto a grid ``factor`` times finer.

    The Nyquist modes are dropped so the interpolant stays real.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("upsample factor must be a positive integer")
    if factor == 1:
        return omega
    g = omega.grid
    n, N = g.n, g.n * factor
    fine = Grid3(N, g.L)
    w_hat = np.fft.fftn(omega.values, axes=(1, 2, 3))
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    src = np.nonzero(np.abs(k) < n // 2)[0]
    dst = np.mod(k[src], N)
    big = np.zeros((3, N, N, N), dtype=complex)
    big[np.ix_(range(3), dst, dst, dst)] = w_hat[np.ix_(range(3), src, src, src)]
    values = np.real(np.fft.ifftn(big, axes=(1, 2, 3))) * factor**3
    return VectorField3(fine, values)


def check_interior_support(omega: VectorField3, tol: float = 1e-3):
    """Raise :class:`SupportError` if ``|w|`` exceeds ``tol * max|w|`` in the outer shell."""
    g = omega.grid
    mag = np.sqrt(np.sum(omega.values**2, axis=0))
    peak = float(mag.max())
    if peak == 0.0:
        return
    shell = np.max(np.abs(g.coords), axis=0) > INTERIOR_FRACTION * g.L
    outer = float(mag[shell].max()) if shell.any() else 0.0
    if outer > tol * peak:
        raise SupportError(
            f"vorticity reaches the box boundary region: max|w| there is {outer / peak:.2e} of the peak"
        )


def vortex_stretch_kernel(
    omega: VectorField3, x, eps: float, upsample_factor: int = 1, support_tol: float = 1e-3
) -> float:
    """Principal-value quadrature of the kernel form of the stretching at ``x``.

    ``x`` is snapped to the nearest node of the (possibly upsampled) grid.
    Cells whose cube comes closer than ``eps`` to ``x`` are excised, which is a
    symmetric excision because the grid is symmetric about every node.

    Parameters
    ----------
    omega
        Compactly supported vorticity, vanishing in the outer box shell.
    x
        Probe point.
    eps
        Excision radius; should be a multiple of the quadrature grid spacing.
    upsample_factor
        Spectral refinement of the quadrature grid.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    check_interior_support(omega, support_tol)
    w = upsample(omega, upsample_factor)
    g = w.grid
    i = np.ravel_multi_index(tuple(g.index_of(x)), g.shape)
    W = w.values.reshape(3, -1)
    wx = W[:, i].copy()
    if not np.any(wx):
        return 0.0
    X = g.coords.reshape(3, -1)
    d = X[:, i][:, None] - X
    gap = np.maximum(np.abs(d) - 0.5 * g.h, 0.0)
    keep = np.sum(gap**2, axis=0) >= eps * eps
    d = d[:, keep]
    Wk = W[:, keep]
    r2 = np.sum(d**2, axis=0)
    cross = np.cross(wx[:, None], Wk, axis=0)
    integrand = np.sum(cross * d, axis=0) * (wx @ d) / (r2 * r2 * np.sqrt(r2))
    return KERNEL_CONSTANT * g.cell_volume * float(np.add.reduce(integrand))
