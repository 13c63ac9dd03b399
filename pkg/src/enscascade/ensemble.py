"""Ensembles of refined test functions and their averages.

An ensemble at scale ``R`` is a family of test functions tied to a reference
cutoff ``psi0`` at scale ``R0``.  Its *nominal* count ``n`` enters the
average ``<F>_R = (1/n) sum_i R^-3 int f psi_i``; members that vanish on the
grid are counted in ``n`` but not stored.  Refinement scales the nominal count
by ``(R/R')^3`` so that ``n R^3`` is invariant and averages are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid3, GridMismatchError, ScalarField, box_sum
from .localization import RefinedTestFunction, refine

MIN_K1 = 64
MIN_K2 = 8
_TOL = 1e-12


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleValidation:
    property1_upper: bool
    property1_lower: bool
    property2: bool
    property3: bool
    nominal_count: float
    stored_count: int
    count_bounds: tuple[float, float]
    max_overlap: int
    min_surplus: float
    max_surplus: float

    @property
    def passed(self) -> bool:
        return self.property1_upper and self.property1_lower and self.property2 and self.property3

    def as_dict(self) -> dict:
        return {
            "property1_upper": self.property1_upper,
            "property1_lower": self.property1_lower,
            "property2": self.property2,
            "property3": self.property3,
            "passed": self.passed,
            "nominal_count": self.nominal_count,
            "stored_count": self.stored_count,
            "count_bounds": list(self.count_bounds),
            "max_overlap": self.max_overlap,
            "min_surplus": self.min_surplus,
            "max_surplus": self.max_surplus,
        }


@dataclass(frozen=True, eq=False)
class Ensemble:
    members: tuple[RefinedTestFunction, ...]
    nominal_count: float
    reference: RefinedTestFunction
    R: float
    K1: float
    K2: float
    c0: float
    rho: float
    grid: Grid3

    @property
    def R0(self) -> float:
        return self.reference.R

    def member_samples(self):
        return [m.sample(self.grid) for m in self.members]

    def member_integrals(self, values: np.ndarray, power: float = 1.0) -> np.ndarray:
        """``int values * psi_i^power dx`` for every stored member, in order."""
        flat = np.asarray(values, dtype=float).reshape(-1)
        dv = self.grid.cell_volume
        out = np.empty(len(self.members))
        for i, (idx, v) in enumerate(self.member_samples()):
            w = v if power == 1.0 else v**power
            out[i] = dv * float(np.dot(flat[idx], w))
        return out

    def validate(self) -> EnsembleValidation:
        return validate(self)


def _check_field(f: ScalarField, grid: Grid3):
    if f.grid != grid:
        raise GridMismatchError(f"field grid {f.grid} != ensemble grid {grid}")


def single_member(psi0: RefinedTestFunction, grid: Grid3, K1=MIN_K1, K2=MIN_K2) -> Ensemble:
    """The trivial ensemble ``{psi0}`` at scale ``R0`` with ``n = 1``."""
    return Ensemble((psi0,), 1, psi0, psi0.R, float(K1), float(K2), psi0.c0, psi0.rho, grid)


def _check_params(K1, K2):
    if K1 < MIN_K1:
        raise EnsembleError(f"K1={K1} is below the lattice minimum K1 >= {MIN_K1}")
    if K2 < MIN_K2:
        raise EnsembleError(f"K2={K2} is below the lattice minimum K2 >= {MIN_K2}")


def build_cover_ensemble(psi0: RefinedTestFunction, R: float, K1: float, K2: float, grid: Grid3) -> Ensemble:
    """Lattice-partition ensemble ``{psi0 h_p}`` at scale ``R``.

    The members sum to ``psi0`` exactly and the nominal count is
    ``(R0/R)^3``, so ``<F>_R`` coincides with the average of the one-member
    ensemble ``{psi0}``.
    """
    _check_params(K1, K2)
    R0 = psi0.R
    if not (0 < R <= R0):
        raise EnsembleError(f"scale R={R} must satisfy 0 < R <= R0={R0}")
    if R == R0:
        e = single_member(psi0, grid, K1, K2)
    else:
        members = tuple(refine(psi0, R, grid))
        c0 = members[0].c0 if members else psi0.c0
        e = Ensemble(members, (R0 / R) ** 3, psi0, float(R), float(K1), float(K2), c0, psi0.rho, grid)
    report = validate(e)
    if not report.passed:
        raise EnsembleError(f"lattice ensemble failed validation: {report}")
    return e


def refine_ensemble(e: Ensemble, Rp: float) -> Ensemble:
    """``{psi_i h_p}`` at scale ``Rp`` with parameters ``(64 K1, 8 K2, C0')``."""
    if not (0 < Rp < e.R):
        raise EnsembleError(f"refinement scale R'={Rp} must satisfy 0 < R' < R={e.R}")
    members = []
    for m in e.members:
        members.extend(refine(m, Rp, e.grid))
    c0 = members[0].c0 if members else e.c0
    out = Ensemble(
        tuple(members),
        e.nominal_count * (e.R / Rp) ** 3,
        e.reference,
        float(Rp),
        64.0 * e.K1,
        8.0 * e.K2,
        c0,
        e.rho,
        e.grid,
    )
    report = validate(out)
    if not report.passed:
        raise EnsembleError(f"refined ensemble failed validation: {report}")
    return out


def validate(e: Ensemble) -> EnsembleValidation:
    """Full-grid scan of the three ensemble properties."""
    g = e.grid
    size = g.n**3
    ref_idx, ref_v = e.reference.sample(g)
    ref = np.zeros(size)
    ref[ref_idx] = ref_v
    total = np.zeros(size)
    overlap = np.zeros(size, dtype=np.int64)
    upper = True
    for idx, v in e.member_samples():
        if np.any(v > ref[idx] + _TOL):
            upper = False
        np.add.at(total, idx, v)
        overlap[idx[v > 0]] += 1
    surplus = total - ref
    lower = bool(np.all(surplus >= -_TOL))
    ratio3 = (e.R0 / e.R) ** 3
    lo, hi = ratio3, e.K1 * ratio3
    n = e.nominal_count
    prop2 = bool(lo * (1 - _TOL) <= n <= hi * (1 + _TOL))
    region = (g.radius < 2.0 * e.R0).reshape(-1)
    max_overlap = int(overlap[region].max()) if region.any() else 0
    prop3 = max_overlap <= e.K2
    return EnsembleValidation(
        bool(upper),
        lower,
        prop2,
        bool(prop3),
        float(n),
        len(e.members),
        (float(lo), float(hi)),
        max_overlap,
        float(surplus.min()),
        float(surplus.max()),
    )


def ensemble_average(f: ScalarField, e: Ensemble) -> float:
    """``(1/n) sum_i R^-3 int f psi_i`` with members summed in stored order."""
    _check_field(f, e.grid)
    terms = e.member_integrals(f.values)
    return box_sum(terms) / (e.nominal_count * e.R**3)


def large_scale_mean(f: ScalarField, psi0: RefinedTestFunction) -> float:
    """``F0 = R0^-3 int f psi0``."""
    idx, v = psi0.sample(f.grid)
    flat = f.values.reshape(-1)
    return f.grid.cell_volume * float(np.dot(flat[idx], v)) / psi0.R**3


def modified_average(f: ScalarField, e: Ensemble, delta: float) -> float:
    """``(1/n) sum_i R^-3 int f psi_i^delta``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    _check_field(f, e.grid)
    terms = e.member_integrals(f.values, power=delta)
    return box_sum(terms) / (e.nominal_count * e.R**3)


def modified_reference_mean(f: ScalarField, psi0: RefinedTestFunction, delta: float) -> float:
    """``R0^-3 int f psi0^delta``, the comparison value for :func:`modified_average`."""
    idx, v = psi0.sample(f.grid)
    flat = f.values.reshape(-1)
    return f.grid.cell_volume * float(np.dot(flat[idx], v**delta)) / psi0.R**3
