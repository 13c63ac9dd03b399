"""Cascade verdicts: assumptions, the per-scale sweep and the two sandwiches."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..ensemble import build_cover_ensemble
from ..grid import box_sum
from ..localization import RefinedTestFunction, SpaceTimeCutoff, make_temporal_cutoff
from ..solver import Trajectory
from .flux import flux_budget, time_integrals
from .scales import (
    coherence_estimate,
    kraichnan_scale,
    local_l2_norms,
    mean_enstrophy_E0,
    modified_palinstrophy_P0,
    modulation_check,
    morrey_norm,
    vorticity_l1_sup,
)

BETA_DEPENDS_ON = ("C0", "C1", "M", "K1", "K2", "B_T")
ASSUMPTION_KEYS = ("coherence", "kraichnan_scale", "morrey_smallness", "modulation")


def sandwich_constants(K1: float, K2: float) -> dict:
    """Lattice factors and sandwich constants used by the verdicts.

    The ``endpoint`` sandwich applies at ``R = sigma0 / beta``; the ``range``
    sandwich applies at every ``R`` in ``[sigma0 / beta, R0]``.  Both bound
    ``<F>_R`` in units of ``P0``.
    """
    return {
        "lattice_count_factor": 64,
        "lattice_overlap_factor": 8,
        "endpoint_lower": 1.0 / (4.0 * K1),
        "endpoint_upper": K2 + 1.0 / (4.0 * K1),
        "range_lower": 1.0 / (256.0 * K1),
        "range_upper": 8.0 * K2 + 1.0 / (256.0 * K1),
    }


@dataclass(frozen=True)
class VerdictParams:
    K1: float = 64.0
    K2: float = 8.0
    C0: float = 60.0
    rho: float = 0.75
    beta: float = 0.5
    q: float = 4.0
    M: float = 1.0
    C3: float | None = None
    C1: float | None = None
    coherence_samples: int | None = 512
    coherence_snapshots: int = 8
    seed: int = 0
    morrey_center_stride: int = 1
    min_scale_cells: float = 2.0

    def __post_init__(self):
        if not (0 < self.beta < 1):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.q > 2:
            raise ValueError(f"q must exceed 2, got {self.q}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")


@dataclass
class ScaleRow:
    R: float
    kind: str
    nominal_count: float
    stored_members: int
    average_F: float
    average_F_gradient: float
    sum_F: float
    sum_A: float
    sum_A_sup: float
    sum_B: float
    sum_C: float
    max_identity_residual: float
    max_form_discrepancy: float
    endpoint_lower: float | None
    endpoint_upper: float | None
    endpoint_lower_pass: bool | None
    endpoint_upper_pass: bool | None
    range_lower: float
    range_upper: float
    range_lower_pass: bool
    range_upper_pass: bool
    assumptions_hold: bool
    local_norm_inner_max: float
    local_norm_outer_max: float


@dataclass
class CascadeReport:
    degenerate: bool
    E0: float
    P0: float
    sigma0: float | None
    beta: float
    R0: float
    T: float
    B_T: float
    morrey: float | None
    morrey_radii: list
    morrey_centers: int
    morrey_smallness_quantity: float | None
    coherence_C1: float | None
    coherence_points: int
    coherence_pairs: int
    coherence_violating_fraction: float | None
    modulation_ratio: float
    assumptions: dict
    inertial_range: list | None
    rows: list = field(default_factory=list)
    skipped_scales: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def csv_rows(self) -> list[dict]:
        return [_clean(asdict(r)) for r in self.rows]


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _sweep_scales(R0: float, Rmin: float) -> list[tuple[float, str]]:
    """Dyadic scales ``R0, R0/2, ...`` that are ``>= Rmin``, then ``Rmin`` itself."""
    out, R = [], R0
    while R >= Rmin * (1 + 1e-12):
        out.append((R, "range"))
        R *= 0.5
    if out and math.isclose(out[-1][0], Rmin, rel_tol=1e-12):
        out[-1] = (out[-1][0], "endpoint")
    else:
        out.append((Rmin, "endpoint"))
    return out


def cascade_verdict(traj: Trajectory, psi0: RefinedTestFunction, params: VerdictParams | None = None) -> CascadeReport:
    """Evaluate the assumptions and the cascade sandwiches on a trajectory.

    The sweep runs over dyadic scales ``R0 / 2^j >= sigma0 / beta`` plus the
    scale ``sigma0 / beta`` itself, where the endpoint sandwich is checked.  Each
    scale uses the lattice ensemble ``build_cover_ensemble(psi0, R)``.
    Rows below ``min_scale_cells`` grid spacings are skipped as unresolved.
    """
    p = params or VerdictParams()
    g = traj.grid
    R0 = psi0.R
    consts = sandwich_constants(p.K1, p.K2)
    pdict = {k: v for k, v in asdict(p).items()}
    T = traj.T
    peak = max(float(np.max(np.abs(s.values))) for s in traj.snapshots)
    base = dict(beta=p.beta, R0=R0, T=T, constants=consts, params=pdict)
    if peak == 0.0 or T == 0.0:
        note = "vorticity vanishes identically" if peak == 0.0 else "trajectory has zero duration"
        return CascadeReport(
            degenerate=True, E0=0.0, P0=0.0, sigma0=None, B_T=vorticity_l1_sup(traj), morrey=None,
            morrey_radii=[], morrey_centers=0, morrey_smallness_quantity=None, coherence_C1=None,
            coherence_points=0, coherence_pairs=0, coherence_violating_fraction=None,
            modulation_ratio=1.0, assumptions=dict.fromkeys(ASSUMPTION_KEYS),
            inertial_range=None, notes=[f"degenerate: {note}; no verdicts claimed"], **base,
        )

    eta = make_temporal_cutoff(T, p.C0, p.rho)
    phi0 = SpaceTimeCutoff(psi0, eta)
    ti = time_integrals(traj, eta)
    E0 = mean_enstrophy_E0(traj, phi0)
    P0 = modified_palinstrophy_P0(traj, phi0, ti)
    sigma0 = kraichnan_scale(E0, P0)
    BT = vorticity_l1_sup(traj)
    mor = morrey_norm(traj, p.q, R0, center_stride=p.morrey_center_stride)
    coh = coherence_estimate(traj, p.M, R0, p.coherence_samples, p.seed, p.coherence_snapshots, p.C1)
    mod = modulation_check(traj, psi0)
    notes = [
        "beta depends on " + ", ".join(BETA_DEPENDS_ON) + "; configured, not derived",
        "coherence C1 is a sampled lower bound on the supremum",
        "periodic box: sup_t int |w| dx is finite automatically",
    ]

    a1 = None if (p.C1 is None or coh.C1_measured is None) else bool(coh.C1_measured <= p.C1)
    if coh.C1_measured is None:
        notes.append("no points with |grad u| > M in B(0, 2R0)")
    a2 = None if sigma0 is None else bool(sigma0 < p.beta * R0)
    a3q = None if sigma0 is None else sigma0 ** (1.0 - 2.0 / p.q) * mor.value
    a3 = None
    if a3q is not None and p.C3 is not None:
        a3 = bool(a3q < (p.beta / 2.0) ** (1.0 - 2.0 / p.q) / p.C3)
    a4 = mod.passed
    assumptions = dict(zip(ASSUMPTION_KEYS, (a1, a2, a3, a4)))
    hold = all(v is True for v in assumptions.values())
    if not hold:
        notes.append("assumptions not all established; sandwich verdicts are informational")

    report = CascadeReport(
        degenerate=False, E0=E0, P0=P0, sigma0=sigma0, B_T=BT, morrey=mor.value,
        morrey_radii=list(mor.radii), morrey_centers=mor.n_centers, morrey_smallness_quantity=a3q,
        coherence_C1=coh.C1_measured, coherence_points=coh.n_points, coherence_pairs=coh.n_pairs,
        coherence_violating_fraction=coh.violating_fraction, modulation_ratio=mod.ratio,
        assumptions=assumptions, inertial_range=None, notes=notes, **base,
    )
    if sigma0 is None:
        notes.append("P0 = 0: Kraichnan scale undefined, sweep empty")
        return report
    Rmin = sigma0 / p.beta
    if Rmin > R0:
        notes.append("sigma0 / beta > R0: no inertial range, sweep empty")
        return report
    report.inertial_range = [Rmin, R0]

    wsq = np.zeros(g.shape)
    for wk, s in zip(traj.weights, traj.snapshots):
        wsq += wk * np.sum(s.values**2, axis=0)
    floor = p.min_scale_cells * g.h
    for R, kind in _sweep_scales(R0, Rmin):
        if R < floor:
            report.skipped_scales.append({"R": R, "kind": kind, "reason": f"below {p.min_scale_cells} grid spacings"})
            continue
        e = build_cover_ensemble(psi0, R, p.K1, p.K2, g)
        fb = flux_budget(traj, e, eta, ti)
        norm = e.nominal_count * T * R**3
        avg = box_sum(fb.F) / norm
        avg_g = box_sum(fb.F_gradient) / norm
        l2, u2 = consts["range_lower"] * P0, consts["range_upper"] * P0
        if kind == "endpoint":
            l1, u1 = consts["endpoint_lower"] * P0, consts["endpoint_upper"] * P0
            l1p, u1p = bool(l1 <= avg), bool(avg <= u1)
        else:
            l1 = u1 = l1p = u1p = None
        centers = [m.support_center for m in e.members]
        inner = local_l2_norms(g, wsq, centers, R)
        outer = local_l2_norms(g, wsq, centers, 2 * R + R ** (2.0 / 3.0))
        report.rows.append(
            ScaleRow(
                R=R, kind=kind, nominal_count=float(e.nominal_count), stored_members=len(e.members),
                average_F=avg, average_F_gradient=avg_g, sum_F=box_sum(fb.F), sum_A=box_sum(fb.A),
                sum_A_sup=box_sum(fb.A_sup), sum_B=box_sum(fb.B), sum_C=box_sum(fb.C),
                max_identity_residual=fb.max_relative_residual, max_form_discrepancy=fb.max_form_discrepancy,
                endpoint_lower=l1, endpoint_upper=u1, endpoint_lower_pass=l1p, endpoint_upper_pass=u1p,
                range_lower=l2, range_upper=u2, range_lower_pass=bool(l2 <= avg),
                range_upper_pass=bool(avg <= u2), assumptions_hold=hold,
                local_norm_inner_max=float(inner.max()) if inner.size else 0.0,
                local_norm_outer_max=float(outer.max()) if outer.size else 0.0,
            )
        )
    return report
