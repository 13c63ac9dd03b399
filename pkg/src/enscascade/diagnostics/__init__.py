from .flux import (
    FluxBudget,
    LocalizedFlux,
    TimeIntegrals,
    flux_budget,
    flux_density,
    localized_flux,
    sup_localized_enstrophy,
    time_integrals,
)
from .scales import (
    CoherenceResult,
    ModulationResult,
    MorreyResult,
    coherence_estimate,
    default_radii,
    kraichnan_scale,
    local_l2_norms,
    mean_enstrophy_E0,
    modified_palinstrophy_P0,
    modulation_check,
    morrey_norm,
    outer_radius,
    vorticity_l1_sup,
)
from .stretching import (
    KERNEL_CONSTANT,
    SupportError,
    check_interior_support,
    upsample,
    vortex_stretch_kernel,
    vortex_stretch_spectral,
)
from .verdict import CascadeReport, ScaleRow, VerdictParams, cascade_verdict, sandwich_constants
