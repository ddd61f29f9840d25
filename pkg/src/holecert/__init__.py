"""Certified hole sizes and escape rates for piecewise expanding interval maps.

The package discretizes the transfer operator of a piecewise expanding map
of [0, 1) with Ulam's method, extracts computable spectral-stability
constants, and turns them into a certificate: a hole size below which the
open system is guaranteed to carry an absolutely continuous conditionally
invariant measure with escape rate below a requested tolerance.  A second
set of tools estimates the actual escape rate of concrete holes and the
asymptotic effect of the hole position.
"""

__version__ = "0.1.0"

from .maps import (
    Branch,
    LinearBranch,
    MoebiusBranch,
    TabulatedBranch,
    PiecewiseMap,
    MapConfigError,
    MapDomainError,
    as_rational,
    bundled_map_path,
    full_branch_linear,
    load_map,
)
from .ulam import (
    Hole,
    HoleAlignmentError,
    UlamAssemblyError,
    UlamMatrix,
    UlamPartition,
    build_closed,
    build_open,
    load_matrix,
    save_matrix,
)
from .spectral import (
    NeumannDivergenceError,
    ResolventBound,
    SpectralData,
    SpectralStructureError,
    dominant_left_eigenpair,
    eigen_analysis,
    h_star,
    neumann_bound,
    operator_l1_norm,
)
from .kl import (
    KLConstants,
    KLDomainError,
    LYConstants,
    bootstrap_resolvent_bound,
    kl_constants,
    ly_constants,
)
from .certify import (
    CertificationConfig,
    CertificationReport,
    CertificateBounds,
    RefinePlan,
    SeparationResult,
    certificate_bounds,
    refine_with_bootstrap,
    run_certification,
    separation_check,
)
from .escape import (
    AsymptoticRatioExperiment,
    EscapeEstimate,
    PointClassification,
    asymptotic_ratio,
    classify_point,
    estimate_escape,
)
from .cache import PipelineCache, default_cache_dir

__all__ = [name for name in dir() if not name.startswith("_")]
