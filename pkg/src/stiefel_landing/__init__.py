"""Retraction-free second-order optimization over orthonormal frames.

The library minimizes smooth objectives subject to X^T X = I without ever
projecting back onto the constraint set: every update adds a tangent
Newton-type component to a multiplication-only orthogonalization component,
which keeps iterates inside a safe region while the combined step converges
quadratically near nondegenerate minimizers.
"""

__version__ = "0.1.0"

from .driver import (
    IterTrace,
    SolveResult,
    SolverConfig,
    Status,
    Variant,
    first_order_landing_solve,
    safe_step_size,
    sol_step,
    solve,
    stopping_metric,
)
from .fields import LandingParams, Problem
from .geometry import (
    AmbientPoint,
    NormalVector,
    SafeRegion,
    TangentVector,
    in_safe_region,
    infeasibility,
    metric_inner,
    project_normal,
    project_tangent,
)
from .krylov import SolveReport, TangentOperator, forcing_tolerance
from .newton_schulz import NsOrder, ns_orthogonalize, ns_polynomial, ns_update
from .problems import (
    IcaData,
    PcaData,
    ProcrustesData,
    haar_stiefel,
    ica_problem,
    pca_problem,
    procrustes_problem,
    synth_ica,
    synth_pca,
    synth_procrustes,
    whiten,
)

__all__ = [
    "AmbientPoint",
    "IcaData",
    "IterTrace",
    "LandingParams",
    "NormalVector",
    "NsOrder",
    "PcaData",
    "Problem",
    "ProcrustesData",
    "SafeRegion",
    "SolveReport",
    "SolveResult",
    "SolverConfig",
    "Status",
    "TangentOperator",
    "TangentVector",
    "Variant",
    "first_order_landing_solve",
    "forcing_tolerance",
    "haar_stiefel",
    "ica_problem",
    "in_safe_region",
    "infeasibility",
    "metric_inner",
    "ns_orthogonalize",
    "ns_polynomial",
    "ns_update",
    "pca_problem",
    "procrustes_problem",
    "project_normal",
    "project_tangent",
    "safe_step_size",
    "sol_step",
    "solve",
    "stopping_metric",
    "synth_ica",
    "synth_pca",
    "synth_procrustes",
    "whiten",
]
