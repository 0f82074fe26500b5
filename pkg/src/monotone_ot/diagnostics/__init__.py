"""Geometric diagnostics: thin-set volume exponents and a strict-convexity probe."""
from .probe import (
    ProbeLevel,
    ProbeReport,
    interior_cell_diameter,
    preimage_diameter,
    strict_convexity_probe,
    warm_start,
)
from .scaling import (
    InsufficientSamplesError,
    ScalingReport,
    WedgeSpec,
    classify_lambda,
    cone_volume_exact,
    cone_volume_scaling,
    lambda_threshold,
    theta_grid,
    wedge_volume_exact,
    wedge_volume_scaling,
)

__all__ = [
    "ProbeLevel", "ProbeReport", "interior_cell_diameter", "preimage_diameter", "strict_convexity_probe",
    "warm_start", "InsufficientSamplesError", "ScalingReport", "WedgeSpec", "classify_lambda",
    "cone_volume_exact", "cone_volume_scaling", "lambda_threshold", "theta_grid", "wedge_volume_exact",
    "wedge_volume_scaling",
]
