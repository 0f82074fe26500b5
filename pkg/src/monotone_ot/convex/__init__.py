"""Exact convex-analysis kernel for piecewise-affine potentials."""
from .domains import DomainDescriptor
from .potentials import (
    POS_INF,
    TIE_TOL,
    LowerHullPotential,
    PiecewiseAffinePotential,
    SubdifferentialSet,
    build_max_form,
    evaluate_with_subdifferential,
    legendre_conjugate,
)
from .measures import (
    SectionReport,
    counter_rng,
    ma_measure,
    ma_measure_of_set,
    monotonicity_check,
    section_min_principle_check,
)

__all__ = [
    "DomainDescriptor",
    "POS_INF",
    "TIE_TOL",
    "LowerHullPotential",
    "PiecewiseAffinePotential",
    "SubdifferentialSet",
    "SectionReport",
    "build_max_form",
    "counter_rng",
    "evaluate_with_subdifferential",
    "legendre_conjugate",
    "ma_measure",
    "ma_measure_of_set",
    "monotonicity_check",
    "section_min_principle_check",
]
