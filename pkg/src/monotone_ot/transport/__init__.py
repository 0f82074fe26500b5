"""Semi-discrete optimal transport."""
from .laguerre import Cell, LaguerreDiagram, clip_polygon, clip_polyhedron, laguerre_diagram
from .measures import (
    CounterexampleDensity,
    DiscreteMeasure,
    GaussianDensity,
    SourceDensity,
    UniformDensity,
    density_from_json,
    grid_shape_for,
    quantize_target,
)
from .problem import TransportProblem
from .solver import ConvergenceError, solve_weights, transport_map
from .verify import AlexandrovReport, ProbeResult, binomial_bound, pushforward_counts, verify_alexandrov, verify_pushforward

__all__ = [
    "Cell", "LaguerreDiagram", "clip_polygon", "clip_polyhedron", "laguerre_diagram",
    "CounterexampleDensity", "DiscreteMeasure", "GaussianDensity", "SourceDensity", "UniformDensity",
    "density_from_json", "grid_shape_for", "quantize_target",
    "TransportProblem", "ConvergenceError", "solve_weights", "transport_map",
    "AlexandrovReport", "ProbeResult", "binomial_bound", "pushforward_counts", "verify_alexandrov", "verify_pushforward",
]
