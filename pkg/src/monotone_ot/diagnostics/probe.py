"""Refinement study of cell and preimage diameters of semi-discrete maps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from ..transport.laguerre import LaguerreDiagram
from ..transport.problem import TransportProblem
from ..transport.solver import solve_weights

log = logging.getLogger(__name__)

DECAY_FACTOR = 1.5
DELTA_CELLS = 1.5  # probe radius in units of the quantization spacing


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > 3 * (points.shape[1] + 1):
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass
    return float(pdist(points).max())


def _cell_points(diagram: LaguerreDiagram, i: int) -> np.ndarray:
    c = diagram.cells[i]
    return np.zeros((0, diagram.dim)) if c is None else np.atleast_2d(c.vertices)


def _touches_boundary(cell) -> bool:
    if cell.kind == "interval":
        return False
    if cell.kind == "polygon":
        return bool(np.any(np.asarray(cell.data[1]) < 0))
    return any(lab < 0 for _, lab in cell.data)


def interior_cell_diameter(diagram: LaguerreDiagram, core_radius=None) -> float:
    """Largest diameter over cells that stay off the region boundary (and inside the core ball)."""
    best = 0.0
    for i, c in enumerate(diagram.cells):
        if c is None or _touches_boundary(c):
            continue
        v = _cell_points(diagram, i)
        if core_radius is not None and np.linalg.norm(v, axis=1).max() > core_radius:
            continue
        best = max(best, _diameter(v))
    return best


def preimage_diameter(diagram: LaguerreDiagram, center, delta: float) -> float:
    """Diameter of the union of cells whose targets lie within delta of center."""
    y = diagram.target.points
    near = np.flatnonzero(np.linalg.norm(y - np.asarray(center, dtype=float), axis=1) <= delta)
    if len(near) == 0:
        # the nearest target stands in when the ball misses the grid
        near = [int(np.argmin(np.linalg.norm(y - center, axis=1)))]
    pts = [_cell_points(diagram, int(i)) for i in near]
    pts = [p for p in pts if len(p)]
    return _diameter(np.vstack(pts)) if pts else 0.0


def warm_start(diagram: LaguerreDiagram, new_points: np.ndarray) -> np.ndarray:
    """Weights u*(y) of the previous potential restricted to the integration region.

    u is affine on each cell, so the sup of x.y - u(x) over the region is
    attained at a cell vertex.
    """
    V = np.vstack([_cell_points(diagram, i) for i in range(diagram.N)])
    V = np.unique(V, axis=0)
    uV = diagram.potential(V)
    w = np.empty(len(new_points))
    for s in range(0, len(new_points), 256):
        w[s : s + 256] = (new_points[s : s + 256] @ V.T - uV).max(axis=1)
    return w - w[0]


def _spacing(target) -> float:
    lo, hi = (np.asarray(b, dtype=float) for b in target.meta.get("box", (None, None)))
    shape = np.asarray(target.meta.get("grid_shape", ()), dtype=float)
    if shape.size:
        return float(((hi - lo) / shape).max())
    # volume per point when the grid shape is not recorded
    return float((np.prod(hi - lo) / len(target)) ** (1.0 / target.dim))


@dataclass
class ProbeLevel:
    n_points: int
    n_targets: int
    iterations: int
    residual: float
    spacing: float
    delta: float
    cell_diameter: float
    preimage_diameters: list

    @property
    def preimage_diameter(self) -> float:
        return max(self.preimage_diameters) if self.preimage_diameters else 0.0

    def to_json(self):
        return {
            "n_points": self.n_points,
            "n_targets": self.n_targets,
            "iterations": self.iterations,
            "residual": self.residual,
            "spacing": self.spacing,
            "delta": self.delta,
            "cell_diameter": self.cell_diameter,
            "preimage_diameters": list(self.preimage_diameters),
            "preimage_diameter": self.preimage_diameter,
        }


@dataclass
class ProbeReport:
    levels: list
    centers: list
    flag: str
    cell_decay: float
    preimage_decay: float
    threshold: float = DECAY_FACTOR
    problem: dict = field(default_factory=dict)

    def rows(self):
        return [lv.to_json() for lv in self.levels]

    def to_json(self):
        return {
            "problem": self.problem,
            "centers": [list(map(float, c)) for c in self.centers],
            "levels": self.rows(),
            "cell_decay": self.cell_decay,
            "preimage_decay": self.preimage_decay,
            "threshold": self.threshold,
            "flag": self.flag,
        }


def _decay(a: float, b: float) -> float:
    if b <= 0:
        return float("inf") if a > 0 else 1.0
    return a / b


def strict_convexity_probe(problem: TransportProblem, levels=(16, 64, 256, 1024), centers=None, seed=None,
                           core_radius=None, threshold: float = DECAY_FACTOR) -> ProbeReport:
    """Solve at each refinement level and flag diameters that stop shrinking.

    DEGENERATE when either the largest interior cell or the largest
    preimage of a small target ball fails to shrink by `threshold` between
    the last two levels; a single level is always DEGENERATE because no
    decay can be observed.
    """
    levels = sorted(int(n) for n in levels)
    if seed is not None:
        problem = problem.with_n(problem.n_points)
        problem.seed = int(seed)
    source = problem.build_source()
    if centers is None:
        centers = [np.zeros(problem.dim)]
    centers = [np.asarray(c, dtype=float) for c in centers]
    rows = []
    prev = None
    for N in levels:
        target = problem.build_target(N)
        w0 = None if prev is None else warm_start(prev, target.points)
        w, diagram, it = solve_weights(source, target, tol=problem.tol, max_iter=problem.max_iter, initial_weights=w0)
        h = _spacing(target)
        delta = DELTA_CELLS * h
        cell_d = interior_cell_diameter(diagram, core_radius)
        pre = [preimage_diameter(diagram, c, delta) for c in centers]
        rows.append(ProbeLevel(N, len(target), it, diagram.residual, h, delta, cell_d, pre))
        log.info("probe N=%d: %d iterations, cell diameter %.4g, preimage diameter %.4g", N, it, cell_d, max(pre))
        prev = diagram
    if len(rows) < 2:
        cell_decay = preimage_decay = 1.0
    else:
        # factors are quoted per 4x refinement in the number of points
        p = np.log(4.0) / np.log(rows[-1].n_points / rows[-2].n_points)
        cell_decay = _decay(rows[-2].cell_diameter, rows[-1].cell_diameter) ** p
        preimage_decay = _decay(rows[-2].preimage_diameter, rows[-1].preimage_diameter) ** p
    regular = len(rows) >= 2 and cell_decay >= threshold and preimage_decay >= threshold
    return ProbeReport(rows, centers, "REGULAR" if regular else "DEGENERATE", cell_decay, preimage_decay, threshold,
                       problem.to_json())
