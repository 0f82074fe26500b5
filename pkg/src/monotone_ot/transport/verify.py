"""Checks of a solved diagram: pushforward by sampling, Alexandrov identities by geometry."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from ..convex.domains import DomainDescriptor
from ..convex.measures import ma_measure
from .laguerre import (
    POLYGON_RESOLUTION,
    LaguerreDiagram,
    _Mesh,
    _box_faces,
    _interval_mass,
    clip_polygon,
    polygon_masses,
    polyhedron_masses,
)
from .measures import DiscreteMeasure, SourceDensity


def pushforward_counts(diagram: LaguerreDiagram, source: SourceDensity, n_samples: int, seed: int,
                       chunk: int = 50_000) -> np.ndarray:
    """Number of F-distributed samples sent to each target point."""
    x = source.sample(n_samples, seed)
    counts = np.zeros(diagram.N, dtype=np.int64)
    u = diagram.potential
    for s in range(0, len(x), chunk):
        counts += np.bincount(u.argmax(x[s : s + chunk]), minlength=diagram.N)
    return counts


def verify_pushforward(diagram: LaguerreDiagram, source: SourceDensity, target: DiscreteMeasure,
                       n_samples: int = 1_000_000, seed: int = 0) -> float:
    """max_i |empirical mass of cell_i - m_i| over n_samples draws from F."""
    if diagram.N == 1:
        return 0.0
    counts = pushforward_counts(diagram, source, n_samples, seed)
    return float(np.abs(counts / n_samples - target.masses).max())


def binomial_bound(masses, n_samples: int, k: float = 3.0) -> np.ndarray:
    """k-sigma half-width of the empirical frequency of each cell."""
    m = np.asarray(masses, dtype=float)
    return k * np.sqrt(m * (1 - m) / n_samples)


def halfspaces(domain: DomainDescriptor):
    """(A, b) with domain = {A x <= b}; polyhedral kinds only."""
    n = domain.dim
    p = domain.params
    if domain.kind == "full_space":
        return np.zeros((0, n)), np.zeros(0)
    if domain.kind == "halfspace":
        return np.atleast_2d(p["normal"]), np.array([p["offset"]])
    if domain.kind == "box":
        return np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([p["hi"], -np.asarray(p["lo"])])
    if domain.kind == "polygon" and domain.is_convex:
        v = domain.as_polygon()
        e = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([e[:, 1], -e[:, 0]])
        return normals, np.einsum("ij,ij->i", normals, v)
    raise ValueError(f"probe regions must be boxes or convex polygons, got {domain.kind}")


def _max_slack(A, b, bounds=None) -> float:
    """max t with A x + t|a_k| <= b; positive iff the polyhedron has interior, negative iff empty."""
    n = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 0
    A, b, norms = A[keep], b[keep], norms[keep]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        return -np.inf
    return float(-res.fun)


def _region_halfspaces(source: SourceDensity):
    region = source.region
    if region.dim == 2 and region.kind not in ("box", "polygon"):
        return halfspaces(DomainDescriptor.polygon(region.as_polygon(POLYGON_RESOLUTION)))
    return halfspaces(region)


def _clipped_mass(source: SourceDensity, A, b) -> float:
    """mu(X intersect {A x <= b}) with the same geometry the diagram uses."""
    n = source.dim
    region = source.region
    if n == 1:
        lo, hi = region.bounding_box()
        a_, b_ = float(lo[0]), float(hi[0])
        for row, rhs in zip(A[:, 0], b):
            if row > 0:
                b_ = min(b_, rhs / row)
            elif row < 0:
                a_ = max(a_, rhs / row)
        if b_ <= a_:
            return 0.0
        return float(_interval_mass(source, a_, b_))
    if n == 2:
        v = region.as_polygon(POLYGON_RESOLUTION)
        lab = np.zeros(len(v), dtype=int)
        for row, rhs in zip(A, b):
            v, lab = clip_polygon(v, lab, row, rhs, 0)
            if v is None:
                return 0.0
        return float(polygon_masses(source, [v])[0])
    lo, hi = region.bounding_box()
    mesh = _Mesh.from_faces(_box_faces(lo, hi))
    for row, rhs in zip(A, b):
        mesh = mesh.clip(row, rhs, 0)
        if mesh is None:
            return 0.0
    return float(polyhedron_masses(source, [mesh.to_faces()])[0])


def _cell_halfspaces(diagram: LaguerreDiagram, i: int):
    y, w = diagram.target.points, diagram.weights
    A = np.delete(y - y[i], i, axis=0)
    b = np.delete(w - w[i], i)
    return A, b


@dataclass
class ProbeResult:
    region: DomainDescriptor
    disjoint_from_closure: bool
    ma_mass: float  # Lebesgue measure of du(A)
    target_mass: float  # nu(du(A)): masses of cells meeting A in a set of positive measure
    source_mass: float  # mu(A)
    passed: bool

    def to_json(self):
        return {
            "region": self.region.to_json(),
            "disjoint_from_closure": self.disjoint_from_closure,
            "ma_mass": self.ma_mass,
            "target_mass": self.target_mass,
            "source_mass": self.source_mass,
            "passed": self.passed,
        }


@dataclass
class AlexandrovReport:
    cell_mass_error: float
    recomputed_mass_error: float
    cells_passed: bool
    slopes_in_target_domain: bool
    exhausts_support: bool
    probes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.cells_passed and self.slopes_in_target_domain and self.exhausts_support
                and all(p.passed for p in self.probes))

    def to_json(self):
        return {
            "cell_mass_error": self.cell_mass_error,
            "recomputed_mass_error": self.recomputed_mass_error,
            "cells_passed": self.cells_passed,
            "slopes_in_target_domain": self.slopes_in_target_domain,
            "exhausts_support": self.exhausts_support,
            "probes": [p.to_json() for p in self.probes],
            "passed": self.passed,
        }


def verify_alexandrov(diagram: LaguerreDiagram, source: SourceDensity, probe_regions=(),
                      target_domain: Optional[DomainDescriptor] = None, tol: float = 1e-9,
                      seed: int = 0) -> AlexandrovReport:
    """Check the Alexandrov identities of the induced potential u.

    (a) the mass attributed to y_i, mu(du*(y_i)) = mu(cell_i), equals m_i;
        recomputed from scratch with all-pairs clipping.
    (b) probes disjoint from the closure of X carry no Monge-Ampere mass;
        other probes satisfy mu(A) <= nu(du(A)).
    (c) every slope lies in the closure of Y and every target point is a
        gradient value on X.
    """
    m = diagram.target.masses
    err = float(np.abs(diagram.masses - m).max())
    # independent of the neighbor graph: clip X by all N - 1 halfspaces
    raw = np.array([_clipped_mass(source, *_cell_halfspaces(diagram, i)) for i in range(diagram.N)])
    recomputed_err = float(np.abs(raw / raw.sum() - m).max())
    cells_ok = err <= tol and recomputed_err <= tol

    slopes = diagram.potential.slopes
    if target_domain is None:
        in_y = True
    else:
        in_y = bool(np.all(target_domain.contains(slopes, tol=1e-12)))
    exhausts = bool(np.array_equal(slopes, diagram.target.points) and np.all(diagram.masses > 0))

    Ax, bx = _region_halfspaces(source)
    results = []
    for k, region in enumerate(probe_regions):
        if not region.is_bounded:
            raise ValueError("probe regions must be bounded")
        Ap, bp = halfspaces(region)
        slack = _max_slack(np.vstack([Ax, Ap]), np.concatenate([bx, bp]))
        scale = 1e-12 * max(1.0, float(np.abs(bp).max(initial=0)))
        disjoint = slack < -scale
        ma = ma_measure(diagram.potential, region, seed=seed + k)
        tmass = 0.0
        for i in range(diagram.N):
            Ac, bc = _cell_halfspaces(diagram, i)
            if _max_slack(np.vstack([Ap, Ac]), np.concatenate([bp, bc])) > scale:
                tmass += m[i]
        smass = 0.0 if disjoint else _clipped_mass(source, Ap, bp) / diagram.total_mass
        if disjoint:
            ok = ma == 0.0 and smass == 0.0
        else:
            ok = smass <= tmass + tol
        results.append(ProbeResult(region, bool(disjoint), float(ma), float(tmass), float(smass), bool(ok)))
    return AlexandrovReport(err, recomputed_err, bool(cells_ok), in_y, exhausts, results)

