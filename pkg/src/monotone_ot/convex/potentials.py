"""Max-form and hull-form convex potentials and Legendre conjugation."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .hull import LowerHull, _affine_rank, lower_hull

TIE_TOL = 1e-9


class _PosInf:
    """The extended value +inf. Compare with ``is POS_INF``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "POS_INF"

    def __reduce__(self):
        return (_PosInf, ())


POS_INF = _PosInf()


def extreme_points(points: np.ndarray) -> np.ndarray:
    """Extreme points of a finite set (rows), in a deterministic order."""
    pts = np.unique(np.atleast_2d(np.asarray(points, dtype=float)), axis=0)
    m, n = pts.shape
    if m <= 1:
        return pts
    if n == 1:
        return np.array([[pts[:, 0].min()], [pts[:, 0].max()]])
    rank = _affine_rank(pts)
    if rank == n:
        try:
            return pts[np.sort(ConvexHull(pts).vertices)]
        except QhullError:
            pass
    keep = []
    for j in range(m):
        others = np.delete(pts, j, axis=0)
        a_eq = np.vstack([others.T, np.ones((1, m - 1))])
        res = linprog(np.zeros(m - 1), A_eq=a_eq, b_eq=np.append(pts[j], 1.0), bounds=(0, None), method="highs")
        if res.status != 0:
            keep.append(j)
    return pts[keep]


@dataclass(frozen=True)
class SubdifferentialSet:
    """Compact convex set stored by its extreme points."""

    vertices: np.ndarray

    def __post_init__(self):
        v = extreme_points(self.vertices)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def is_singleton(self) -> bool:
        return len(self.vertices) == 1

    @property
    def affine_dim(self) -> int:
        return _affine_rank(self.vertices)

    def volume(self) -> float:
        """n-dimensional Lebesgue measure (0 for lower-dimensional sets)."""
        if self.affine_dim < self.dim:
            return 0.0
        if self.dim == 1:
            return float(self.vertices.max() - self.vertices.min())
        return float(ConvexHull(self.vertices).volume)

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        m = len(self.vertices)
        a_eq = np.vstack([self.vertices.T, np.ones((1, m))])
        b_eq = np.append(p, 1.0)
        # minimize the l1 slack of the equality system
        k = len(b_eq)
        a = np.hstack([a_eq, np.eye(k), -np.eye(k)])
        c = np.concatenate([np.zeros(m), np.ones(2 * k)])
        res = linprog(c, A_eq=a, b_eq=b_eq, bounds=(0, None), method="highs")
        return bool(res.status == 0 and res.fun <= tol * max(1.0, float(np.abs(p).max(initial=0))))


@dataclass(frozen=True)
class PiecewiseAffinePotential:
    """u(z) = max_j (slope_j . z + intercept_j).

    ``supports`` optionally keeps the (base_point, value, slope) sample the
    potential was built from.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    supports: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.slopes, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        b = np.asarray(self.intercepts, dtype=float).ravel()
        if len(s) == 0:
            raise ValueError("a potential needs at least one piece")
        if len(b) != len(s):
            raise ValueError("one intercept per slope required")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(b))):
            raise ValueError("pieces must be finite")
        s.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", b)

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    @property
    def n_pieces(self) -> int:
        return len(self.intercepts)

    def __call__(self, x):
        return self.evaluate(x)

    def values_all(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[1]}")
        return x @ self.slopes.T + self.intercepts

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        vals = self.values_all(x).max(axis=1)
        return float(vals[0]) if x.ndim == 1 else vals

    def argmax(self, x) -> np.ndarray:
        """Index of the active piece, lowest index on exact ties."""
        return np.argmax(self.values_all(x), axis=1)

    @property
    def lipschitz_constant(self) -> float:
        return float(np.linalg.norm(self.slopes, axis=1).max())

    def subdifferential_image(self) -> SubdifferentialSet:
        """The set of all subgradients over R^n: the convex hull of the slopes."""
        return SubdifferentialSet(self.slopes)

    @cached_property
    def lifted_hull(self) -> LowerHull:
        return lower_hull(self.slopes, -self.intercepts)

    def canonical(self) -> "PiecewiseAffinePotential":
        """Drop pieces that are never the unique maximum anywhere."""
        keep = self.lifted_hull.vertices
        if len(keep) == self.n_pieces:
            return self
        return PiecewiseAffinePotential(self.slopes[keep], self.intercepts[keep], self.supports)

    @property
    def is_canonical(self) -> bool:
        return len(self.lifted_hull.vertices) == self.n_pieces

    def complex_vertices(self):
        """Vertices of the affine complex with their subdifferential volumes.

        Returns (points, volumes): one entry per full-dimensional lower facet
        of the lifted slope set. Facets sharing a plane (coplanar lifted
        points) share a vertex and their volumes add up.
        """
        h = self.lifted_hull
        return h.gradients, h.simplex_volumes

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "pieces": [[[repr(float(v)) for v in s], repr(float(b))] for s, b in zip(self.slopes, self.intercepts)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PiecewiseAffinePotential":
        n = int(d["dim"])
        slopes = np.array([[float(v) for v in p[0]] for p in d["pieces"]]).reshape(-1, n)
        inter = np.array([float(p[1]) for p in d["pieces"]])
        return cls(slopes, inter)


@dataclass(frozen=True)
class LowerHullPotential:
    """Lower convex envelope of (point_i, value_i), +inf off conv{point_i}."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        v = np.asarray(self.values, dtype=float).ravel()
        if len(p) == 0 or len(v) != len(p):
            raise ValueError("need a nonempty point set with one value per point")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def hull(self) -> LowerHull:
        return lower_hull(self.points, self.values)

    @cached_property
    def _vertex_lookup(self) -> dict:
        return {self.points[i].tobytes(): float(self.values[i]) for i in self.hull.vertices}

    def evaluate_many(self, y) -> np.ma.MaskedArray:
        """Values at rows of y; masked entries are +inf."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if y.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {y.shape[1]}")
        vals = self.hull.envelope(y)
        for k, row in enumerate(y):
            hit = self._vertex_lookup.get(row.tobytes())
            if hit is not None:
                vals[k] = hit
        return np.ma.masked_invalid(vals)

    def evaluate(self, y):
        """Single-point value: a float, or POS_INF outside the domain."""
        v = self.evaluate_many(np.asarray(y, dtype=float).reshape(1, -1))
        return POS_INF if v.mask[0] else float(v[0])

    def __call__(self, y):
        return self.evaluate(y)

    def in_domain(self, y) -> np.ndarray:
        return self.hull.in_hull(np.atleast_2d(np.asarray(y, dtype=float)))

    def canonical(self) -> "LowerHullPotential":
        keep = self.hull.vertices
        if len(keep) == len(self.values):
            return self
        return LowerHullPotential(self.points[keep], self.values[keep])

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "points": [[[repr(float(v)) for v in p], repr(float(b))] for p, b in zip(self.points, self.values)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "LowerHullPotential":
        n = int(d["dim"])
        pts = np.array([[float(v) for v in p[0]] for p in d["points"]]).reshape(-1, n)
        return cls(pts, np.array([float(p[1]) for p in d["points"]]))


def build_max_form(supports: Sequence) -> PiecewiseAffinePotential:
    """Max of supporting planes value_j + slope_j . (z - base_j)."""
    supports = list(supports)
    if not supports:
        raise ValueError("need at least one support")
    base = [np.atleast_1d(np.asarray(s[0], dtype=float)) for s in supports]
    slope = [np.atleast_1d(np.asarray(s[2], dtype=float)) for s in supports]
    n = base[0].size
    if any(b.size != n for b in base) or any(s.size != n for s in slope):
        raise ValueError("all base points and slopes must share one dimension")
    base = np.array(base)
    slope = np.array(slope)
    value = np.array([float(s[1]) for s in supports])
    inter = value - np.einsum("ij,ij->i", slope, base)
    return PiecewiseAffinePotential(slope, inter, supports=tuple(supports))


def evaluate_with_subdifferential(u: PiecewiseAffinePotential, x, tie_tol: float = TIE_TOL):
    """Value of u at x and the convex hull of the slopes of all active pieces."""
    x = np.asarray(x, dtype=float).ravel()
    vals = u.values_all(x)[0]
    top = vals.max()
    active = vals >= top - tie_tol * max(1.0, abs(top))
    return float(top), SubdifferentialSet(u.slopes[active])


def legendre_conjugate(u):
    """Exact conjugate between the two representations.

    max_j (s_j.x + b_j)  <->  lower envelope of (s_j, -b_j).
    Max-form input is canonicalized first so the round trip is exact.
    """
    if isinstance(u, PiecewiseAffinePotential):
        c = u.canonical()
        return LowerHullPotential(c.slopes, -c.intercepts)
    if isinstance(u, LowerHullPotential):
        c = u.canonical()
        return PiecewiseAffinePotential(c.points, -c.values)
    raise TypeError(f"cannot conjugate {type(u).__name__}")
