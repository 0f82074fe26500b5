"""Lower convex hulls of lifted point sets.

Everything in the convex kernel reduces to one construction: given points
p_i in R^n with heights h_i, find the lower facets of conv{(p_i, h_i)}.
For a max-form potential u(x) = max_i (s_i.x + b_i) the lifted set is
(s_i, -b_i); lower-hull vertices are the non-redundant pieces, and every
lower facet with gradient a is a vertex x = a of the affine complex of u.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

_NORMAL_TOL = 1e-12


@dataclass(frozen=True)
class LowerHull:
    dim: int
    points: np.ndarray
    heights: np.ndarray
    simplices: np.ndarray  # (k, dim + 1) indices spanning full-dimensional lower facets
    gradients: np.ndarray  # (k, dim) slope of each facet plane
    offsets: np.ndarray  # (k,) intercept of each facet plane
    vertices: np.ndarray  # indices of lower-hull vertices, sorted
    full_dim: bool

    @cached_property
    def simplex_volumes(self) -> np.ndarray:
        if len(self.simplices) == 0:
            return np.zeros(0)
        p = self.points[self.simplices]
        edges = p[:, 1:, :] - p[:, :1, :]
        fact = float(np.prod(np.arange(1, self.dim + 1)))
        return np.abs(np.linalg.det(edges)) / fact

    @cached_property
    def hull_volume(self) -> float:
        return float(self.simplex_volumes.sum())

    @cached_property
    def _hull_equations(self):
        if not self.full_dim:
            return None
        if self.dim == 1:
            return None
        return ConvexHull(self.points[self.vertices]).equations

    def in_hull(self, y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Membership of rows of y in conv(points)."""
        y = np.atleast_2d(y)
        scale = max(1.0, float(np.abs(self.points).max()))
        if self.dim == 1:
            lo, hi = self.points[:, 0].min(), self.points[:, 0].max()
            return (y[:, 0] >= lo - tol * scale) & (y[:, 0] <= hi + tol * scale)
        if self.full_dim:
            eq = self._hull_equations
            return np.all(y @ eq[:, :-1].T + eq[:, -1] <= tol * scale, axis=1)
        return np.array([_lp_envelope(self.points, self.heights, yy) is not None for yy in y])

    def envelope(self, y: np.ndarray) -> np.ndarray:
        """Lower convex envelope at rows of y; NaN marks points outside the hull."""
        y = np.atleast_2d(y)
        out = np.full(len(y), np.nan)
        inside = self.in_hull(y)
        if not inside.any():
            return out
        if self.full_dim:
            vals = y[inside] @ self.gradients.T + self.offsets
            out[inside] = vals.max(axis=1)
        else:
            for k in np.flatnonzero(inside):
                v = _lp_envelope(self.points, self.heights, y[k])
                out[k] = np.nan if v is None else v
        return out

    def active_facet(self, y: np.ndarray) -> np.ndarray:
        """Index of the lower facet whose plane attains the envelope at y."""
        y = np.atleast_2d(y)
        return np.argmax(y @ self.gradients.T + self.offsets, axis=1)


def _affine_rank(x: np.ndarray, tol: float = 1e-10) -> int:
    if len(x) <= 1:
        return 0
    c = x - x.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


def _lp_envelope(points, heights, y):
    """min sum l_i h_i  s.t.  sum l_i p_i = y, sum l_i = 1, l >= 0; None when infeasible."""
    m, n = points.shape
    a_eq = np.vstack([points.T, np.ones((1, m))])
    b_eq = np.concatenate([np.asarray(y, float), [1.0]])
    res = linprog(heights, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return float(res.fun)


def _lp_is_lower_vertex(points, heights, j) -> bool:
    others = np.delete(np.arange(len(points)), j)
    if len(others) == 0:
        return True
    v = _lp_envelope(points[others], heights[others], points[j])
    if v is None:
        return True
    return v > heights[j] + 1e-12 * max(1.0, abs(heights[j]))


def _dedupe(points, heights):
    """Keep, for each distinct point, the index with the smallest height."""
    order = np.lexsort((np.arange(len(points)), heights))
    seen = {}
    keep = []
    for i in order:
        key = points[i].tobytes()
        if key not in seen:
            seen[key] = i
            keep.append(i)
    return np.sort(np.array(keep, dtype=int))


def _lower_chain_1d(p: np.ndarray, h: np.ndarray, idx: np.ndarray) -> list:
    order = idx[np.lexsort((h[idx], p[idx]))]
    chain: list = []
    for i in order:
        if chain and p[chain[-1]] == p[i]:
            continue
        while len(chain) >= 2:
            a, b = chain[-2], chain[-1]
            cross = (p[b] - p[a]) * (h[i] - h[a]) - (h[b] - h[a]) * (p[i] - p[a])
            if cross <= 0:
                chain.pop()
            else:
                break
        chain.append(i)
    return chain


def lower_hull(points, heights) -> LowerHull:
    points = np.asarray(points, dtype=float)
    heights = np.asarray(heights, dtype=float).ravel()
    if points.ndim == 1:
        points = points[:, None]
    m, n = points.shape
    if m == 0 or heights.shape != (m,):
        raise ValueError("need a nonempty point set with one height per point")
    cand = _dedupe(points, heights)

    if n == 1:
        chain = _lower_chain_1d(points[:, 0], heights, cand)
        simp = np.array([[chain[k], chain[k + 1]] for k in range(len(chain) - 1)], dtype=int).reshape(-1, 2)
        if len(simp):
            dp = points[simp[:, 1], 0] - points[simp[:, 0], 0]
            g = (heights[simp[:, 1]] - heights[simp[:, 0]]) / dp
            off = heights[simp[:, 0]] - g * points[simp[:, 0], 0]
        else:
            g = np.zeros(0)
            off = np.zeros(0)
        return LowerHull(1, points, heights, simp, g[:, None], off, np.array(sorted(chain)), len(chain) > 1)

    empty = np.zeros((0, n + 1), dtype=int)
    if len(cand) < n + 1 or _affine_rank(points[cand]) < n:
        verts = [j for j in cand if _lp_is_lower_vertex(points[cand], heights[cand], int(np.flatnonzero(cand == j)[0]))]
        return LowerHull(n, points, heights, empty, np.zeros((0, n)), np.zeros(0), np.array(sorted(verts), dtype=int), False)

    lifted = np.column_stack([points[cand], heights[cand]])
    if _affine_rank(lifted) < n + 1:
        # all lifted points on one hyperplane: a single flat facet
        a_mat = np.column_stack([points[cand], np.ones(len(cand))])
        coef, *_ = np.linalg.lstsq(a_mat, heights[cand], rcond=None)
        tri = Delaunay(points[cand])
        simp = cand[tri.simplices]
        verts = cand[ConvexHull(points[cand]).vertices]
        k = len(simp)
        return LowerHull(
            n, points, heights, simp, np.tile(coef[:n], (k, 1)), np.full(k, coef[n]), np.sort(verts), True
        )

    try:
        hull = ConvexHull(lifted)
    except QhullError:
        hull = ConvexHull(lifted, qhull_options="QJ")
    eq = hull.equations
    lower = eq[:, n] < -_NORMAL_TOL
    simp = cand[hull.simplices[lower]]
    grads = -eq[lower, :n] / eq[lower, n : n + 1]
    offs = -eq[lower, n + 1] / eq[lower, n]
    # drop slivers: near-vertical facets carry no area and blow up the plane slopes
    edges = points[simp[:, 1:]] - points[simp[:, :1]]
    vol = np.abs(np.linalg.det(edges))
    keep = vol > 1e-13 * max(vol.max(), 1e-300)
    simp, grads, offs = simp[keep], grads[keep], offs[keep]
    verts = np.unique(simp)
    return LowerHull(n, points, heights, simp, grads, offs, verts, True)
