"""Laguerre (power) cells cell_i = {x in X : x.y_i - w_i >= x.y_j - w_j for all j}.

One dimension: exact intervals. Two dimensions: exact halfplane clipping of
the polygonized domain. Three dimensions: exact halfspace clipping of a box.
Cell masses are exact for uniform densities and use Gauss rules otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import sparse

from .._quadrature import gauss_legendre01, integrate_segments, integrate_tets, integrate_triangles
from ..convex.hull import lower_hull
from ..convex.potentials import PiecewiseAffinePotential
from .measures import DiscreteMeasure, GaussianDensity, SourceDensity, UniformDensity

ALL_PAIRS_BELOW = 12
POLYGON_RESOLUTION = 512
# facet pieces longer than this (in units of sigma) are subdivided before quadrature
FACET_H = 1.0


@dataclass
class Cell:
    """Geometry of one cell; ``kind`` is interval, polygon or polyhedron."""

    kind: str
    data: object  # (a, b) | (vertices, edge_labels) | list of (face vertices, label)

    @cached_property
    def vertices(self) -> np.ndarray:
        if self.kind == "interval":
            return np.array([[self.data[0]], [self.data[1]]])
        if self.kind == "polygon":
            return self.data[0]
        return np.unique(np.vstack([f for f, _ in self.data]), axis=0)

    @property
    def diameter(self) -> float:
        v = self.vertices
        if len(v) < 2:
            return 0.0
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d * d).sum(axis=2)).max())

    @property
    def measure(self) -> float:
        if self.kind == "interval":
            return float(self.data[1] - self.data[0])
        if self.kind == "polygon":
            return abs(_polygon_area(self.data[0]))
        return float(np.sum(_tet_volumes(_polyhedron_tets(self.data))))

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "interval":
            return np.array([0.5 * (self.data[0] + self.data[1])])
        if self.kind == "polygon":
            return _polygon_centroid(self.data[0])
        tets = _polyhedron_tets(self.data)
        vol = _tet_volumes(tets)
        return (vol[:, None] * tets.mean(axis=1)).sum(axis=0) / vol.sum()

    def to_rows(self):
        """Vertex rows for export: polygons and intervals in boundary order."""
        if self.kind == "polyhedron":
            return self.vertices
        return self.vertices


@dataclass
class LaguerreDiagram:
    source: SourceDensity
    target: DiscreteMeasure
    weights: np.ndarray
    cells: list
    raw_masses: np.ndarray
    total_mass: float
    tiling_error: float = 0.0
    # (i, j, flux) with i < j; computed on first use of jacobian/adjacency
    _fluxes: Optional[tuple] = field(default=None, repr=False)
    _flux_fn: Optional[object] = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def masses(self) -> np.ndarray:
        return self.raw_masses / self.total_mass

    @property
    def residual(self) -> float:
        return float(np.abs(self.masses - self.target.masses).max())

    @cached_property
    def potential(self) -> PiecewiseAffinePotential:
        """u(x) = max_i (x.y_i - w_i)."""
        return PiecewiseAffinePotential(self.target.points, -self.weights)

    def nonempty(self) -> np.ndarray:
        return np.array([c is not None for c in self.cells])

    def _pair_fluxes(self):
        if self._fluxes is None:
            self._fluxes = self._flux_fn()
        return self._fluxes

    @cached_property
    def jacobian(self) -> sparse.csr_matrix:
        """d masses / d weights: off-diagonal int_facet F / |y_i - y_j|, rows sum to 0."""
        i_, j_, flux = self._pair_fluxes()
        N = self.N
        flux = flux / self.total_mass
        rows = np.concatenate([i_, j_, i_, j_])
        cols = np.concatenate([j_, i_, i_, j_])
        vals = np.concatenate([flux, flux, -flux, -flux])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))

    @property
    def adjacency(self) -> set:
        i_, j_, flux = self._pair_fluxes()
        return {(int(a), int(b)) for a, b, f in zip(i_, j_, flux) if f > 0}


def laguerre_diagram(source: SourceDensity, target: DiscreteMeasure, weights,
                     quad_order: Optional[int] = None) -> LaguerreDiagram:
    w = np.asarray(weights, dtype=float).ravel()
    if len(w) != len(target):
        raise ValueError("one weight per target point required")
    if source.dim != target.dim:
        raise ValueError("source and target dimensions differ")
    n = source.dim
    if n == 1:
        return _diagram_1d(source, target, w)
    if n == 2:
        return _diagram_2d(source, target, w, quad_order or 6)
    if n == 3:
        return _diagram_3d(source, target, w, quad_order or 3)
    raise ValueError("Laguerre geometry is implemented for n <= 3")


def _exact_uniform(source: SourceDensity) -> bool:
    return isinstance(source.density, UniformDensity) and source.region is source.domain


def _neighbor_lists(y: np.ndarray, w: np.ndarray, force_all: bool = False):
    N = len(w)
    if force_all or N <= ALL_PAIRS_BELOW:
        return [np.delete(np.arange(N), i) for i in range(N)], np.ones(N, bool)
    hull = lower_hull(y, w)
    if not hull.full_dim or len(hull.simplices) == 0:
        return [np.delete(np.arange(N), i) for i in range(N)], np.ones(N, bool)
    nb = [set() for _ in range(N)]
    for s in hull.simplices:
        for a in s:
            nb[a].update(int(b) for b in s if b != a)
    alive = np.zeros(N, bool)
    alive[hull.vertices] = True
    return [np.array(sorted(s), dtype=int) for s in nb], alive


def _radial(source: SourceDensity):
    if isinstance(source.density, GaussianDensity) and source.domain.kind == "full_space":
        return source.density
    return None


def _facet_h(source):
    g = _radial(source)
    return FACET_H * (g.sigma if g is not None else 1.0)


def _subdivide_segments(a, b, hmax):
    L = np.linalg.norm(b - a, axis=1)
    p = np.maximum(1, np.ceil(L / hmax).astype(int))
    idx = np.repeat(np.arange(len(a)), p)
    start = np.repeat(np.cumsum(p) - p, p)
    j = np.arange(len(idx)) - start
    pp = p[idx][:, None]
    d = (b - a)[idx]
    return a[idx] + d * (j[:, None] / pp), a[idx] + d * ((j[:, None] + 1) / pp), idx


def _refine_triangles(tris, owner, hmax):
    """Midpoint 4-way splits until every edge is at most max(hmax, FACET_H |centroid| / 2).

    The radial kernel varies on the scale max(sigma, r), so far triangles may
    stay larger.
    """
    done_t, done_o = [], []
    while len(tris):
        e = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 1], tris[:, 0] - tris[:, 2]], axis=1)
        r = np.linalg.norm(tris.mean(axis=1), axis=1)
        big = np.linalg.norm(e, axis=2).max(axis=1) > np.maximum(hmax, 0.5 * FACET_H * r)
        done_t.append(tris[~big])
        done_o.append(owner[~big])
        t = tris[big]
        if not len(t):
            break
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        tris = np.concatenate([np.stack(q, axis=1) for q in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))])
        owner = np.tile(owner[big], 4)
    return np.concatenate(done_t), np.concatenate(done_o)


def _segment_integrals(f, a, b, owner, n_out, hmax, k=10):
    a2, b2, idx = _subdivide_segments(a, b, hmax)
    vals = integrate_segments(f, a2, b2, k)
    return np.bincount(owner[idx], weights=vals, minlength=n_out)


def _triangle_integrals(f, tris, owner, n_out, hmax, k=6):
    tris, owner = _refine_triangles(tris, owner, hmax)
    return np.bincount(owner, weights=integrate_triangles(f, tris, k), minlength=n_out)


def polygon_masses(source: SourceDensity, polys, quad_order: int = 6) -> np.ndarray:
    """Source mass of each polygon (None entries give 0)."""
    n_out = len(polys)
    live = [(i, v) for i, v in enumerate(polys) if v is not None]
    if not live:
        return np.zeros(n_out)
    if isinstance(source.density, UniformDensity):
        out = np.zeros(n_out)
        for i, v in live:
            out[i] = source.density.value * abs(_polygon_area(v))
        return out
    g = _radial(source)
    if g is not None:
        a, b, owner, dist = [], [], [], []
        for i, v in live:
            sgn = 1.0 if _polygon_area(v) > 0 else -1.0
            e = np.roll(v, -1, axis=0) - v
            nrm = sgn * np.column_stack([e[:, 1], -e[:, 0]])
            ln = np.linalg.norm(nrm, axis=1)
            # zero-length edges carry no flux
            nrm /= np.where(ln > 0, ln, 1.0)[:, None]
            a.append(v)
            b.append(np.roll(v, -1, axis=0))
            owner.append(np.full(len(v), i))
            dist.append(np.einsum("ij,ij->i", nrm, v))
        a, b, owner, dist = map(np.concatenate, (a, b, owner, dist))
        a2, b2, idx = _subdivide_segments(a, b, FACET_H * g.sigma)
        vals = integrate_segments(lambda x: g.radial_kernel(np.linalg.norm(x, axis=1)), a2, b2, 10)
        return np.bincount(owner[idx], weights=vals * dist[idx], minlength=n_out)
    tris, owner = [], []
    for i, v in live:
        t = _fan_triangles(v)
        tris.append(t)
        owner.append(np.full(len(t), i))
    return _triangle_integrals(source, np.concatenate(tris), np.concatenate(owner), n_out, 0.5, quad_order)


def _oriented_faces(faces):
    """(vertices, unit outward normal, signed plane offset, label) per face."""
    c = np.vstack([f for f, _ in faces]).mean(axis=0)
    out = []
    for v, lab in faces:
        nrm = 0.5 * np.cross(v, np.roll(v, -1, axis=0)).sum(axis=0)
        ln = np.linalg.norm(nrm)
        if ln == 0:
            continue
        nrm = nrm / ln
        if nrm @ (v.mean(axis=0) - c) < 0:
            nrm = -nrm
        out.append((v, nrm, float(nrm @ v.mean(axis=0)), lab))
    return out


def polyhedron_masses(source: SourceDensity, cells, quad_order: int = 3) -> np.ndarray:
    """Source mass of each polyhedron given as a face list (None entries give 0)."""
    n_out = len(cells)
    live = [(i, f) for i, f in enumerate(cells) if f is not None]
    if not live:
        return np.zeros(n_out)
    g = _radial(source)
    if isinstance(source.density, UniformDensity) or g is not None:
        tris, owner, dist = [], [], []
        for i, faces in live:
            for v, nrm, d, _ in _oriented_faces(faces):
                t = _fan_triangles(v)
                tris.append(t)
                owner.append(np.full(len(t), i))
                dist.append(np.full(len(t), d))
        tris, owner, dist = map(np.concatenate, (tris, owner, dist))
        if g is None:
            e1, e2 = tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]
            area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
            return source.density.value * np.bincount(owner, weights=area * dist, minlength=n_out) / 3.0
        key = np.arange(len(tris))
        tr, kk = _refine_triangles(tris, key, FACET_H * g.sigma)
        vals = integrate_triangles(lambda x: g.radial_kernel(np.linalg.norm(x, axis=1)), tr, 6)
        return np.bincount(owner[kk], weights=vals * dist[kk], minlength=n_out)
    tets, owner = [], []
    for i, faces in live:
        t = _polyhedron_tets(faces)
        tets.append(t)
        owner.append(np.full(len(t), i))
    return np.bincount(np.concatenate(owner), weights=integrate_tets(source, np.concatenate(tets), quad_order),
                       minlength=n_out)


# -- one dimension ----------------------------------------------------------

def _interval_mass(source, a, b):
    dens = source.density
    if _exact_uniform(source):
        return dens.value * (b - a)
    mom = dens.box_moments(np.array([a]), np.array([b])) if source.domain.kind in ("full_space", "box") else None
    if mom is not None and source.domain.kind == "full_space":
        return mom[0]
    t, wq = gauss_legendre01(24)
    pieces = max(1, int(np.ceil((b - a) / 0.25)))
    edges = np.linspace(a, b, pieces + 1)
    x = (edges[:-1, None] + np.diff(edges)[:, None] * t[None, :]).ravel()
    wt = (np.diff(edges)[:, None] * wq[None, :]).ravel()
    return float(wt @ source(x[:, None]))


def _diagram_1d(source, target, w):
    lo, hi = source.region.bounding_box()
    lo, hi = float(lo[0]), float(hi[0])
    y = target.points[:, 0]
    N = len(w)
    hull = lower_hull(target.points, w)
    chain = sorted(hull.vertices, key=lambda i: y[i]) if len(hull.vertices) else [int(np.argmin(w))]
    if len(chain) == 1 and N > 1:
        chain = [int(i) for i in hull.vertices] or chain
    breaks = [(w[b] - w[a]) / (y[b] - y[a]) for a, b in zip(chain[:-1], chain[1:])]
    cells = [None] * N
    raw = np.zeros(N)
    pi, pj, fl = [], [], []
    edges = [-np.inf] + breaks + [np.inf]
    for k, i in enumerate(chain):
        a, b = max(edges[k], lo), min(edges[k + 1], hi)
        if b > a:
            cells[i] = Cell("interval", (a, b))
            raw[i] = _interval_mass(source, a, b)
    for k, (a, b) in enumerate(zip(chain[:-1], chain[1:])):
        x = breaks[k]
        if lo < x < hi and cells[a] is not None and cells[b] is not None:
            pi.append(min(a, b))
            pj.append(max(a, b))
            fl.append(float(source(np.array([[x]]))[0]) / abs(y[b] - y[a]))
    total = _interval_mass(source, lo, hi)
    fluxes = (np.array(pi, dtype=int), np.array(pj, dtype=int), np.array(fl, dtype=float))
    return LaguerreDiagram(source, target, w, cells, raw, total, 0.0, fluxes)


# -- two dimensions ---------------------------------------------------------

def _polygon_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(v):
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6 * a)


def clip_polygon(verts, labels, a, b, label, eps=1e-13):
    """Clip a convex polygon by a.x <= b; edge k runs from verts[k] to verts[k+1]."""
    d = verts @ a - b
    scale = eps * max(1.0, float(np.abs(verts).max()) * float(np.abs(a).max()), abs(b))
    inside = d <= scale
    if inside.all():
        return verts, labels
    if not inside.any():
        return None, None
    out_v, out_l = [], []
    k = len(verts)
    for i in range(k):
        j = (i + 1) % k
        P, Q = verts[i], verts[j]
        if inside[i]:
            out_v.append(P)
            if inside[j]:
                out_l.append(labels[i])
            elif d[i] >= -scale:
                # P is already on the cut line: no duplicate crossing point
                out_l.append(label)
            else:
                out_l.append(labels[i])
                t = d[i] / (d[i] - d[j])
                out_v.append(P + t * (Q - P))
                out_l.append(label)
        elif inside[j] and d[j] < -scale:
            t = d[i] / (d[i] - d[j])
            out_v.append(P + t * (Q - P))
            out_l.append(labels[i])
    if len(out_v) < 3:
        return None, None
    v = np.array(out_v)
    if abs(_polygon_area(v)) <= 1e-300:
        return None, None
    return v, np.array(out_l, dtype=int)


def _cells_2d(poly, y, w, neighbors, alive):
    N = len(w)
    cells = [None] * N
    base_labels = -1 - np.arange(len(poly))
    for i in range(N):
        if not alive[i]:
            continue
        v, lab = poly, base_labels
        for j in neighbors[i]:
            # x.(y_j - y_i) <= w_j - w_i
            v, lab = clip_polygon(v, lab, y[j] - y[i], w[j] - w[i], int(j))
            if v is None:
                break
        if v is not None:
            cells[i] = Cell("polygon", (v, lab))
    return cells


def _fan_triangles(v):
    return np.stack([np.repeat(v[:1], len(v) - 2, axis=0), v[1:-1], v[2:]], axis=1)


def _diagram_2d(source, target, w, quad_order):
    region = source.region
    poly = region.as_polygon(POLYGON_RESOLUTION)
    y = target.points
    N = len(w)
    neighbors, alive = _neighbor_lists(y, w)
    cells = _cells_2d(poly, y, w, neighbors, alive)
    region_area = abs(_polygon_area(poly))
    areas = np.array([c.measure if c is not None else 0.0 for c in cells])
    tiling = abs(areas.sum() - region_area) / region_area
    if tiling > 1e-9 and N > ALL_PAIRS_BELOW:
        neighbors, alive = _neighbor_lists(y, w, force_all=True)
        cells = _cells_2d(poly, y, w, neighbors, alive)
        areas = np.array([c.measure if c is not None else 0.0 for c in cells])
        tiling = abs(areas.sum() - region_area) / region_area

    exact = isinstance(source.density, UniformDensity)
    if exact:
        value = source.density.value
        raw = value * areas
        total = value * region_area
    else:
        raw = polygon_masses(source, [c.data[0] if c is not None else None for c in cells], quad_order)
        total = float(raw.sum())

    def fluxes():
        seg_a, seg_b, pair = [], [], []
        for i, c in enumerate(cells):
            if c is None:
                continue
            v, lab = c.data
            for k, j in enumerate(lab):
                if j > i:
                    seg_a.append(v[k])
                    seg_b.append(v[(k + 1) % len(v)])
                    pair.append((i, int(j)))
        if not pair:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        seg_a, seg_b, pair = np.array(seg_a), np.array(seg_b), np.array(pair)
        if exact:
            flux = source.density.value * np.linalg.norm(seg_b - seg_a, axis=1)
        else:
            flux = _segment_integrals(source, seg_a, seg_b, np.arange(len(seg_a)), len(seg_a), _facet_h(source))
        keys = pair[:, 0] * N + pair[:, 1]
        uniq, inv = np.unique(keys, return_inverse=True)
        flux = np.bincount(inv, weights=flux)
        i_, j_ = uniq // N, uniq % N
        return i_, j_, flux / np.linalg.norm(y[i_] - y[j_], axis=1)

    return LaguerreDiagram(source, target, w, cells, raw, total, tiling, None, fluxes)


# -- three dimensions -------------------------------------------------------

def _box_faces(lo, hi):
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    c = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]])
    idx = [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [2, 3, 7, 6], [1, 2, 6, 5], [0, 4, 7, 3]]
    return [(c[f], -1 - k) for k, f in enumerate(idx)]


def _face_area(v) -> float:
    e1 = v[1:-1] - v[0]
    e2 = v[2:] - v[0]
    cx = (e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1]).sum()
    cy = (e1[:, 2] * e2[:, 0] - e1[:, 0] * e2[:, 2]).sum()
    cz = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]).sum()
    return 0.5 * math.sqrt(cx * cx + cy * cy + cz * cz)


def _ring_area2(V, ring) -> float:
    """Squared area of a planar polygon given by vertex indices."""
    x0, y0, z0 = V[ring[0]]
    cx = cy = cz = 0.0
    for k in range(1, len(ring) - 1):
        x1, y1, z1 = V[ring[k]]
        x2, y2, z2 = V[ring[k + 1]]
        ax, ay, az = x1 - x0, y1 - y0, z1 - z0
        bx, by, bz = x2 - x0, y2 - y0, z2 - z0
        cx += ay * bz - az * by
        cy += az * bx - ax * bz
        cz += ax * by - ay * bx
    return 0.25 * (cx * cx + cy * cy + cz * cz)


class _Mesh:
    """Convex polyhedron as shared vertices plus index rings; plain Python
    floats because cells have a few dozen vertices and numpy call overhead
    dominates at that size."""

    __slots__ = ("V", "faces", "size")

    def __init__(self, V, faces, size):
        self.V = V
        self.faces = faces
        self.size = size

    @classmethod
    def from_faces(cls, faces):
        V, index, out = [], {}, []
        for v, lab in faces:
            ring = []
            for p in np.asarray(v, dtype=float):
                key = tuple(float(c) for c in p)
                if key not in index:
                    index[key] = len(V)
                    V.append(key)
                ring.append(index[key])
            out.append((ring, int(lab)))
        size = max([1.0] + [abs(c) for p in V for c in p])
        return cls(V, out, size)

    def to_faces(self):
        return [(np.array([self.V[k] for k in ring]), lab) for ring, lab in self.faces]

    def clip(self, a, b, label, eps=1e-12):
        """Part with a.x <= b, or None when it has no interior."""
        a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
        b = float(b)
        size = self.size
        tol = eps * max(1.0, size * max(abs(a0), abs(a1), abs(a2)), abs(b))
        V = self.V
        d = [a0 * x + a1 * y + a2 * z - b for x, y, z in V]
        if max(d) <= tol:
            return self
        if min(d) >= -tol:
            return None
        vtol = 1e-10 * size
        atol = (1e-12 * size) ** 4
        V = list(V)
        cache = {}

        def cut(i, j):
            key = (i, j) if i < j else (j, i)
            k = cache.get(key)
            if k is None:
                t = d[i] / (d[i] - d[j])
                p, q = V[i], V[j]
                V.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])))
                d.append(0.0)
                k = cache[key] = len(V) - 1
            return k

        new_faces = []
        cap = set()
        plane_face = False
        for ring, lab in self.faces:
            ds = [d[k] for k in ring]
            if max(ds) <= tol:
                if min(ds) >= -tol:
                    plane_face = True
                cap.update(k for k, dk in zip(ring, ds) if dk >= -tol)
                new_faces.append((ring, lab))
                continue
            if min(ds) > tol:
                continue
            out = []
            m = len(ring)
            for s_ in range(m):
                i, j = ring[s_], ring[(s_ + 1) % m]
                di, dj = ds[s_], ds[(s_ + 1) % m]
                if di <= tol:
                    out.append(i)
                    if di >= -tol:
                        cap.add(i)
                    elif dj > tol:
                        k = cut(i, j)
                        out.append(k)
                        cap.add(k)
                elif dj < -tol:
                    k = cut(i, j)
                    out.append(k)
                    cap.add(k)
            out = _dedupe_indices(V, out, vtol)
            if len(out) >= 3 and _ring_area2(V, out) > atol:
                new_faces.append((out, lab))
        if not plane_face and len(cap) >= 3:
            # a corner shaved below vtol collapses the cap to fewer than 3 points
            ring = _dedupe_indices(V, sorted(cap), vtol, cyclic=False)
            if len(ring) >= 3:
                ring = _cap_ring(V, ring, (a0, a1, a2))
                if _ring_area2(V, ring) > atol:
                    new_faces.append((ring, int(label)))
        if len(new_faces) < 4:
            return None
        used = sorted({k for ring, _ in new_faces for k in ring})
        remap = {k: n for n, k in enumerate(used)}
        return _Mesh([V[k] for k in used], [([remap[k] for k in ring], lab) for ring, lab in new_faces], size)


def _dedupe_indices(V, idx, tol, cyclic=True):
    """Drop vertices within tol (max norm) of an earlier kept one."""
    keep = []
    for k in idx:
        p = V[k]
        if cyclic:
            if keep:
                q = V[keep[-1]]
                if max(abs(p[0] - q[0]), abs(p[1] - q[1]), abs(p[2] - q[2])) <= tol:
                    continue
        elif any(max(abs(p[0] - V[h][0]), abs(p[1] - V[h][1]), abs(p[2] - V[h][2])) <= tol for h in keep):
            continue
        keep.append(k)
    if cyclic:
        while len(keep) > 1:
            p, q = V[keep[0]], V[keep[-1]]
            if max(abs(p[0] - q[0]), abs(p[1] - q[1]), abs(p[2] - q[2])) > tol:
                break
            keep.pop()
    return keep


def _cap_ring(V, idx, nrm):
    """Order coplanar points of a convex polygon by angle about their mean."""
    n = math.sqrt(nrm[0] ** 2 + nrm[1] ** 2 + nrm[2] ** 2)
    nx, ny, nz = nrm[0] / n, nrm[1] / n, nrm[2] / n
    m = len(idx)
    c0 = [sum(V[k][c] for k in idx) / m for c in range(3)]
    rel = [(V[k][0] - c0[0], V[k][1] - c0[1], V[k][2] - c0[2]) for k in idx]
    far = max(range(m), key=lambda t: rel[t][0] ** 2 + rel[t][1] ** 2 + rel[t][2] ** 2)
    ex, ey, ez = rel[far]
    proj = ex * nx + ey * ny + ez * nz
    ex, ey, ez = ex - proj * nx, ey - proj * ny, ez - proj * nz
    e = math.sqrt(ex * ex + ey * ey + ez * ez)
    ex, ey, ez = ex / e, ey / e, ez / e
    fx, fy, fz = ny * ez - nz * ey, nz * ex - nx * ez, nx * ey - ny * ex
    ang = [math.atan2(r[0] * fx + r[1] * fy + r[2] * fz, r[0] * ex + r[1] * ey + r[2] * ez) for r in rel]
    return [idx[t] for t in sorted(range(m), key=ang.__getitem__)]


def clip_polyhedron(faces, a, b, label, eps=1e-12):
    """Clip a convex polyhedron (list of (face vertices, label)) by a.x <= b."""
    mesh = _Mesh.from_faces(faces).clip(a, b, label, eps)
    return None if mesh is None else mesh.to_faces()


def _polyhedron_tets(faces):
    c = np.vstack([f for f, _ in faces]).mean(axis=0)
    tets = []
    for v, _ in faces:
        for t in _fan_triangles(v):
            tets.append(np.vstack([c[None, :], t]))
    return np.array(tets)


def _tet_volumes(tets):
    e = tets[:, 1:] - tets[:, :1]
    return np.abs(np.linalg.det(e)) / 6.0


def _cells_3d(faces0, y, w, neighbors, alive):
    N = len(w)
    cells = [None] * N
    mesh0 = _Mesh.from_faces(faces0)
    w = w.tolist()
    for i in range(N):
        if not alive[i]:
            continue
        mesh = mesh0
        for j in neighbors[i]:
            mesh = mesh.clip(y[j] - y[i], w[j] - w[i], int(j))
            if mesh is None:
                break
        if mesh is not None:
            cells[i] = Cell("polyhedron", mesh.to_faces())
    return cells


def _face_table(cells):
    """Fan triangles of every face with owner cell, neighbor label and the
    signed offset of the face plane along its outward normal."""
    tris, face_of, f_cell, f_label, f_center = [], [], [], [], []
    nf = 0
    for i, c in enumerate(cells):
        if c is None:
            continue
        center = np.vstack([v for v, _ in c.data]).mean(axis=0)
        for v, lab in c.data:
            t = _fan_triangles(v)
            tris.append(t)
            face_of.append(np.full(len(t), nf))
            f_cell.append(i)
            f_label.append(lab)
            f_center.append((v.mean(axis=0), center))
            nf += 1
    tris = np.concatenate(tris)
    face_of = np.concatenate(face_of)
    e1, e2 = tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]
    cr = np.column_stack([e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1],
                          e1[:, 2] * e2[:, 0] - e1[:, 0] * e2[:, 2],
                          e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]])
    area = 0.5 * np.sqrt((cr * cr).sum(axis=1))
    fn = np.stack([np.bincount(face_of, weights=cr[:, k], minlength=nf) for k in range(3)], axis=1)
    fc = np.array([a for a, _ in f_center])
    cc = np.array([b for _, b in f_center])
    fn_len = np.linalg.norm(fn, axis=1)
    fn = fn / np.where(fn_len > 0, fn_len, 1.0)[:, None]
    sign = np.where(np.einsum("ij,ij->i", fn, fc - cc) < 0, -1.0, 1.0)
    offset = sign * np.einsum("ij,ij->i", fn, fc)
    return {
        "tris": tris,
        "area": area,
        "cell": np.array(f_cell)[face_of],
        "label": np.array(f_label)[face_of],
        "offset": offset[face_of],
    }


def _diagram_3d(source, target, w, quad_order):
    region = source.region
    if region.kind != "box":
        raise ValueError("three-dimensional sources need a box integration region")
    lo, hi = region.bounding_box()
    faces0 = _box_faces(lo, hi)
    y = target.points
    N = len(w)
    vol_box = float(np.prod(hi - lo))
    neighbors, alive = _neighbor_lists(y, w)
    cells = _cells_3d(faces0, y, w, neighbors, alive)
    table = _face_table(cells)
    vols = np.bincount(table["cell"], weights=table["area"] * table["offset"], minlength=N) / 3.0
    tiling = abs(vols.sum() - vol_box) / vol_box
    if tiling > 1e-9 and N > ALL_PAIRS_BELOW:
        neighbors, alive = _neighbor_lists(y, w, force_all=True)
        cells = _cells_3d(faces0, y, w, neighbors, alive)
        table = _face_table(cells)
        vols = np.bincount(table["cell"], weights=table["area"] * table["offset"], minlength=N) / 3.0
        tiling = abs(vols.sum() - vol_box) / vol_box
    exact = _exact_uniform(source)
    g = _radial(source)
    if exact:
        raw = source.density.value * vols
        total = source.density.value * vol_box
    elif g is not None:
        tr, kk = _refine_triangles(table["tris"], np.arange(len(table["tris"])), FACET_H * g.sigma)
        vals = integrate_triangles(lambda x: g.radial_kernel(np.linalg.norm(x, axis=1)), tr, 6)
        raw = np.bincount(table["cell"][kk], weights=vals * table["offset"][kk], minlength=N)
        total = float(raw.sum())
    else:
        raw = polyhedron_masses(source, [c.data if c is not None else None for c in cells], quad_order)
        total = float(raw.sum())

    def fluxes():
        sel = table["label"] > table["cell"]
        if not sel.any():
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        keys = table["cell"][sel] * N + table["label"][sel]
        uniq, inv = np.unique(keys, return_inverse=True)
        if exact:
            flux = np.bincount(inv, weights=source.density.value * table["area"][sel])
        else:
            flux = _triangle_integrals(source, table["tris"][sel], inv, len(uniq), _facet_h(source))
        i_, j_ = uniq // N, uniq % N
        return i_, j_, flux / np.linalg.norm(y[i_] - y[j_], axis=1)

    return LaguerreDiagram(source, target, w, cells, raw, total, tiling, None, fluxes)
