"""Source densities, discrete target measures and target quantization."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .._quadrature import gauss_legendre01
from ..convex.domains import DomainDescriptor, gaussian_box_deficit, gaussian_box_halfwidth
from ..convex.measures import counter_rng

COVER_EPS = 1e-9


class Density:
    """Nonnegative density on R^n; subclasses add closed forms where they exist."""

    name = "density"

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    sup = None

    def box_moments(self, lo, hi):
        """(mass, first moment) over the box [lo, hi], or None without a closed form."""
        return None

    def covering_box(self, eps: float = COVER_EPS):
        return None

    def to_json(self) -> dict:
        return {"name": self.name}


class UniformDensity(Density):
    name = "uniform"

    def __init__(self, domain: DomainDescriptor):
        super().__init__(domain.dim)
        self.domain = domain
        self.value = 1.0 / domain.volume()
        self.sup = self.value

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.where(self.domain.contains(x), self.value, 0.0)

    def box_moments(self, lo, hi):
        if self.domain.kind != "box":
            return None
        a = np.maximum(lo, self.domain.params["lo"])
        b = np.minimum(hi, self.domain.params["hi"])
        if np.any(b <= a):
            return 0.0, np.zeros(self.dim)
        mass = self.value * float(np.prod(b - a))
        return mass, mass * 0.5 * (a + b)


class GaussianDensity(Density):
    name = "gaussian"

    def __init__(self, dim: int, sigma: float = 1.0):
        super().__init__(dim)
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.sup = (2 * math.pi * self.sigma**2) ** (-dim / 2)

    def __call__(self, x):
        x = np.atleast_2d(x)
        return self.sup * np.exp(-0.5 * np.sum(x * x, axis=1) / self.sigma**2)

    def box_moments(self, lo, hi):
        s = self.sigma
        a = np.asarray(lo, float) / (s * math.sqrt(2))
        b = np.asarray(hi, float) / (s * math.sqrt(2))
        # 1D mass via erf differences taken on the tail side for accuracy
        m1 = np.where(a >= 0, 0.5 * (special.erfc(a) - special.erfc(b)), 0.5 * (special.erfc(-b) - special.erfc(-a)))
        m1 = np.where((a < 0) & (b > 0), 1.0 - 0.5 * special.erfc(-a) - 0.5 * special.erfc(b), m1)
        e1 = s / math.sqrt(2 * math.pi) * (np.exp(-(a**2)) - np.exp(-(b**2)))
        mass = float(np.prod(m1))
        first = np.array([e1[i] * np.prod(np.delete(m1, i)) for i in range(self.dim)])
        return mass, first

    def radial_kernel(self, r):
        """K(r) = int_0^1 t^(n-1) F(t r) dt, so that a polytope P has mass
        sum over facets f of dist_f * int_f K(|x|) dA (divergence theorem),
        dist_f the signed distance from the origin to the facet plane.
        """
        n = self.dim
        a2 = 0.5 * (np.asarray(r, dtype=float) / self.sigma) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            if n == 2:
                k = -np.expm1(-a2) / (2 * a2)
                small = a2 < 1e-8
                series = 0.5 - a2 / 6
            elif n == 3:
                a = np.sqrt(a2)
                k = math.sqrt(math.pi) * special.erf(a) / (4 * a2 * a) - np.exp(-a2) / (2 * a2)
                small = a2 < 1e-2
                # sum_k (-a2)^k / (k! (2k + 3)) keeps the cancellation away
                series = 1 / 3 - a2 / 5 + a2**2 / 14 - a2**3 / 54 + a2**4 / 264 - a2**5 / 1560
            else:
                k = 0.5 * special.gamma(0.5 * n) * special.gammainc(0.5 * n, a2) / a2 ** (0.5 * n)
                small = a2 < 1e-30
                series = 1.0 / n
        return self.sup * np.where(small, series, k)

    def covering_box(self, eps: float = COVER_EPS):
        L = gaussian_box_halfwidth(self.sigma, self.dim, eps)
        return np.full(self.dim, -L), np.full(self.dim, L), gaussian_box_deficit(self.sigma, self.dim, L)

    def to_json(self):
        return {"name": self.name, "sigma": self.sigma}


class CounterexampleDensity(Density):
    """The induced density F of the counterexample potential, zero off X."""

    name = "counterexample_F"

    def __init__(self, spec):
        super().__init__(spec.n)
        self.spec = spec

    def __call__(self, x):
        from ..counterexample import induced_density_many

        return induced_density_many(self.spec, np.atleast_2d(x))

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        """Exact draws: F is the pullback of the standard Gaussian under grad u."""
        from ..counterexample import invert_gradient_many

        y = counter_rng(seed).standard_normal((n_samples, self.dim))
        x, ok = invert_gradient_many(self.spec, y)
        return x[ok]

    def to_json(self):
        return {"name": self.name, "n": self.spec.n, "alpha": self.spec.alpha}


def density_from_json(d: dict, domain: DomainDescriptor) -> Density:
    name = d["name"]
    if name == "uniform":
        return UniformDensity(domain)
    if name == "gaussian":
        return GaussianDensity(domain.dim, float(d.get("sigma", 1.0)))
    if name == "counterexample_F":
        from ..counterexample import CounterexampleSpec

        n = int(d.get("n", domain.dim))
        alpha = d.get("alpha")
        spec = CounterexampleSpec(n) if alpha is None else CounterexampleSpec(n, float(alpha))
        return CounterexampleDensity(spec)
    raise ValueError(f"unknown density {name!r}")


@dataclass(frozen=True)
class SourceDensity:
    """mu = F 1_X dx together with the bounded region used for integration."""

    domain: DomainDescriptor
    density: Density
    region: DomainDescriptor = None
    mass_deficit: float = 0.0
    bound_metadata: Optional[dict] = None

    def __post_init__(self):
        if self.density.dim != self.domain.dim:
            raise ValueError("density and domain dimensions differ")
        if self.region is None:
            region, deficit = _integration_region(self.domain, self.density)
            object.__setattr__(self, "region", region)
            object.__setattr__(self, "mass_deficit", deficit)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.where(self.domain.contains(x), self.density(x), 0.0)

    @classmethod
    def uniform(cls, domain: DomainDescriptor) -> "SourceDensity":
        return cls(domain, UniformDensity(domain))

    @classmethod
    def gaussian(cls, dim: int, sigma: float = 1.0) -> "SourceDensity":
        return cls(DomainDescriptor.full_space(dim), GaussianDensity(dim, sigma))

    def total_mass(self, order: int = 12) -> float:
        """Quadrature check of the normalization over the integration region."""
        lo, hi = self.region.bounding_box()
        return _box_quadrature(self, lo, hi, order, self.region)[0]

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        """Rejection sampling from the integration region with a declared envelope."""
        rng = counter_rng(seed)
        if isinstance(self.density, GaussianDensity) and self.domain.kind == "full_space":
            lo, hi = self.region.bounding_box()
            out = []
            got = 0
            while got < n_samples:
                z = rng.standard_normal((max(n_samples - got, 1024) * 11 // 10, self.dim)) * self.density.sigma
                z = z[np.all((z >= lo) & (z <= hi), axis=1)]
                out.append(z)
                got += len(z)
            return np.concatenate(out)[:n_samples]
        sup = self.density.sup
        if sup is None:
            raise ValueError("rejection sampling needs a declared density bound")
        lo, hi = self.region.bounding_box()
        out = []
        got = 0
        while got < n_samples:
            k = max(2 * (n_samples - got), 4096)
            x = lo + (hi - lo) * rng.random((k, self.dim))
            keep = self.region.contains(x) & (rng.random(k) * sup <= self(x))
            out.append(x[keep])
            got += int(keep.sum())
        return np.concatenate(out)[:n_samples]

    def to_json(self) -> dict:
        return {"domain": self.domain.to_json(), "density": self.density.to_json()}


def _integration_region(domain: DomainDescriptor, density: Density):
    if domain.is_bounded:
        return domain, 0.0
    cover = density.covering_box()
    if cover is None:
        raise ValueError("unbounded source domain needs a density with a covering box")
    lo, hi, deficit = cover
    if domain.kind == "halfspace":
        raise ValueError("halfspace sources are not supported; use a bounded domain")
    return DomainDescriptor.box(lo, hi), float(deficit)


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    masses: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        m = np.asarray(self.masses, dtype=float).ravel()
        if len(p) == 0 or len(m) != len(p):
            raise ValueError("one mass per point required")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        if abs(m.sum() - 1.0) > 1e-12:
            raise ValueError(f"masses must sum to 1 (got {m.sum()!r})")
        if len(np.unique(p, axis=0)) != len(p):
            raise ValueError("target points must be pairwise distinct")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "masses", m)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.masses)

    @classmethod
    def normalized(cls, points, masses, meta=None) -> "DiscreteMeasure":
        m = np.asarray(masses, dtype=float)
        m = m / m.sum()
        # one more pass so the float sum lands on 1 within a few ulps
        m = m / m.sum()
        return cls(points, m, meta or {})


def grid_shape_for(n_points: int, extent) -> tuple:
    """Factorization of n_points into per-axis counts with the squarest cells."""
    extent = np.asarray(extent, dtype=float)
    d = extent.size
    best = None
    for shape in _factorizations(n_points, d):
        cells = extent / np.array(shape)
        score = (cells.max() / cells.min(), tuple(-s for s in shape))
        if best is None or score < best[0]:
            best = (score, shape)
    return best[1]


def _factorizations(n: int, d: int):
    if d == 1:
        yield (n,)
        return
    for k in range(1, n + 1):
        if n % k == 0:
            for rest in _factorizations(n // k, d - 1):
                yield (k,) + rest


def _box_quadrature(density, lo, hi, order, domain=None):
    """(mass, first moment) of density over [lo, hi] by a tensor Gauss rule."""
    d = len(lo)
    t, w = gauss_legendre01(order)
    axes = [lo[i] + (hi[i] - lo[i]) * t for i in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    wts = np.ones(1)
    for i in range(d):
        wts = np.multiply.outer(wts, w * (hi[i] - lo[i]))
    wts = wts.ravel()
    vals = density(pts)
    if domain is not None and domain.kind != "full_space":
        vals = np.where(domain.contains(pts), vals, 0.0)
    fw = vals * wts
    return float(fw.sum()), fw @ pts


def quantize_target(G: Density, Y: DomainDescriptor, N: int, truncation_radius: float, seed: int = 0,
                    mode: str = "grid", grid_shape=None, quad_order: int = 8, subcells: int = 1) -> DiscreteMeasure:
    """N-point quantization of G restricted to Y and the cube [-R, R]^n.

    Grid mode: masses are the G-masses of the cells of a regular grid over
    the truncated region, points are the cell barycenters under G. Lloyd
    mode: k-means on a seeded sample.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if G.dim != Y.dim:
        raise ValueError("density and domain dimensions differ")
    R = float(truncation_radius)
    lo = np.full(Y.dim, -R)
    hi = np.full(Y.dim, R)
    if Y.is_bounded:
        blo, bhi = Y.bounding_box()
        lo, hi = np.maximum(lo, blo), np.minimum(hi, bhi)
    if np.any(hi <= lo):
        raise ValueError("truncated target region is empty")
    extra = {}
    if mode == "grid":
        shape = tuple(grid_shape) if grid_shape is not None else grid_shape_for(N, hi - lo)
        extra["grid_shape"] = [int(k) for k in shape]
    if mode == "grid" and isinstance(G, CounterexampleDensity):
        # F has integrable peaks at the poles that tensor rules miss; cell
        # masses come from exact transported samples instead
        n_samples = max(400 * N, 400_000)
        points, masses = _quantize_grid_sampled(G, Y, N, lo, hi, grid_shape, n_samples, seed)
        extra.update({"mass_estimator": "transported_samples", "n_samples": n_samples, "seed": int(seed)})
    elif mode == "grid":
        points, masses = _quantize_grid(G, Y, N, lo, hi, grid_shape, quad_order, subcells)
    elif mode == "lloyd":
        points, masses = _quantize_lloyd(G, Y, N, lo, hi, seed)
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    total = float(masses.sum())
    if total <= 0:
        raise ValueError("zero mass in truncated region")
    keep = masses > 0
    meta = {
        "mode": mode,
        "truncation_radius": R,
        "truncated_mass": total,
        "mass_deficit": max(0.0, 1.0 - total),
        "dropped_cells": int(np.count_nonzero(~keep)),
        "box": [lo.tolist(), hi.tolist()],
        **extra,
    }
    return DiscreteMeasure.normalized(points[keep], masses[keep], meta)


def _quantize_grid(G, Y, N, lo, hi, grid_shape, quad_order, subcells):
    shape = tuple(grid_shape) if grid_shape is not None else grid_shape_for(N, hi - lo)
    if int(np.prod(shape)) != N:
        raise ValueError(f"grid shape {shape} does not have {N} cells")
    edges = [np.linspace(lo[i], hi[i], shape[i] + 1) for i in range(len(lo))]
    points = np.zeros((N, len(lo)))
    masses = np.zeros(N)
    exact_ok = Y.kind == "full_space" or (Y.kind == "box" and isinstance(G, UniformDensity))
    for k, idx in enumerate(itertools.product(*[range(s) for s in shape])):
        a = np.array([edges[i][j] for i, j in enumerate(idx)])
        b = np.array([edges[i][j + 1] for i, j in enumerate(idx)])
        mom = G.box_moments(a, b) if exact_ok else None
        if mom is None:
            mass, first = 0.0, np.zeros(len(lo))
            # split the cell to resolve sharp density features
            sub = [np.linspace(a[i], b[i], subcells + 1) for i in range(len(lo))]
            for sidx in itertools.product(*[range(subcells)] * len(lo)):
                sa = np.array([sub[i][j] for i, j in enumerate(sidx)])
                sb = np.array([sub[i][j + 1] for i, j in enumerate(sidx)])
                m_, f_ = _box_quadrature(G, sa, sb, quad_order, Y)
                mass += m_
                first = first + f_
        else:
            mass, first = mom
        masses[k] = mass
        points[k] = first / mass if mass > 0 else 0.5 * (a + b)
    return points, masses


def _quantize_grid_sampled(G, Y, N, lo, hi, grid_shape, n_samples, seed):
    shape = tuple(grid_shape) if grid_shape is not None else grid_shape_for(N, hi - lo)
    if int(np.prod(shape)) != N:
        raise ValueError(f"grid shape {shape} does not have {N} cells")
    x = G.sample(n_samples, seed)
    x = x[np.all((x >= lo) & (x <= hi), axis=1) & Y.contains(x)]
    shape_a = np.array(shape)
    idx = np.minimum(((x - lo) / (hi - lo) * shape_a).astype(int), shape_a - 1)
    flat = np.ravel_multi_index(idx.T, shape)
    counts = np.bincount(flat, minlength=N).astype(float)
    sums = np.stack([np.bincount(flat, weights=x[:, k], minlength=N) for k in range(len(lo))], axis=1)
    grid_idx = np.array(list(itertools.product(*[range(s) for s in shape])))
    centers = lo + (grid_idx + 0.5) * (hi - lo) / shape_a
    points = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centers)
    return points, counts / n_samples


def _quantize_lloyd(G, Y, N, lo, hi, seed):
    from scipy.cluster.vq import kmeans2

    rng = counter_rng(seed)
    n_samples = max(200 * N, 20_000)
    if isinstance(G, GaussianDensity):
        out, got = [], 0
        while got < n_samples:
            z = rng.standard_normal((n_samples, G.dim)) * G.sigma
            z = z[np.all((z >= lo) & (z <= hi), axis=1) & Y.contains(z)]
            out.append(z)
            got += len(z)
        xs = np.concatenate(out)[:n_samples]
    else:
        if G.sup is None:
            raise ValueError("Lloyd quantization needs a density bound for sampling")
        out, got = [], 0
        while got < n_samples:
            x = lo + (hi - lo) * rng.random((4 * n_samples, G.dim))
            keep = Y.contains(x) & (rng.random(len(x)) * G.sup <= G(x))
            out.append(x[keep])
            got += int(keep.sum())
        xs = np.concatenate(out)[:n_samples]
    lo_mass = G.box_moments(lo, hi)
    frac = 1.0 if lo_mass is None else lo_mass[0]
    centers, labels = kmeans2(xs, N, minit="++", seed=np.random.default_rng(int(seed)))
    counts = np.bincount(labels, minlength=N).astype(float)
    return centers, frac * counts / counts.sum()
