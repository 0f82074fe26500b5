"""Domain descriptors: membership, boundedness, convexity and volume."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np
from scipy import integrate, special

KINDS = ("full_space", "halfspace", "ball", "box", "polygon", "graph_domain")


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x, single


@dataclass(frozen=True)
class DomainDescriptor:
    """A subset of R^n given by one of a few closed-form variants.

    Membership is tested on the closure. Use the classmethod constructors
    rather than filling ``params`` by hand.
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    # -- constructors -----------------------------------------------------
    @classmethod
    def full_space(cls, dim: int) -> "DomainDescriptor":
        return cls("full_space", dim, {})

    @classmethod
    def halfspace(cls, normal, offset: float) -> "DomainDescriptor":
        normal = np.asarray(normal, dtype=float)
        if not np.any(normal):
            raise ValueError("halfspace normal must be nonzero")
        return cls("halfspace", normal.size, {"normal": normal, "offset": float(offset)})

    @classmethod
    def ball(cls, center, radius: float) -> "DomainDescriptor":
        center = np.asarray(center, dtype=float)
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return cls("ball", center.size, {"center": center, "radius": float(radius)})

    @classmethod
    def box(cls, lo, hi) -> "DomainDescriptor":
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        return cls("box", lo.size, {"lo": lo, "hi": hi})

    @classmethod
    def polygon(cls, vertices) -> "DomainDescriptor":
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        return cls("polygon", 2, {"vertices": v})

    @classmethod
    def graph_domain(cls, dim: int, c: float, lam: float, radius: float) -> "DomainDescriptor":
        """{x : x_1 <= -c |x'|^lam} intersected with the ball B_radius(0)."""
        if c <= 0 or lam <= 1 or radius <= 0:
            raise ValueError("graph_domain needs c > 0, lam > 1, radius > 0")
        if dim < 2:
            raise ValueError("graph_domain needs dim >= 2")
        return cls("graph_domain", dim, {"c": float(c), "lam": float(lam), "radius": float(radius)})

    # -- properties -------------------------------------------------------
    @property
    def is_bounded(self) -> bool:
        return self.kind not in ("full_space", "halfspace")

    @property
    def is_convex(self) -> bool:
        if self.kind == "polygon":
            return _polygon_is_convex(self.params["vertices"])
        return True

    def contains(self, x, tol: float = 0.0):
        """Closed membership test; vectorized over rows."""
        pts, single = _as_points(x, self.dim)
        p = self.params
        if self.kind == "full_space":
            out = np.ones(len(pts), dtype=bool)
        elif self.kind == "halfspace":
            out = pts @ p["normal"] <= p["offset"] + tol
        elif self.kind == "ball":
            out = np.linalg.norm(pts - p["center"], axis=1) <= p["radius"] + tol
        elif self.kind == "box":
            out = np.all((pts >= p["lo"] - tol) & (pts <= p["hi"] + tol), axis=1)
        elif self.kind == "polygon":
            out = _in_polygon(pts, p["vertices"], tol)
        else:
            rp = np.linalg.norm(pts[:, 1:], axis=1)
            out = (pts[:, 0] <= -p["c"] * rp ** p["lam"] + tol) & (
                np.linalg.norm(pts, axis=1) <= p["radius"] + tol
            )
        return bool(out[0]) if single else out

    def bounding_box(self):
        p = self.params
        if self.kind == "box":
            return p["lo"].copy(), p["hi"].copy()
        if self.kind == "ball":
            return p["center"] - p["radius"], p["center"] + p["radius"]
        if self.kind == "polygon":
            v = p["vertices"]
            return v.min(axis=0), v.max(axis=0)
        if self.kind == "graph_domain":
            r = p["radius"]
            lo = np.full(self.dim, -r)
            hi = np.full(self.dim, r)
            hi[0] = 0.0
            return lo, hi
        raise ValueError(f"{self.kind} is unbounded")

    def volume(self) -> float:
        p = self.params
        if self.kind == "box":
            return float(np.prod(p["hi"] - p["lo"]))
        if self.kind == "ball":
            return unit_ball_volume(self.dim) * p["radius"] ** self.dim
        if self.kind == "polygon":
            return abs(_signed_area(p["vertices"]))
        if self.kind == "graph_domain":
            return _graph_domain_volume(self.dim, p["c"], p["lam"], p["radius"])
        raise ValueError(f"{self.kind} is unbounded, no volume")

    def as_polygon(self, resolution: int = 512) -> np.ndarray:
        """Counter-clockwise vertex list of a bounded planar domain.

        Curved boundaries are replaced by inscribed polygons with
        ``resolution`` vertices.
        """
        if self.dim != 2:
            raise ValueError("polygonization is planar only")
        p = self.params
        if self.kind == "polygon":
            return p["vertices"].copy()
        if self.kind == "box":
            lo, hi = p["lo"], p["hi"]
            return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        if self.kind == "ball":
            t = 2 * np.pi * np.arange(resolution) / resolution
            return p["center"] + p["radius"] * np.column_stack([np.cos(t), np.sin(t)])
        if self.kind == "graph_domain":
            c, lam, r = p["c"], p["lam"], p["radius"]
            # boundary curve x1 = -c|x2|^lam meets the circle at |x2| = s
            s = _graph_circle_crossing(c, lam, r)
            x2 = np.linspace(-s, s, resolution // 2)
            curve = np.column_stack([-c * np.abs(x2) ** lam, x2])[::-1]
            a0 = np.arctan2(s, -c * s**lam)
            # the curve ends at the lower crossing; the arc returns to the upper one
            t = np.linspace(2 * np.pi - a0, a0, resolution // 2)[1:-1]
            arc = r * np.column_stack([np.cos(t), np.sin(t)])
            poly = np.vstack([curve, arc])
            return poly if _signed_area(poly) > 0 else poly[::-1].copy()
        raise ValueError(f"{self.kind} is unbounded")

    def to_json(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_json(cls, d: dict) -> "DomainDescriptor":
        kind = d["kind"]
        if kind == "full_space":
            return cls.full_space(int(d["dim"]))
        if kind == "halfspace":
            return cls.halfspace(d["normal"], d["offset"])
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "box":
            return cls.box(d["lo"], d["hi"])
        if kind == "polygon":
            return cls.polygon(d["vertices"])
        if kind == "graph_domain":
            return cls.graph_domain(int(d["dim"]), d["c"], d["lam"], d["radius"])
        raise ValueError(f"unknown domain kind {kind!r}")


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_is_convex(v: np.ndarray) -> bool:
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross >= -1e-12) or np.all(cross <= 1e-12))


def _in_polygon(pts: np.ndarray, v: np.ndarray, tol: float) -> np.ndarray:
    if _polygon_is_convex(v):
        a = v
        b = np.roll(v, -1, axis=0)
        e = b - a
        # ccw orientation: inside means left of every edge
        cross = e[None, :, 0] * (pts[:, None, 1] - a[None, :, 1]) - e[None, :, 1] * (
            pts[:, None, 0] - a[None, :, 0]
        )
        scale = np.linalg.norm(e, axis=1)[None, :]
        return np.all(cross >= -tol * scale - 1e-14 * scale, axis=1)
    from matplotlib.path import Path

    return Path(v).contains_points(pts, radius=tol)


def _graph_circle_crossing(c: float, lam: float, r: float) -> float:
    from scipy.optimize import brentq

    return brentq(lambda s: (c * s**lam) ** 2 + s**2 - r**2, 0.0, r)


def _graph_domain_volume(n: int, c: float, lam: float, r: float) -> float:
    # iterated integral in rho = |x'|: slab length from -sqrt(r^2 - rho^2) to -c rho^lam
    s = _graph_circle_crossing(c, lam, r)

    def slab(rho):
        return (np.sqrt(max(r * r - rho * rho, 0.0)) - c * rho**lam) * rho ** (n - 2)

    val, _ = integrate.quad(slab, 0.0, s, epsabs=1e-14, epsrel=1e-12, limit=200)
    return sphere_area(n - 1) * val if n > 1 else val


def gaussian_box_halfwidth(sigma: float, dim: int, eps: float) -> float:
    """Half-width L of the cube [-L, L]^dim holding all but eps of N(0, sigma^2 I)."""
    return float(sigma * math.sqrt(2.0) * special.erfcinv(eps / dim))


def gaussian_box_deficit(sigma: float, dim: int, half_width: float) -> float:
    tail = special.erfc(half_width / (sigma * math.sqrt(2.0)))
    return float(-np.expm1(dim * np.log1p(-tail)))
