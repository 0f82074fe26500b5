"""Gauss rules on segments, triangles and tetrahedra (collapsed tensor products)."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre01(k: int):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(k: int):
    """Barycentric-free rule on the reference triangle {s, t >= 0, s + t <= 1}.

    Returns (points (q, 2), weights (q,)) with weights summing to 1/2.
    """
    a, wa = gauss_legendre01(k)
    s = a[:, None] * np.ones(k)[None, :]
    t = (1 - a)[:, None] * a[None, :]
    w = (wa * (1 - a))[:, None] * wa[None, :]
    return np.column_stack([s.ravel(), t.ravel()]), w.ravel()


@lru_cache(maxsize=None)
def tet_rule(k: int):
    """Rule on the reference tetrahedron; weights sum to 1/6."""
    a, wa = gauss_legendre01(k)
    r1, r2, r3 = np.meshgrid(a, a, a, indexing="ij")
    w1, w2, w3 = np.meshgrid(wa, wa, wa, indexing="ij")
    x = r1
    y = (1 - r1) * r2
    z = (1 - r1) * (1 - r2) * r3
    w = w1 * w2 * w3 * (1 - r1) ** 2 * (1 - r2)
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()]), w.ravel()


def integrate_triangles(f, tri: np.ndarray, k: int = 6) -> np.ndarray:
    """Integrals of f over triangles tri (m, 3, d) embedded in R^d, d in {2, 3}."""
    if len(tri) == 0:
        return np.zeros(0)
    ref, w = triangle_rule(k)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = b - a, c - a
    if tri.shape[2] == 2:
        jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    else:
        jac = np.linalg.norm(np.cross(e1, e2), axis=1)
    pts = a[:, None, :] + ref[None, :, :1] * e1[:, None, :] + ref[None, :, 1:] * e2[:, None, :]
    vals = f(pts.reshape(-1, tri.shape[2])).reshape(len(tri), -1)
    return jac * (vals @ w)


def integrate_tets(f, tets: np.ndarray, k: int = 3) -> np.ndarray:
    """Integrals of f over tetrahedra tets (m, 4, 3)."""
    if len(tets) == 0:
        return np.zeros(0)
    ref, w = tet_rule(k)
    a = tets[:, 0]
    e = tets[:, 1:] - a[:, None, :]
    jac = np.abs(np.linalg.det(e))
    pts = a[:, None, :] + np.einsum("qk,mkd->mqd", ref, e)
    vals = f(pts.reshape(-1, 3)).reshape(len(tets), -1)
    return jac * (vals @ w)


def integrate_segments(f, a: np.ndarray, b: np.ndarray, k: int = 8) -> np.ndarray:
    """Integrals of f along segments [a_i, b_i] (arc length)."""
    if len(a) == 0:
        return np.zeros(0)
    t, w = gauss_legendre01(k)
    d = b - a
    pts = a[:, None, :] + t[None, :, None] * d[:, None, :]
    vals = f(pts.reshape(-1, a.shape[1])).reshape(len(a), -1)
    return np.linalg.norm(d, axis=1) * (vals @ w)
