"""Monge-Ampere measure of max-form potentials and related checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domains import DomainDescriptor
from .potentials import PiecewiseAffinePotential, legendre_conjugate, POS_INF

MC_SAMPLES = 200_000


def counter_rng(seed: int) -> np.random.Generator:
    """Counter-based generator: identical streams for identical seeds."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _ma_mass(u: PiecewiseAffinePotential, contains: Callable, seed: int, n_samples: int) -> float:
    hull = u.lifted_hull
    if not hull.full_dim or len(hull.simplices) == 0:
        return 0.0
    if u.dim <= 2:
        # exact: each lower facet is the subdifferential of one complex vertex
        inside = contains(hull.gradients)
        return float(hull.simplex_volumes[inside].sum())
    # p lies in du(A) iff the conjugate's subdifferential at p, the complex
    # vertex of the facet above p, meets A
    lo, hi = u.slopes.min(axis=0), u.slopes.max(axis=0)
    box_vol = float(np.prod(hi - lo))
    rng = counter_rng(seed)
    hits = 0
    chunk = 100_000
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        p = lo + (hi - lo) * rng.random((k, u.dim))
        ok = hull.in_hull(p)
        if ok.any():
            facet = hull.active_facet(p[ok])
            hits += int(np.count_nonzero(contains(hull.gradients[facet])))
        done += k
    return box_vol * hits / n_samples


def ma_measure(u: PiecewiseAffinePotential, region: DomainDescriptor, seed: int = 0, n_samples: int = MC_SAMPLES) -> float:
    """Lebesgue measure of the subdifferential image of ``region``.

    Exact for n <= 2, Monte Carlo over conv{slopes} for n = 3.
    """
    if region.dim != u.dim:
        raise ValueError("region and potential dimensions differ")
    if region.kind == "full_space":
        return u.subdifferential_image().volume()
    if not region.is_bounded:
        raise ValueError(f"Monge-Ampere mass of an unbounded {region.kind} region is not supported")
    return _ma_mass(u, region.contains, seed, n_samples)


def ma_measure_of_set(u: PiecewiseAffinePotential, contains: Callable, seed: int = 0, n_samples: int = MC_SAMPLES) -> float:
    """Same as :func:`ma_measure` for a region given by a membership predicate on rows."""
    return _ma_mass(u, contains, seed, n_samples)


def monotonicity_check(gradient_samples, block: int = 256) -> float:
    """Largest violation of (p_x - p_z).(x - z) >= 0 over all pairs, clipped at 0."""
    xs = np.array([np.atleast_1d(np.asarray(s[0], float)) for s in gradient_samples])
    ps = np.array([np.atleast_1d(np.asarray(s[1], float)) for s in gradient_samples])
    if xs.shape != ps.shape:
        raise ValueError("points and gradients must share one dimension")
    worst = 0.0
    # difference form, so p = x gives sums of squares with no cancellation
    for s in range(0, len(xs), block):
        dx = xs[s : s + block, None, :] - xs[None, :, :]
        dp = ps[s : s + block, None, :] - ps[None, :, :]
        worst = max(worst, float(-np.einsum("ijk,ijk->ij", dp, dx).min()))
    return max(worst, 0.0)


@dataclass(frozen=True)
class SectionReport:
    section_nonempty: bool
    interior_defect: float
    ma_mass_of_section: float
    minimizer: np.ndarray


def section_min_principle_check(u: PiecewiseAffinePotential, affine, seed: int = 0) -> SectionReport:
    """Section S = {u < l} of u below l(x) = a.x + c.

    On a nonempty bounded section u - l vanishes on the boundary, so the
    interior defect is -min(u - l) = u*(a) + c. The Monge-Ampere mass is
    taken over the closure {u <= l}.
    """
    a = np.atleast_1d(np.asarray(affine[0], dtype=float))
    c = float(affine[1])
    if a.size != u.dim:
        raise ValueError("affine slope dimension mismatch")
    if not _strictly_inside_hull(u.slopes, a):
        raise ValueError("section is unbounded: the affine slope is not interior to the slope hull")
    ustar = legendre_conjugate(u)
    val = ustar.evaluate(a)
    if val is POS_INF:
        raise ValueError("section is unbounded")
    min_g = -val - c
    if min_g >= 0:
        return SectionReport(False, 0.0, 0.0, np.full(u.dim, np.nan))
    g = PiecewiseAffinePotential(u.slopes - a, u.intercepts - c)
    # the minimizer is the complex vertex of the facet above a
    facet = ustar.hull.active_facet(a[None, :])[0] if ustar.hull.full_dim else None
    xmin = ustar.hull.gradients[facet] if facet is not None else np.full(u.dim, np.nan)
    scale = max(1.0, abs(min_g))

    def closed_section(x):
        return g.evaluate(np.atleast_2d(x)) <= 1e-12 * scale

    mass = ma_measure_of_set(u, closed_section, seed=seed)
    return SectionReport(True, float(-min_g), float(mass), xmin)


def _strictly_inside_hull(points: np.ndarray, a: np.ndarray) -> bool:
    """a in the interior of conv(points): LP maximizing the margin to the hull."""
    from scipy.optimize import linprog

    m, n = points.shape
    if n == 1:
        return bool(points.min() < a[0] < points.max())
    # maximize t s.t. a = sum l_i p_i, l_i >= t, sum l_i = 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_eq = np.hstack([np.vstack([points.T, np.ones((1, m))]), np.zeros((n + 1, 1))])
    a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(m), A_eq=a_eq, b_eq=np.append(a, 1.0),
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0 or -res.fun <= 1e-12:
        return False
    # positive weights on all points do not certify interiority when the hull is flat
    from .hull import _affine_rank

    return _affine_rank(points) == n
