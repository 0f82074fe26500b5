"""Damped Newton on the semi-discrete Kantorovich dual."""
from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .laguerre import LaguerreDiagram, laguerre_diagram
from .measures import DiscreteMeasure, SourceDensity

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _voronoi_weights(target: DiscreteMeasure, c_x, s: float) -> np.ndarray:
    """Weights whose diagram is the Voronoi diagram of z_i = (y_i - c_y)/s + c_x.

    With y_i = s (z_i - c_x) + c_y, the terms x.c_y - s x.c_x are shared by
    all i, so w_i = s|z_i|^2/2 makes cell_i the Voronoi cell of z_i.
    """
    c_y = target.masses @ target.points
    z = (target.points - c_y) / s + c_x
    return 0.5 * s * np.sum(z * z, axis=1)


def _rescaled_inits(source: SourceDensity, target: DiscreteMeasure):
    """Starting weights to try in order when w = 0 leaves cells empty.

    First the targets are moved onto the source by matching mean and spread,
    which suits concentrated densities; then they are squeezed into the
    middle of the integration box, which puts every site inside X.
    """
    x = source.sample(4096, seed=0)
    c_x = x.mean(axis=0)
    c_y = target.masses @ target.points
    rms_x = float(np.sqrt(np.mean(np.sum((x - c_x) ** 2, axis=1))))
    rms_y = float(np.sqrt(target.masses @ np.sum((target.points - c_y) ** 2, axis=1)))
    yield _voronoi_weights(target, c_x, max(rms_y, 1e-300) / max(rms_x, 1e-300))
    lo, hi = source.region.bounding_box()
    spread_y = float(np.abs(target.points - c_y).max())
    yield _voronoi_weights(target, 0.5 * (lo + hi), max(spread_y, 1e-300) / (0.45 * float((hi - lo).min())))


def solve_weights(source: SourceDensity, target: DiscreteMeasure, tol: float = 1e-9, max_iter: int = 100,
                  initial_weights=None):
    """Weights w (w_0 = 0) with max_i |mass(cell_i) - m_i| <= tol.

    Returns (weights, diagram, iterations). Raises ConvergenceError.
    """
    N = len(target)
    if N == 1:
        w = np.zeros(1)
        return w, laguerre_diagram(source, target, w), 0
    m = target.masses
    w = np.zeros(N) if initial_weights is None else np.asarray(initial_weights, float).copy()
    w = w - w[0]
    diag = laguerre_diagram(source, target, w)
    floor = 0.1 * m.min()
    if diag.masses.min() <= 0:
        log.info("empty cells at start; switching to the rescaled initialization")
        for w in _rescaled_inits(source, target):
            w = w - w[0]
            diag = laguerre_diagram(source, target, w)
            if diag.masses.min() > 0:
                break
        else:
            raise ConvergenceError("could not find a starting point with nonempty cells", diag.residual, 0)
    res = diag.residual
    it = 0
    if not np.isfinite(res):
        raise ConvergenceError("cell masses are not finite at the starting weights", res, 0)
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {res:.3e})", res, it)
        it += 1
        g = diag.masses - m
        step = _newton_step(diag, g)
        tau = 1.0
        accepted = False
        floor_k = min(floor, 0.5 * diag.masses.min())
        for _ in range(60):
            w_new = w + tau * step
            w_new = w_new - w_new[0]
            nd = laguerre_diagram(source, target, w_new)
            if np.isfinite(nd.residual) and nd.masses.min() >= floor_k and nd.residual <= (1 - 0.5 * tau) * res + 1e-15:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            w_new, nd = _coordinate_ascent(source, target, w, diag)
        w, diag = w_new, nd
        res = diag.residual
        log.debug("iteration %d: residual %.3e, step %.3g", it, res, tau)
    return w, diag, it


def _newton_step(diag: LaguerreDiagram, g: np.ndarray) -> np.ndarray:
    """Solve J dw = -g on the coordinates 1..N-1 (w_0 pinned)."""
    J = diag.jacobian.tocsr()
    Jr = J[1:, 1:]
    rhs = -g[1:]
    try:
        with np.errstate(all="ignore"):
            dw = splinalg.spsolve(Jr.tocsc(), rhs)
        if not np.all(np.isfinite(dw)):
            raise np.linalg.LinAlgError
    except (RuntimeError, np.linalg.LinAlgError):
        # near-singular: regularize towards the graph Laplacian's null space
        Jd = Jr.toarray() - 1e-12 * np.eye(Jr.shape[0])
        dw = np.linalg.lstsq(Jd, rhs, rcond=None)[0]
    return np.concatenate([[0.0], dw])


def _coordinate_ascent(source, target, w, diag, sweeps: int = 3):
    """Jacobi sweeps w_i += (mass_i - m_i)/|d mass_i/d w_i|; fallback only."""
    m = target.masses
    d = -diag.jacobian.diagonal()
    for _ in range(sweeps):
        scale = np.where(d > 0, d, max(float(d.max()), 1.0))
        step = (diag.masses - m) / scale
        step = 0.5 * (step - step[0])
        w_new = w - step
        nd = laguerre_diagram(source, target, w_new)
        tau = 1.0
        while nd.masses.min() <= 0 and tau > 1e-8:
            tau *= 0.5
            nd = laguerre_diagram(source, target, w - tau * step)
        w, diag = nd.weights, nd
        d = -diag.jacobian.diagonal()
    return w, diag


def transport_map(diagram: LaguerreDiagram, x):
    """(index, y_index) = argmax_i x.y_i - w_i with the lowest index on ties."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != diagram.dim:
        raise ValueError("dimension mismatch")
    if not np.all(diagram.source.domain.contains(X)):
        raise ValueError("x lies outside the source domain X")
    idx = diagram.potential.argmax(X)
    y = diagram.target.points[idx]
    if single:
        return int(idx[0]), y[0]
    return idx, y
