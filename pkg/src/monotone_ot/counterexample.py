"""The flat-segment convex potential u(x', x_n) = |x'|^gamma (1 - x_n^2)^(-alpha).

With gamma = 2 - 2/n the Hessian determinant does not depend on |x'|, the
gradient maps X = R^{n-1} x (-1, 1) onto ((R^{n-1} minus 0) x R) plus the
origin, and u vanishes on the segment {0} x [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex.measures import counter_rng


class NoPreimage:
    """Marker returned when a point is not in the gradient image."""

    def __init__(self, y, reason: str):
        self.y = np.asarray(y, dtype=float)
        self.reason = reason

    def __repr__(self):
        return f"NoPreimage({self.reason})"

    def __bool__(self):
        return False


class RootBracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class CounterexampleSpec:
    n: int = 3
    alpha: Optional[float] = None
    checked: bool = True

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("the construction needs n >= 3")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.5 * (self.gamma - 1.0))
        a = float(self.alpha)
        object.__setattr__(self, "alpha", a)
        if a <= 0:
            raise ValueError("alpha must be positive")
        if self.checked and not a < self.gamma - 1.0:
            raise ValueError(f"alpha must be < gamma - 1 = {self.gamma - 1.0!r}")

    @classmethod
    def unchecked(cls, n: int, alpha: float) -> "CounterexampleSpec":
        """Build without the alpha < gamma - 1 guard (for probing violations)."""
        return cls(n, alpha, checked=False)

    @property
    def gamma(self) -> float:
        return 2.0 - 2.0 / self.n

    def h(self, t):
        return (1.0 - t * t) ** (-self.alpha)

    def dh(self, t):
        return 2 * self.alpha * t / (1.0 - t * t) ** (self.alpha + 1)

    def d2h(self, t):
        a = self.alpha
        return (2 * a + 2 * a * t * t + 4 * a * a * t * t) / (1.0 - t * t) ** (a + 2)


def _split(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n:
        raise ValueError(f"expected a point in R^{spec.n}")
    return x[..., :-1], x[..., -1]


def _check_strip(t):
    if np.any(np.abs(t) >= 1):
        raise ValueError("need |x_n| < 1")


def hessian_det(spec: CounterexampleSpec, t):
    """det D^2 u; a function of x_n alone."""
    g, n = spec.gamma, spec.n
    h, dh, d2h = spec.h(t), spec.dh(t), spec.d2h(t)
    return g ** (n - 1) * h ** (n - 2) * ((g - 1) * h * d2h - g * dh * dh)


def gradient_many(spec: CounterexampleSpec, x) -> np.ndarray:
    xp, t = _split(spec, np.atleast_2d(x))
    _check_strip(t)
    g, a = spec.gamma, spec.alpha
    r = np.linalg.norm(xp, axis=1)
    one = 1.0 - t * t
    # |x'|^(gamma-2) x' written as |x'|^(gamma-1) x'/|x'| so x' = 0 is safe
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[:, None] > 0, xp / np.where(r > 0, r, 1.0)[:, None], 0.0)
    radial = g * r ** (g - 1) * one ** (-a)
    last = 2 * a * r**g * t / one ** (a + 1)
    return np.column_stack([radial[:, None] * unit, last])


def value_many(spec: CounterexampleSpec, x) -> np.ndarray:
    xp, t = _split(spec, np.atleast_2d(x))
    _check_strip(t)
    return np.linalg.norm(xp, axis=1) ** spec.gamma * spec.h(t)


def ce_evaluate(spec: CounterexampleSpec, x):
    """(value, gradient, hessian_det) at a single point x = (x', x_n)."""
    x = np.asarray(x, dtype=float).ravel()
    val = float(value_many(spec, x[None, :])[0])
    grad = gradient_many(spec, x[None, :])[0]
    return val, grad, float(hessian_det(spec, x[-1]))


def log_induced_density_many(spec: CounterexampleSpec, x) -> np.ndarray:
    """log F with F = det D^2u * G(grad u), G the standard Gaussian; -inf off X."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = x[:, -1]
    out = np.full(len(x), -np.inf)
    ok = np.abs(t) < 1
    if ok.any():
        grad = gradient_many(spec, x[ok])
        logc = -0.5 * spec.n * math.log(2 * math.pi)
        out[ok] = np.log(hessian_det(spec, t[ok])) + logc - 0.5 * np.sum(grad * grad, axis=1)
    return out


def induced_density_many(spec: CounterexampleSpec, x) -> np.ndarray:
    return np.exp(log_induced_density_many(spec, x))


def ce_induced_density(spec: CounterexampleSpec, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    _check_strip(x[-1:])
    return float(induced_density_many(spec, x[None, :])[0])


def _xn_from_ratio(spec: CounterexampleSpec, target_log: float, max_level: int = 16) -> float:
    """Solve log phi(s) = target_log for s in (0, 1), where
    phi(s) = gamma^(gamma/(gamma-1)) (1 - s^2)^((gamma-alpha-1)/(gamma-1)) / (2 alpha s).
    """
    g, a = spec.gamma, spec.alpha
    k1 = g / (g - 1) * math.log(g) - math.log(2 * a)
    p = (g - a - 1) / (g - 1)

    def f(s):
        s = np.asarray(s, dtype=float)
        return k1 + p * (np.log1p(-s) + np.log1p(s)) - np.log(s) - target_log

    # geometric points hugging both ends reach extreme targets; beyond them
    # the root is not representable next to 0 or 1 in double precision
    tails = np.concatenate([2.0 ** -np.arange(1000, 1, -1.0), 1 - 2.0 ** -np.arange(2, 54.0)])
    for level in range(1, max_level + 1):
        m = 2**level
        grid = np.union1d(tails, np.arange(1, m) / m)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = f(grid)
        hit = np.flatnonzero(vals == 0)
        if hit.size:
            return float(grid[hit[0]])
        change = np.flatnonzero(vals[:-1] * vals[1:] < 0)
        if change.size:
            j = change[0]
            return _bisect(lambda t: float(f(t)), float(grid[j]), float(grid[j + 1]))
    raise RootBracketError(f"no sign change found for target {target_log!r} "
                           "(root not representable in (0, 1) at double precision)")


def _bisect(f, lo, hi):
    from scipy.optimize import brentq

    return brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def ce_invert_gradient(spec: CounterexampleSpec, y):
    """A point x with grad u(x) = y, or NoPreimage."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.n:
        raise ValueError(f"expected a point in R^{spec.n}")
    yp, yn = y[:-1], float(y[-1])
    g, a = spec.gamma, spec.alpha
    rp = float(np.linalg.norm(yp))
    if rp == 0.0:
        if yn == 0.0:
            return np.zeros(spec.n)
        return NoPreimage(y, "y' = 0 with y_n != 0 is outside the gradient image")
    if yn == 0.0:
        t = 0.0
    else:
        target = g / (g - 1) * math.log(rp) - math.log(abs(yn))
        t = math.copysign(_xn_from_ratio(spec, target), yn)
    # |y'| = gamma r^(gamma-1) h(t)
    one = (1 - abs(t)) * (1 + abs(t))
    r = (rp / g * one**a) ** (1 / (g - 1))
    return np.concatenate([r * yp / rp, [t]])


def invert_gradient_many(spec: CounterexampleSpec, y, iters: int = 64):
    """Vectorized inverse of grad u; returns (x, ok) with ok False where no preimage exists.

    For alpha < gamma - 1 the ratio function is strictly decreasing in |x_n|,
    so plain bisection in the logit variable s = 1/(1 + e^-v) brackets the
    unique root, including roots too close to 1 to be represented as x_n.
    Those come back as x_n = +-1.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    g, a = spec.gamma, spec.alpha
    p = (g - a - 1) / (g - 1)
    if p <= 0:
        raise ValueError("vectorized inversion needs alpha < gamma - 1")
    k1 = g / (g - 1) * math.log(g) - math.log(2 * a)
    yp, yn = y[:, :-1], y[:, -1]
    rp = np.linalg.norm(yp, axis=1)
    ok = rp > 0
    with np.errstate(divide="ignore"):
        target = g / (g - 1) * np.log(rp) - np.log(np.abs(yn))
    lo = np.full(len(y), -745.0)
    hi = np.full(len(y), 745.0)

    def f(v):
        log_s = -np.logaddexp(0.0, -v)
        log_1ms = -np.logaddexp(0.0, v)
        return k1 + p * (log_1ms + np.log1p(np.exp(log_s))) - log_s - target

    inner = ok & (yn != 0)
    with np.errstate(invalid="ignore"):
        good = inner & (f(lo) > 0) & (f(hi) < 0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        with np.errstate(invalid="ignore"):
            pos = f(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    v = 0.5 * (lo + hi)
    v = np.where(inner, v, -np.inf)
    s = np.where(inner, 1.0 / (1.0 + np.exp(-v)), 0.0)
    log_one = np.where(inner, -np.logaddexp(0.0, v) + np.log1p(s), 0.0)
    with np.errstate(divide="ignore"):
        r = np.exp((np.log(rp) - math.log(g) + a * log_one) / (g - 1))
    unit = np.where(ok[:, None], yp / np.where(ok, rp, 1.0)[:, None], 0.0)
    x = np.column_stack([r[:, None] * unit, np.sign(yn) * s])
    ok = ok & (good | (yn == 0))
    x[~ok] = np.nan
    return x, ok


def ce_convexity_certificate(spec: CounterexampleSpec, grid_resolution: int = 2001, fd_points: int = 200,
                             seed: int = 0, step: float = 1e-4):
    """Scan (gamma-1)(1+t^2) > 2 alpha t^2 on (-1, 1) and the FD Hessian spectrum."""
    g, a = spec.gamma, spec.alpha
    t = np.linspace(-1, 1, grid_resolution + 2)[1:-1]
    margin = (g - 1) * (1 + t * t) - 2 * a * t * t
    positive = bool(np.all(margin > 0))
    worst_t = float(t[np.argmin(margin)])

    rng = counter_rng(seed)
    xs = np.column_stack([rng.uniform(-2, 2, (fd_points, spec.n - 1)), rng.uniform(-0.95, 0.95, fd_points)])
    r = np.linalg.norm(xs[:, :-1], axis=1)
    xs = xs[r > 0.25]
    min_eig = np.inf
    for x in xs:
        hmat = fd_hessian(spec, x, step)
        lam = np.linalg.eigvalsh(0.5 * (hmat + hmat.T))
        # relative to the Hessian scale, so steep regions compare fairly
        min_eig = min(min_eig, float(lam[0] / max(1.0, np.abs(lam).max())))
    return {
        "positive_det": positive,
        "min_margin": float(margin.min()),
        "worst_t": worst_t,
        "min_eigenvalue_scan": float(min_eig),
    }


def fd_gradient(spec: CounterexampleSpec, x, step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.eye(spec.n) * step
    return (value_many(spec, x + e) - value_many(spec, x - e)) / (2 * step)


def fd_hessian(spec: CounterexampleSpec, x, step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.eye(spec.n) * step
    gp = gradient_many(spec, x + e)
    gm = gradient_many(spec, x - e)
    return (gp - gm).T / (2 * step)


def ce_degeneracy_scan(spec: CounterexampleSpec, radius: float, approach_sequence):
    """F along points approaching the boundary of X (away from the poles).

    Rows carry log F as well, since F underflows long before the end of a
    typical sequence.
    """
    rows = []
    for k, x in approach_sequence:
        x = np.asarray(x, dtype=float).ravel()
        if abs(x[-1]) >= 1:
            raise ValueError("sequence leaves X")
        if np.linalg.norm(x[:-1]) == 0:
            raise ValueError("sequence must stay away from the exceptional points")
        if np.linalg.norm(x) > radius:
            raise ValueError("sequence leaves the ball B_R")
        logf = float(log_induced_density_many(spec, x[None, :])[0])
        grad = gradient_many(spec, x[None, :])[0]
        rows.append({"k": k, "x": x.tolist(), "F": math.exp(logf), "log_F": logf,
                     "gradient_norm": float(np.linalg.norm(grad))})
    return rows


def default_approach_sequence(spec: CounterexampleSpec, kmax: int = 6):
    xp = np.zeros(spec.n - 1)
    xp[0] = 1.0
    return [(k, np.concatenate([xp, [1 - 10.0**-k]])) for k in range(1, kmax + 1)]


def min_density_on_compact(spec: CounterexampleSpec, r_range=(0.5, 2.0), t_max: float = 0.9, resolution: int = 41):
    """Grid minimum of F on {|x'| in r_range, |x_n| <= t_max}."""
    rs = np.linspace(r_range[0], r_range[1], resolution)
    ts = np.linspace(-t_max, t_max, resolution)
    rr, tt = np.meshgrid(rs, ts, indexing="ij")
    x = np.zeros((rr.size, spec.n))
    x[:, 0] = rr.ravel()
    x[:, -1] = tt.ravel()
    return float(induced_density_many(spec, x).min())


def ce_report(spec: CounterexampleSpec, seed: int = 0, n_points: int = 1000, fd_points: int = 200, kmax: int = 6,
              grad_rtol: float = 1e-6, det_rtol: float = 1e-4, roundtrip_tol: float = 1e-8):
    """Certificate, finite-difference checks, inversion round trip and degeneracy table."""
    rng = counter_rng(seed)
    g, a, n = spec.gamma, spec.alpha, spec.n

    def draw(m):
        xp = rng.uniform(-2, 2, (4 * m, n - 1))
        xp = xp[np.linalg.norm(xp, axis=1) > 0.25][:m]
        return np.column_stack([xp, rng.uniform(-0.9, 0.9, len(xp))])

    xs = draw(fd_points)
    grad = gradient_many(spec, xs)
    fd = np.array([fd_gradient(spec, x) for x in xs])
    grad_err = float((np.linalg.norm(grad - fd, axis=1) / np.maximum(1.0, np.linalg.norm(grad, axis=1))).max())
    det_fd = np.array([np.linalg.det(fd_hessian(spec, x)) for x in xs])
    det_an = hessian_det(spec, xs[:, -1])
    det_err = float((np.abs(det_fd - det_an) / np.abs(det_an)).max())
    det0 = float(hessian_det(spec, 0.0))
    det0_expected = 2 * a * (g - 1) * g**2 if n == 3 else None

    xr = draw(n_points)
    back = np.array([ce_invert_gradient(spec, y) for y in gradient_many(spec, xr)])
    roundtrip = float(np.abs(back - xr).max())
    pole = np.zeros(n)
    pole[-1] = 1.0
    no_pre = isinstance(ce_invert_gradient(spec, pole), NoPreimage)

    cert = ce_convexity_certificate(spec, seed=seed)
    rows = ce_degeneracy_scan(spec, 2.0, default_approach_sequence(spec, kmax))
    logf = np.array([r["log_F"] for r in rows])
    decreasing = bool(np.all(np.diff(logf) < 0))
    ratio_log = float(logf[-1] - logf[0])
    floor = min_density_on_compact(spec)
    checks = {
        "positive_det": cert["positive_det"],
        "gradient_fd": grad_err <= grad_rtol,
        "hessian_det_fd": det_err <= det_rtol,
        "det_at_equator": True if det0_expected is None else abs(det0 - det0_expected) <= 1e-12 * abs(det0_expected),
        "roundtrip": roundtrip <= roundtrip_tol,
        "no_preimage_at_pole": no_pre,
        "degeneracy_decreasing": decreasing,
        "degeneracy_ratio": ratio_log <= math.log(1e-3),
        "positive_on_compact": floor > 0,
    }
    return {
        "spec": {"n": n, "alpha": a, "gamma": g},
        "certificate": cert,
        "gradient_fd_rel_error": grad_err,
        "hessian_det_rel_error": det_err,
        "det_at_equator": det0,
        "det_at_equator_expected": det0_expected,
        "roundtrip_max_error": roundtrip,
        "roundtrip_points": int(len(xr)),
        "no_preimage_at_pole": no_pre,
        "degeneracy": rows,
        "log_F_ratio": ratio_log,
        "min_F_on_compact": floor,
        "checks": checks,
        "passed": all(checks.values()),
    }
