"""Volume-scaling exponents of the thin sets X_theta and Y_theta.

Both estimators draw one point cloud and test membership for every theta,
so the estimated volumes are monotone in theta for every seed. Fits are
ordinary least squares of log volume on log theta; the confidence interval
comes from independent batches of the same cloud.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from ..convex.domains import DomainDescriptor, sphere_area
from ..convex.measures import counter_rng

REL_SE_MAX = 0.01
N_BATCHES = 20
CHUNK = 1_000_000


class InsufficientSamplesError(ValueError):
    """Fewer than two theta values reach the relative-error target."""


def lambda_threshold(n: int) -> float:
    """Largest admissible boundary exponent 2(n-1)/(n-2)."""
    if n <= 2:
        raise ValueError("the boundary exponent threshold needs n >= 3; in the plane it does not apply")
    return 2.0 * (n - 1) / (n - 2)


def classify_lambda(n: int, lam: float, rtol: float = 1e-12) -> str:
    """admissible (lambda below threshold), borderline (equal) or inadmissible."""
    t = lambda_threshold(n)
    if abs(lam - t) <= rtol * t:
        return "borderline"
    return "admissible" if lam < t else "inadmissible"


def theta_grid(theta_max: float = 0.1, theta_min: float = 1e-3, ratio: float = 2.0) -> np.ndarray:
    """theta_max / ratio^k for every k that stays at or above theta_min."""
    k = int(math.floor(math.log(theta_max / theta_min) / math.log(ratio) + 1e-12))
    return theta_max / ratio ** np.arange(k, -1, -1.0)


@dataclass(frozen=True)
class WedgeSpec:
    """X_theta = {-theta |x'| <= x_1 <= -c |x'|^lam} in R^n."""

    n: int
    lam: float
    c: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n >= 2 required")
        if not self.lam > 1:
            raise ValueError("lambda must exceed 1")
        if not self.c > 0:
            raise ValueError("c must be positive")

    @property
    def exponent(self) -> float:
        return (self.n - 1 + self.lam) / (self.lam - 1)

    def radius(self, theta):
        """|x'| beyond which X_theta is empty."""
        return (np.asarray(theta, dtype=float) / self.c) ** (1.0 / (self.lam - 1))

    def contains(self, x, theta: float) -> np.ndarray:
        x = np.atleast_2d(x)
        r = np.linalg.norm(x[:, 1:], axis=1)
        return (x[:, 0] >= -theta * r) & (x[:, 0] <= -self.c * r ** self.lam)

    def to_json(self):
        return {"n": self.n, "lambda": self.lam, "c": self.c}


def wedge_volume_exact(spec: WedgeSpec, theta) -> np.ndarray:
    """Radial integral of theta r - c r^lam over |x'| <= rho(theta)."""
    n, lam, c = spec.n, spec.lam, spec.c
    rho = spec.radius(theta)
    S = sphere_area(n - 1)
    return S * (np.asarray(theta) * rho ** n / n - c * rho ** (n - 1 + lam) / (n - 1 + lam))


def cone_volume_exact(n: int, theta, radius: float = 2.0) -> np.ndarray:
    """|{y_1 > 0, |y'| <= theta y_1} cap B_radius| in R^n."""
    phi = np.arctan(np.asarray(theta, dtype=float))
    # int_0^phi sin^{n-2} = B(sin^2 phi; (n-1)/2, 1/2) / 2 for phi <= pi/2
    a, b = 0.5 * (n - 1), 0.5
    ang = 0.5 * special.betainc(a, b, np.sin(phi) ** 2) * special.beta(a, b)
    return radius ** n / n * sphere_area(n - 1) * ang


@dataclass
class ScalingReport:
    kind: str
    thetas: np.ndarray
    volumes: np.ndarray
    stderr: np.ndarray
    used: np.ndarray
    exponent: float
    ci: tuple
    theoretical: float
    verdict: str
    n_samples: int
    seed: int
    exact: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    @property
    def rel_se(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.volumes > 0, self.stderr / self.volumes, np.inf)

    def ci_contains(self, value: float) -> bool:
        return bool(self.ci[0] <= value <= self.ci[1])

    def rows(self):
        """Long-format table: one row per theta."""
        out = []
        for k, t in enumerate(self.thetas):
            row = {"theta": float(t), "volume": float(self.volumes[k]), "stderr": float(self.stderr[k]),
                   "used_in_fit": bool(self.used[k])}
            if self.exact is not None:
                row["exact"] = float(self.exact[k])
            out.append(row)
        return out

    def to_json(self):
        return {
            "kind": self.kind,
            "params": self.params,
            "rows": self.rows(),
            "exponent": self.exponent,
            "ci": [float(self.ci[0]), float(self.ci[1])],
            "theoretical_exponent": self.theoretical,
            "verdict": self.verdict,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def _slope(log_t, log_v):
    return float(np.polyfit(log_t, log_v, 1)[0])


def _fit(thetas, sums, sums2, batch_sums, n_samples, level=0.95):
    """Volumes, standard errors, fit mask, exponent and its batch CI."""
    vol = sums / n_samples
    var = np.maximum(sums2 / n_samples - vol ** 2, 0.0)
    se = np.sqrt(var / n_samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(vol > 0, se / vol, np.inf)
    used = rel <= REL_SE_MAX
    if used.sum() < 2:
        raise InsufficientSamplesError(
            f"only {int(used.sum())} theta values reach relative error {REL_SE_MAX:g}; increase samples")
    lt = np.log(thetas[used])
    slope = _slope(lt, np.log(vol[used]))
    per_batch = batch_sums[:, used] * (batch_sums.shape[0] / n_samples)
    ok = np.all(per_batch > 0, axis=1)
    slopes = np.array([_slope(lt, np.log(b)) for b in per_batch[ok]])
    if len(slopes) < 2:
        raise InsufficientSamplesError("batches too small for an exponent interval; increase samples")
    half = stats.t.ppf(0.5 + level / 2, len(slopes) - 1) * slopes.std(ddof=1) / math.sqrt(len(slopes))
    return vol, se, used, slope, (slope - half, slope + half)


def _accumulate(draw, member, thetas, n_samples, seed):
    """Sum weights (and squares) of points inside each theta set, per batch."""
    rng = counter_rng(seed)
    B = N_BATCHES
    sums = np.zeros(len(thetas))
    sums2 = np.zeros(len(thetas))
    batch = np.zeros((B, len(thetas)))
    per = n_samples // B
    if per < 1:
        raise InsufficientSamplesError(f"need at least {B} samples")
    for b in range(B):
        left = per if b < B - 1 else n_samples - per * (B - 1)
        while left > 0:
            m = min(CHUNK, left)
            pts, wts = draw(rng, m)
            for k, t in enumerate(thetas):
                wk = np.where(member(pts, t), wts, 0.0)
                s = wk.sum()
                sums[k] += s
                sums2[k] += (wk * wk).sum()
                batch[b, k] += s
            left -= m
    return sums, sums2, batch


def wedge_volume_scaling(spec: WedgeSpec, thetas=None, n_samples: int = 10_000_000, seed: int = 0,
                         fit_tol: float = 0.15) -> ScalingReport:
    """Monte-Carlo |X_theta| on a theta grid, with the exponent fitted in log-log."""
    thetas = theta_grid() if thetas is None else np.sort(np.asarray(thetas, dtype=float))
    if np.any(thetas <= 0) or np.any(thetas >= 1):
        raise ValueError("theta values must lie in (0, 1)")
    if math.log10(thetas[-1] / thetas[0]) < 1.5 - 1e-12:
        raise ValueError("theta grid must span at least 1.5 decades")
    n, lam, c = spec.n, spec.lam, spec.c
    # Coordinates (r = |x'|, s = -x_1); X_theta is c r^lam <= s <= theta r, r <= rho.
    # log r and log s are drawn with exponential tails below the largest set,
    # rates chosen so the smallest theta keeps a fixed share of the points.
    u_max = math.log(spec.radius(thetas[-1]))
    v_max = math.log(thetas[-1]) + u_max
    span = math.log(thetas[-1] / thetas[0])
    du = span / (lam - 1)
    a = min(n - 1.0, 1.0 / du)
    b = min(1.0, 1.0 / (du + span))
    S = sphere_area(n - 1)

    def draw(rng, m):
        u = u_max - rng.exponential(1.0 / a, m)
        v = v_max - rng.exponential(1.0 / b, m)
        # weight = Jacobian S r^{n-2} * r * s over the proposal density
        w = S / (a * b) * np.exp((n - 1 - a) * (u - u_max) + (1 - b) * (v - v_max) + (n - 1) * u_max + v_max)
        return (u, v), w

    def member(pts, t):
        u, v = pts
        return (v <= math.log(t) + u) & (v >= math.log(c) + lam * u)

    sums, sums2, batch = _accumulate(draw, member, thetas, n_samples, seed)
    vol, se, used, slope, ci = _fit(thetas, sums, sums2, batch, n_samples)
    thr = n - 1.0
    # decay must beat theta^{n-1}: the whole interval above n - 1
    verdict = "ADMISSIBLE" if ci[0] > thr else "BORDERLINE-OR-WORSE"
    params = {**spec.to_json(), "lambda_class": classify_lambda(n, lam) if n >= 3 else "unrestricted",
              "fit_tolerance": fit_tol, "consistent": bool(abs(slope - spec.exponent) <= fit_tol)}
    return ScalingReport("wedge", thetas, vol, se, used, slope, ci, spec.exponent, verdict, n_samples, seed,
                         wedge_volume_exact(spec, thetas), params)


def _sphere_dirs(rng, m, d):
    if d == 1:
        return np.where(rng.random(m) < 0.5, -1.0, 1.0)[:, None]
    g = rng.standard_normal((m, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cone_volume_scaling(Y: DomainDescriptor, thetas=None, n_samples: int = 2_000_000, seed: int = 0,
                        radius: float = 2.0, fit_tol: float = 0.1) -> ScalingReport:
    """|Y_theta cap B_radius| with Y_theta = {y_1 > 0, |y'| <= theta y_1} cap Y."""
    n = Y.dim
    if n < 2:
        raise ValueError("n >= 2 required")
    if not Y.is_convex:
        raise ValueError("Y must be convex")
    e1 = np.zeros(n)
    e1[0] = 1.0
    if not (Y.contains(np.zeros((1, n)), tol=1e-9)[0] and Y.contains(e1[None, :], tol=1e-9)[0]):
        raise ValueError("the closure of Y must contain 0 and e_1")
    thetas = theta_grid() if thetas is None else np.sort(np.asarray(thetas, dtype=float))
    if np.any(thetas <= 0) or np.any(thetas > 1):
        raise ValueError("theta values must lie in (0, 1]")
    t_max = float(thetas[-1])
    # y = (t, t q w): t^{n} uniform on (0, R^n), |w| = 1, q = t_max U^{1/k}
    k = min(n - 1.0, 1.0 / math.log(thetas[-1] / thetas[0]) * 2.0) if len(thetas) > 1 else n - 1.0
    S = sphere_area(n - 1)

    def draw(rng, m):
        t = radius * rng.random(m) ** (1.0 / n)
        q = t_max * rng.random(m) ** (1.0 / k)
        y = np.empty((m, n))
        y[:, 0] = t
        y[:, 1:] = (t * q)[:, None] * _sphere_dirs(rng, m, n - 1)
        # dy = t^{n-1} q^{n-2} dt dq dw
        w = S * radius ** n / n * (t_max ** k / k) * q ** (n - 1 - k)
        return (y, q), w

    def member(pts, theta):
        y, q = pts
        return (q <= theta) & (np.einsum("ij,ij->i", y, y) <= radius * radius) & Y.contains(y)

    sums, sums2, batch = _accumulate(draw, member, thetas, n_samples, seed)
    vol, se, used, slope, ci = _fit(thetas, sums, sums2, batch, n_samples)
    ratio = vol / thetas ** (n - 1)
    ratio_lo = (vol - 3 * se) / thetas ** (n - 1)
    bounded_below = bool(np.all(ratio_lo[used] > 0) and ci[0] <= n - 1 + fit_tol)
    verdict = "LOWER-BOUND-HOLDS" if bounded_below else "LOWER-BOUND-FAILS"
    exact = cone_volume_exact(n, thetas, radius) if Y.kind == "full_space" else None
    params = {"Y": Y.to_json(), "radius": radius, "fit_tolerance": fit_tol,
              "ratio_min": float(ratio[used].min()), "ratio_max": float(ratio[used].max())}
    return ScalingReport("cone", thetas, vol, se, used, slope, ci, float(n - 1), verdict, n_samples, seed,
                         exact, params)
