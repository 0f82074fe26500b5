"""One runner per subcommand: compute, then describe tables, plots and failed checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..convex import DomainDescriptor, PiecewiseAffinePotential, counter_rng, legendre_conjugate
from ..counterexample import CounterexampleSpec, ce_report
from ..diagnostics import (
    WedgeSpec,
    classify_lambda,
    cone_volume_scaling,
    lambda_threshold,
    strict_convexity_probe,
    theta_grid,
    wedge_volume_scaling,
)
from ..transport import (
    TransportProblem,
    binomial_bound,
    pushforward_counts,
    solve_weights,
    verify_alexandrov,
)
from .config import ConfigError, ExperimentConfig, load_config_file


@dataclass
class RunResult:
    report: dict
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def _problem(p: dict) -> TransportProblem:
    spec = p.get("problem")
    if spec is not None:
        d = load_config_file(spec) if isinstance(spec, str) else spec
        try:
            return TransportProblem.from_json(d)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"params.problem: malformed problem ({e})") from None
    return TransportProblem.from_presets(p["source"], p["target"], p["n"], seed=p["seed"], tol=p["tol"],
                                         max_iter=p["max_iter"])


def _solve(p):
    problem = _problem(p)
    source = problem.build_source()
    target = problem.build_target()
    w, diagram, it = solve_weights(source, target, tol=problem.tol, max_iter=problem.max_iter)
    return problem, source, target, diagram, it


def _solve_report(problem, target, diagram, it):
    R = float(np.linalg.norm(target.points, axis=1).max())
    lip = diagram.potential.lipschitz_constant
    return {
        "problem": problem.to_json(),
        "n_targets": len(target),
        "target_meta": target.meta,
        "iterations": it,
        "residual": diagram.residual,
        "tiling_error": diagram.tiling_error,
        "lipschitz_constant": lip,
        "target_radius": R,
        "weights": diagram.weights.tolist(),
        "masses": diagram.masses.tolist(),
        "target_masses": target.masses.tolist(),
        "points": target.points.tolist(),
    }


def _cell_rows(target, diagram):
    rows = []
    for i in range(diagram.N):
        row = {"index": i}
        for k, c in enumerate(target.points[i]):
            row[f"y{k}"] = float(c)
        row.update({"target_mass": float(target.masses[i]), "cell_mass": float(diagram.masses[i]),
                    "weight": float(diagram.weights[i])})
        rows.append(row)
    return rows


def _polygon_rows(diagram):
    rows = []
    for i, c in enumerate(diagram.cells):
        if c is None or c.kind != "polygon":
            continue
        for k, (x, y) in enumerate(c.data[0]):
            rows.append({"cell": i, "vertex": k, "x": float(x), "y": float(y)})
    return rows


def _plot_cells(diagram, target):
    def draw(fig):
        ax = fig.add_subplot(1, 1, 1)
        if diagram.dim == 2:
            from matplotlib.collections import PolyCollection

            polys = [c.data[0] for c in diagram.cells if c is not None]
            vals = [diagram.masses[i] for i, c in enumerate(diagram.cells) if c is not None]
            pc = PolyCollection(polys, array=np.array(vals), cmap="viridis", edgecolors="k", linewidths=0.3)
            ax.add_collection(pc)
            ax.autoscale_view()
            ax.set_aspect("equal")
            fig.colorbar(pc, ax=ax, label="cell mass")
            ax.set_title("Laguerre cells")
        else:
            err = diagram.masses - target.masses
            ax.bar(np.arange(diagram.N), err)
            ax.set_xlabel("cell")
            ax.set_ylabel("mass error")
    return draw


def run_solve(cfg: ExperimentConfig) -> RunResult:
    problem, source, target, diagram, it = _solve(cfg.params)
    res = RunResult(_solve_report(problem, target, diagram, it))
    res.tables["cells"] = _cell_rows(target, diagram)
    if diagram.dim == 2:
        res.tables["polygons"] = _polygon_rows(diagram)
    res.plots["cells"] = _plot_cells(diagram, target)
    if not diagram.residual <= problem.tol:
        res.failures.append(f"solve.residual: {diagram.residual:.3e} > tol {problem.tol:g}")
    if res.report["lipschitz_constant"] > res.report["target_radius"]:
        res.failures.append("solve.lipschitz: slope norm exceeds the target radius")
    return res


def _default_probes(source):
    X = source.domain
    if not X.is_bounded:
        return []
    lo, hi = X.bounding_box()
    w = hi - lo
    probes = [DomainDescriptor.box(hi + 0.5 * w, hi + w), DomainDescriptor.box(lo - w, lo - 0.5 * w)]
    if X.kind in ("box", "polygon"):
        probes.append(X)
    return probes


def run_verify(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    problem, source, target, diagram, it = _solve(p)
    rep = _solve_report(problem, target, diagram, it)
    n = int(p["samples"])
    counts = pushforward_counts(diagram, source, n, problem.seed)
    emp = counts / n
    bound = binomial_bound(target.masses, n, p["sigmas"]) + problem.tol
    dev = np.abs(emp - target.masses)
    alex = verify_alexandrov(diagram, source, _default_probes(source), problem.target_domain(), tol=problem.tol,
                             seed=problem.seed)
    rep["pushforward"] = {"samples": n, "sigmas": p["sigmas"], "max_error": float(dev.max()),
                          "cells_outside_bound": int(np.count_nonzero(dev > bound)),
                          "max_error_over_bound": float((dev / bound).max())}
    rep["alexandrov"] = alex.to_json()
    res = RunResult(rep)
    rows = _cell_rows(target, diagram)
    for r, e, b in zip(rows, emp, bound):
        r.update({"empirical_mass": float(e), "bound": float(b)})
    res.tables["cells"] = rows
    res.plots["cells"] = _plot_cells(diagram, target)
    if not diagram.residual <= problem.tol:
        res.failures.append(f"solve.residual: {diagram.residual:.3e} > tol {problem.tol:g}")
    if rep["pushforward"]["cells_outside_bound"]:
        res.failures.append(f"pushforward: {rep['pushforward']['cells_outside_bound']} cells outside the "
                            f"{p['sigmas']:g}-sigma binomial bound")
    if not alex.cells_passed:
        res.failures.append(f"alexandrov.cells: mass error {max(alex.cell_mass_error, alex.recomputed_mass_error):.3e}")
    if not alex.slopes_in_target_domain:
        res.failures.append("alexandrov.slopes: a slope lies outside the target domain")
    if not alex.exhausts_support:
        res.failures.append("alexandrov.support: an empty cell or a missing target point")
    for k, pr in enumerate(alex.probes):
        if not pr.passed:
            res.failures.append(f"alexandrov.probe[{k}]: Monge-Ampere mass check failed")
    return res


def run_counterexample(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    spec = CounterexampleSpec(int(p["dim"])) if p["alpha"] is None else CounterexampleSpec(int(p["dim"]), float(p["alpha"]))
    rep = ce_report(spec, seed=p["seed"], n_points=p["points"], kmax=p["kmax"])
    res = RunResult(rep)
    res.tables["degeneracy"] = [{"k": r["k"], "F": r["F"], "log_F": r["log_F"], "gradient_norm": r["gradient_norm"]}
                                for r in rep["degeneracy"]]

    def draw(fig):
        ax = fig.add_subplot(1, 1, 1)
        ks = [r["k"] for r in rep["degeneracy"]]
        ax.plot(ks, [r["log_F"] / math.log(10) for r in rep["degeneracy"]], "o-")
        ax.set_xlabel("k  (x_n = 1 - 10^-k)")
        ax.set_ylabel("log10 F")
        ax.set_title("density along the approach sequence")

    res.plots["degeneracy"] = draw
    res.failures = [f"counterexample.{k}" for k, ok in rep["checks"].items() if not ok]
    return res


def _scaling_plot(rep):
    def draw(fig):
        ax = fig.add_subplot(1, 1, 1)
        t, v = rep.thetas, rep.volumes
        ax.errorbar(t, v, yerr=2 * rep.stderr, fmt="o", label="Monte Carlo")
        if rep.exact is not None:
            ax.plot(t, rep.exact, "k--", label="exact")
        used = rep.used
        c = np.exp(np.mean(np.log(v[used]) - rep.exponent * np.log(t[used])))
        ax.plot(t, c * t ** rep.exponent, "r-", lw=0.8, label=f"fit slope {rep.exponent:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("theta")
        ax.set_ylabel("volume")
        ax.legend()
    return draw


def _thetas(p):
    return theta_grid(float(p["theta_max"]), float(p["theta_min"]))


def run_wedge(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    spec = WedgeSpec(int(p["dim"]), float(p["lambda"]), float(p["c"]))
    rep = wedge_volume_scaling(spec, _thetas(p), int(p["samples"]), int(p["seed"]), float(p["fit_tol"]))
    out = rep.to_json()
    if spec.n >= 3:
        out["lambda_threshold"] = lambda_threshold(spec.n)
        out["lambda_class"] = classify_lambda(spec.n, spec.lam)
    res = RunResult(out, {"scaling": rep.rows()}, {"scaling": _scaling_plot(rep)})
    if rep.verdict != "ADMISSIBLE":
        res.failures.append(f"wedge.verdict: {rep.verdict} (volume does not decay faster than theta^{spec.n - 1})")
    if not rep.params["consistent"]:
        res.failures.append(f"wedge.exponent: fitted {rep.exponent:.3f} vs {spec.exponent:.3f}")
    return res


def _cone_domain(p):
    n = int(p["dim"])
    if p["domain"] == "full":
        return DomainDescriptor.full_space(n)
    if p["domain"] == "ball":
        c = np.zeros(n)
        c[:2] = 0.5
        return DomainDescriptor.ball(c, math.sqrt(0.5))
    raise ConfigError(f"params.domain: expected 'full' or 'ball', got {p['domain']!r}")


def run_cone(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    Y = _cone_domain(p)
    rep = cone_volume_scaling(Y, _thetas(p), int(p["samples"]), int(p["seed"]), fit_tol=float(p["fit_tol"]))
    res = RunResult(rep.to_json(), {"scaling": rep.rows()}, {"scaling": _scaling_plot(rep)})
    if rep.verdict != "LOWER-BOUND-HOLDS":
        res.failures.append(f"cone.verdict: {rep.verdict}")
    if Y.kind == "full_space" and abs(rep.exponent - (Y.dim - 1)) > float(p["fit_tol"]):
        res.failures.append(f"cone.exponent: fitted {rep.exponent:.3f} vs {Y.dim - 1}")
    return res


PROBE_CASES = {
    "gaussian2d": dict(source="gaussian2d", target="gaussian2d", centers=[[0.0, 0.0], [0.5, -0.5], [-1.0, 0.5]]),
    "counterexample3d": dict(source="gaussian3d", target="counterexample3d", centers=[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]),
}


def run_probe(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    if p["problem"] is not None:
        problem = _problem({**p, "n": 16, "source": None, "target": None, "max_iter": 100})
        centers = problem.extra.get("centers")
    else:
        if p["case"] not in PROBE_CASES:
            raise ConfigError(f"params.case: expected one of {sorted(PROBE_CASES)}")
        case = PROBE_CASES[p["case"]]
        problem = TransportProblem.from_presets(case["source"], case["target"], 16, seed=p["seed"], tol=p["tol"])
        centers = case["centers"]
    rep = strict_convexity_probe(problem, p["levels"], centers, core_radius=2.0)
    res = RunResult(rep.to_json(), {"levels": [{k: v for k, v in r.items() if k != "preimage_diameters"}
                                               for r in rep.rows()]})

    def draw(fig):
        ax = fig.add_subplot(1, 1, 1)
        N = [r.n_points for r in rep.levels]
        ax.loglog(N, [max(r.cell_diameter, 1e-300) for r in rep.levels], "o-", label="interior cell")
        ax.loglog(N, [r.preimage_diameter for r in rep.levels], "s-", label="preimage")
        ax.set_xlabel("N")
        ax.set_ylabel("diameter")
        ax.set_title(rep.flag)
        ax.legend()

    res.plots["levels"] = draw
    if p["expect"] is not None and rep.flag != p["expect"]:
        res.failures.append(f"probe.flag: {rep.flag}, expected {p['expect']}")
    return res


def run_legendre(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    rng = counter_rng(p["seed"])
    n, k = int(p["dim"]), int(p["supports"])
    u = PiecewiseAffinePotential(rng.normal(size=(k, n)), rng.normal(size=k)).canonical()
    v = legendre_conjugate(u)
    uu = legendre_conjugate(v)
    x = rng.uniform(-3, 3, (int(p["points"]), n))
    involution = float(np.abs(uu(x) - u(x)).max())
    idx = u.argmax(x)
    y = u.slopes[idx]
    vy = np.array([v(row) for row in y])
    xy = np.einsum("ij,ij->i", x, y)
    gap = u(x) + vy - xy
    # the sum of three rounded terms: a few ulps of the largest is equality in floating point
    ulps = np.abs(gap) / (np.spacing(np.maximum.reduce([np.abs(u(x)), np.abs(vy), np.abs(xy)])))
    rep = {"dim": n, "supports": k, "canonical_pieces": u.n_pieces, "points": len(x),
           "involution_max_error": involution, "fenchel_young_max_gap": float(np.abs(gap).max()),
           "fenchel_young_max_ulps": float(ulps.max())}
    res = RunResult(rep)
    res.tables["points"] = [{"i": int(i), "gap": float(g)} for i, g in zip(idx, gap)]
    if involution > float(p["tol"]):
        res.failures.append(f"legendre.involution: {involution:.3e} > {p['tol']:g}")
    if ulps.max() > 4:
        res.failures.append(f"legendre.fenchel_young: gap of {ulps.max():.0f} ulps")
    return res


RUNNERS = {
    "solve": run_solve,
    "verify": run_verify,
    "counterexample": run_counterexample,
    "wedge": run_wedge,
    "cone": run_cone,
    "probe": run_probe,
    "legendre": run_legendre,
}
