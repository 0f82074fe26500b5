"""Command-line entry point: ``monotone-ot <command> [flags]``.

Exit codes: 0 every check passed, 1 a verification failed (named on
stderr), 2 bad input or a solver that did not converge.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import sys
import time

from ..counterexample import RootBracketError
from ..diagnostics import InsufficientSamplesError
from ..transport import ConvergenceError
from .commands import RUNNERS, RunResult
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config_file
from .report import OUTPUT_DIR_ENV, build_report, write_outputs

__all__ = ["main", "run", "build_parser", "ExperimentConfig", "RunResult"]

S = argparse.SUPPRESS


def _levels(s):
    return [int(t) for t in s.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monotone-ot", description="Semi-discrete Brenier maps and regularity checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config; its params override flags")
        p.add_argument("--out", help=f"report path (default: ${OUTPUT_DIR_ENV} or ., named by config hash)")
        p.add_argument("--force", action="store_true", help="overwrite an existing report")
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument("--seed", type=int, default=S)

    def transport(p):
        p.add_argument("--source", default=S, help="source preset, e.g. uniform2d, gaussian2d")
        p.add_argument("--target", default=S, help="target preset, e.g. gaussian2d, counterexample3d")
        p.add_argument("--n", type=int, default=S, help="number of target points")
        p.add_argument("--tol", type=float, default=S)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
        p.add_argument("--problem", default=S, help="problem JSON file (overrides presets)")

    p = sub.add_parser("solve", help="solve a semi-discrete problem")
    common(p)
    transport(p)
    p = sub.add_parser("verify", help="solve, then check pushforward and Alexandrov identities")
    common(p)
    transport(p)
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--sigmas", type=float, default=S)
    p = sub.add_parser("counterexample", help="certificate and degeneracy table of the flat-segment potential")
    common(p)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--points", type=int, default=S)
    p.add_argument("--kmax", type=int, default=S)
    for name, extra in (("wedge", True), ("cone", False)):
        p = sub.add_parser(name, help=f"{name} volume scaling exponent")
        common(p)
        p.add_argument("--dim", type=int, default=S)
        p.add_argument("--samples", type=int, default=S)
        p.add_argument("--theta-min", dest="theta_min", type=float, default=S)
        p.add_argument("--theta-max", dest="theta_max", type=float, default=S)
        p.add_argument("--fit-tol", dest="fit_tol", type=float, default=S)
        if extra:
            p.add_argument("--lambda", dest="lambda", type=float, default=S)
            p.add_argument("--c", type=float, default=S)
        else:
            p.add_argument("--domain", choices=["full", "ball"], default=S)
    p = sub.add_parser("probe", help="strict-convexity refinement probe")
    common(p)
    p.add_argument("--case", default=S, help="gaussian2d or counterexample3d")
    p.add_argument("--levels", type=_levels, default=S, help="comma separated, e.g. 16,64,256")
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--expect", choices=["REGULAR", "DEGENERATE"], default=S)
    p.add_argument("--problem", default=S)
    p = sub.add_parser("legendre", help="double conjugation and Fenchel-Young checks")
    common(p)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--supports", type=int, default=S)
    p.add_argument("--points", type=int, default=S)
    p.add_argument("--tol", type=float, default=S)
    return ap


_CONTROL = {"command", "config", "out", "force", "verbose"}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    params = {k: v for k, v in vars(ns).items() if k not in _CONTROL}
    if ns.config:
        d = load_config_file(ns.config)
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        if d.get("command", ns.command) != ns.command:
            raise ConfigError(f"command: config is for {d['command']!r}, not {ns.command!r}")
        fileparams = d.get("params", {})
        if not isinstance(fileparams, dict):
            raise ConfigError("params: expected an object")
        params.update(fileparams)
    return ExperimentConfig(ns.command, params, ns.out, ns.force)


def run(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.command](cfg)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(ns.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    started = datetime.datetime.now(datetime.timezone.utc)
    t0 = time.perf_counter()
    try:
        cfg = config_from_args(ns)
        result = run(cfg)
    except (ConfigError, ConvergenceError, InsufficientSamplesError, RootBracketError, ValueError) as e:
        kind = "convergence" if isinstance(e, ConvergenceError) else "input"
        print(f"monotone-ot: {kind} error: {e}", file=sys.stderr)
        return 2
    written = write_outputs(cfg, result, started, time.perf_counter() - t0, ["monotone-ot", *argv])
    if result.failures:
        for f in result.failures:
            print(f"FAIL {f}", file=sys.stderr)
        print(f"{cfg.command}: FAIL -> {written['report']}")
        return 1
    print(f"{cfg.command}: PASS -> {written['report']}")
    return 0


__all__ += ["build_report", "COMMANDS"]
