"""Experiment configuration: defaults, validation, canonical JSON and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

COMMANDS = ("solve", "verify", "counterexample", "wedge", "cone", "probe", "legendre")

# every field a command accepts, with its default; None means "derived"
DEFAULTS = {
    "solve": {"source": "uniform2d", "target": "gaussian2d", "n": 64, "seed": 0, "tol": 1e-9, "max_iter": 100,
              "problem": None},
    "verify": {"source": "uniform2d", "target": "gaussian2d", "n": 64, "seed": 0, "tol": 1e-9, "max_iter": 100,
               "problem": None, "samples": 1_000_000, "sigmas": 3.0},
    "counterexample": {"dim": 3, "alpha": None, "seed": 0, "points": 1000, "kmax": 6},
    "wedge": {"dim": 3, "lambda": 2.0, "c": 1.0, "samples": 10_000_000, "seed": 0, "theta_min": 1e-3,
              "theta_max": 0.1, "fit_tol": 0.15},
    "cone": {"dim": 3, "domain": "full", "samples": 2_000_000, "seed": 0, "theta_min": 1e-3, "theta_max": 0.1,
             "fit_tol": 0.1},
    "probe": {"case": "gaussian2d", "levels": [16, 64, 256, 1024], "seed": 0, "tol": 1e-9, "expect": None,
              "problem": None},
    "legendre": {"dim": 2, "supports": 40, "points": 1000, "seed": 0, "tol": 1e-10},
}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    out: str = None
    force: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown {self.command!r}; choose from {', '.join(COMMANDS)}")
        allowed = DEFAULTS[self.command]
        unknown = sorted(set(self.params) - set(allowed))
        if unknown:
            raise ConfigError(f"params.{unknown[0]}: not a field of {self.command!r}")
        merged = copy.deepcopy(allowed)
        merged.update(self.params)
        self.params = merged

    def to_json(self) -> dict:
        """The run-defining part; output locations live in the sidecar."""
        return {"command": self.command, "params": copy.deepcopy(self.params)}

    @classmethod
    def from_json(cls, d: dict, out=None, force=False) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(d) - {"command", "params"})
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown top-level field")
        if "command" not in d:
            raise ConfigError("command: missing")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params: expected an object")
        return cls(d["command"], params, out, force)

    def canonical(self) -> str:
        return canonical_json(self.to_json())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def load_config_file(path: str) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} line {e.lineno} column {e.colno}: {e.msg}") from None
