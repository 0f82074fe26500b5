"""JSON-describable semi-discrete problems and a few named presets."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

from ..convex.domains import DomainDescriptor
from .measures import DiscreteMeasure, SourceDensity, density_from_json, quantize_target


def _box(lo, hi):
    return DomainDescriptor.box(lo, hi).to_json()


def _full(n):
    return DomainDescriptor.full_space(n).to_json()


CE_BOX3 = ([-3.0, -3.0, -1.0], [3.0, 3.0, 1.0])

SOURCE_PRESETS = {
    "uniform1d": {"domain": _box([0.0], [1.0]), "density": {"name": "uniform"}},
    "uniform2d": {"domain": _box([0.0, 0.0], [1.0, 1.0]), "density": {"name": "uniform"}},
    "uniform3d": {"domain": _box([0.0] * 3, [1.0] * 3), "density": {"name": "uniform"}},
    "gaussian1d": {"domain": _full(1), "density": {"name": "gaussian", "sigma": 1.0}},
    "gaussian2d": {"domain": _full(2), "density": {"name": "gaussian", "sigma": 1.0}},
    "gaussian3d": {"domain": _full(3), "density": {"name": "gaussian", "sigma": 1.0}},
}

TARGET_PRESETS = {
    **{k: {**v, "truncation_radius": 4.0} for k, v in SOURCE_PRESETS.items()},
    # F restricted to a box of R^2 x (-1, 1); sampled exactly through the gradient
    "counterexample3d": {"domain": _box(*CE_BOX3), "density": {"name": "counterexample_F", "n": 3},
                         "truncation_radius": 4.0},
}


@dataclass
class TransportProblem:
    """Source {domain, density}, target {domain, density, truncation_radius, mode}, N and solver knobs."""

    source: dict
    target: dict
    n_points: int
    seed: int = 0
    tol: float = 1e-9
    max_iter: int = 100
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_presets(cls, source: str, target: str, n_points: int, **kw) -> "TransportProblem":
        try:
            src = copy.deepcopy(SOURCE_PRESETS[source])
            tgt = copy.deepcopy(TARGET_PRESETS[target])
        except KeyError as e:
            raise ValueError(f"unknown preset {e.args[0]!r}; choose from {sorted(TARGET_PRESETS)}") from None
        return cls(src, tgt, int(n_points), **kw)

    @property
    def dim(self) -> int:
        return int(self.source["domain"]["dim"])

    def build_source(self) -> SourceDensity:
        dom = DomainDescriptor.from_json(self.source["domain"])
        return SourceDensity(dom, density_from_json(self.source["density"], dom))

    def target_domain(self) -> DomainDescriptor:
        return DomainDescriptor.from_json(self.target["domain"])

    def build_target(self, n_points=None) -> DiscreteMeasure:
        dom = self.target_domain()
        G = density_from_json(self.target["density"], dom)
        return quantize_target(G, dom, int(n_points or self.n_points), float(self.target.get("truncation_radius", 4.0)),
                               seed=self.seed, mode=self.target.get("mode", "grid"))

    def with_n(self, n_points: int) -> "TransportProblem":
        p = copy.deepcopy(self)
        p.n_points = int(n_points)
        return p

    def to_json(self) -> dict:
        return {
            "source": copy.deepcopy(self.source),
            "target": copy.deepcopy(self.target),
            "n_points": self.n_points,
            "seed": self.seed,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "extra": copy.deepcopy(self.extra),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TransportProblem":
        unknown = set(d) - {"source", "target", "n_points", "seed", "tol", "max_iter", "extra"}
        if unknown:
            raise ValueError(f"unknown problem fields: {sorted(unknown)}")
        for key in ("source", "target", "n_points"):
            if key not in d:
                raise ValueError(f"problem is missing field {key!r}")
        if int(d["source"]["domain"]["dim"]) != int(d["target"]["domain"]["dim"]):
            raise ValueError("source and target dimensions differ")
        return cls(d["source"], d["target"], int(d["n_points"]), int(d.get("seed", 0)), float(d.get("tol", 1e-9)),
                   int(d.get("max_iter", 100)), dict(d.get("extra", {})))
