"""Named building blocks shared by library users and experiment configs."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .cones import PolyhedralCone
from .estimators import REGISTRY
from .grid import GridDomain
from .hulc import SCENARIOS
from .processes import PART_PRESETS, DriftSpec, part_from_dict

DRIFT_KINDS = ("quadratic", "lad_limit", "bridge", "example7", "mode", "custom")

CONE_PRESETS = {
    "full": lambda dim=1: PolyhedralCone.full(dim),
    "nonnegative": lambda dim=1: PolyhedralCone.nonnegative(dim),
}


def _positive_part_cdf(scale=1.0):
    return lambda t: np.where(np.asarray(t) < 0, 0.0, stats.norm.cdf(t, scale=scale))


# closed-form limit laws used as KS oracles; each maps params to a CDF
ORACLES = {
    "normal": lambda loc=0.0, scale=1.0: stats.norm(loc, scale).cdf,
    "positive_part_normal": _positive_part_cdf,
}


def make_cone(spec):
    if spec is None:
        return None
    if "preset" in spec:
        if spec["preset"] not in CONE_PRESETS:
            raise KeyError(f"unknown cone preset {spec['preset']!r}")
        return CONE_PRESETS[spec["preset"]](int(spec.get("dim", 1)))
    return PolyhedralCone.from_dict(spec)


def make_drift(spec) -> DriftSpec:
    if spec.get("kind") not in DRIFT_KINDS:
        raise KeyError(f"unknown drift kind {spec.get('kind')!r}")
    return DriftSpec.from_dict(spec)


def make_part(spec):
    return part_from_dict(spec)


def make_grid(spec) -> GridDomain:
    return GridDomain.from_dict(spec)


def make_oracle(spec):
    if spec["name"] not in ORACLES:
        raise KeyError(f"unknown oracle {spec['name']!r}")
    return ORACLES[spec["name"]](**spec.get("params", {}))


def list_presets() -> dict:
    return {
        "stochastic_parts": sorted(f"{c}:{p}" for c, p in PART_PRESETS),
        "drift_kinds": list(DRIFT_KINDS),
        "cones": sorted(CONE_PRESETS),
        "estimators": sorted(REGISTRY),
        "coverage_scenarios": sorted(SCENARIOS),
        "oracles": sorted(ORACLES),
    }
