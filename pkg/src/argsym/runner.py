"""Declarative experiments: validate a JSON config, run it, return rows and a verdict."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .argmin_mc import (
    argmin_distribution,
    finite_n_bridge,
    median_bias,
    necessity_probe_1d,
    sublinear_escape_demo,
    symmetry_test,
)
from .estimators import REGISTRY
from .hulc import SCENARIOS, coverage_experiment
from .presets import make_cone, make_drift, make_grid, make_oracle, make_part
from .processes import ClassISpec

KINDS = ("argmin_distribution", "symmetry_test", "necessity_probe", "finite_n_bridge", "coverage",
         "escape_demo")

_REQUIRED = {
    "argmin_distribution": ("drift", "part", "grid", "n_replicates"),
    "symmetry_test": ("drift", "part", "grid", "n_replicates"),
    "necessity_probe": ("drift", "part", "cone", "n_replicates"),
    "finite_n_bridge": ("estimator", "sample_sizes", "n_mc"),
    "coverage": ("scenarios", "n", "alpha", "n_mc"),
    "escape_demo": ("drift", "cone"),
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    master_seed: int
    raw: dict = field(repr=False, default_factory=dict)

    def get(self, key, default=None):
        return self.raw.get(key, default)

    @property
    def checks(self) -> dict:
        return self.raw.get("checks", {})


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate(raw) -> ExperimentConfig:
    """Check a parsed config; every problem is reported with its field path."""
    errs = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    kind = raw.get("kind")
    if kind not in KINDS:
        errs.append(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    if "master_seed" not in raw:
        errs.append("master_seed: missing required field (no wall-clock default)")
    elif not _is_int(raw["master_seed"]) or raw["master_seed"] < 0:
        errs.append("master_seed: must be a non-negative integer")
    if not isinstance(raw.get("name", ""), str):
        errs.append("name: must be a string")
    for key in _REQUIRED.get(kind, ()):
        if key not in raw:
            errs.append(f"{key}: missing required field for kind {kind!r}")
    for key in ("n_replicates", "n_mc", "n"):
        if key in raw and (not _is_int(raw[key]) or raw[key] < 2):
            errs.append(f"{key}: must be an integer >= 2")
    builders = {"drift": make_drift, "part": make_part, "cone": make_cone, "grid": make_grid}
    built = {}
    for key, make in builders.items():
        if key in raw and raw[key] is not None:
            try:
                built[key] = make(raw[key])
            except (KeyError, TypeError, ValueError) as exc:
                errs.append(f"{key}: {exc}")
    if kind == "symmetry_test" and "grid" in built and not built["grid"].symmetric:
        errs.append("grid: symmetry tests need a grid symmetric about 0")
    if kind == "necessity_probe" and "part" in built and not isinstance(built["part"], ClassISpec):
        errs.append("part.class: the necessity probe needs a Class I part")
    if kind == "finite_n_bridge" and raw.get("estimator") not in REGISTRY:
        errs.append(f"estimator: unknown estimator {raw.get('estimator')!r}")
    if kind == "coverage":
        for j, s in enumerate(raw.get("scenarios", [])):
            if s not in SCENARIOS:
                errs.append(f"scenarios[{j}]: unknown scenario {s!r}")
        a = raw.get("alpha")
        if not isinstance(a, (int, float)) or not 0 < a < 1:
            errs.append("alpha: must lie in (0, 1)")
    oracle = raw.get("checks", {}).get("oracle")
    if oracle is not None:
        try:
            make_oracle(oracle)
        except (KeyError, TypeError) as exc:
            errs.append(f"checks.oracle: {exc}")
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(raw.get("name", kind), kind, raw["master_seed"], raw)


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    verdict: dict

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    @property
    def passed(self) -> bool:
        return bool(self.verdict["passed"])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _check(name, value, op, threshold) -> dict:
    ok = {"<=": value <= threshold, ">=": value >= threshold, "==": value == threshold,
          "<": value < threshold}[op]
    return {"name": name, "value": _plain(value), "op": op, "threshold": _plain(threshold), "passed": bool(ok)}


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _verdict(checks, **extra) -> dict:
    return {"passed": all(c["passed"] for c in checks), "checks": checks, **extra}


def _run_argmin(cfg: ExperimentConfig, workers) -> ExperimentResult:
    dist = argmin_distribution(make_drift(cfg.get("drift")), make_part(cfg.get("part")),
                               make_cone(cfg.get("cone")), make_grid(cfg.get("grid")),
                               cfg.get("n_replicates"), cfg.master_seed, workers=workers)
    cols = [f"w_{k + 1}" for k in range(dist.dim)] + ["min_value", "tie_count", "boundary_hit"]
    rows = [dict(zip(cols, [*s, m, int(t), bool(b)]))
            for s, m, t, b in zip(dist.samples, dist.min_values, dist.tie_counts, dist.boundary_hits)]
    ch = cfg.checks
    checks = []
    mb = median_bias(dist)
    if "oracle" in ch:
        ks = dist.ks_distance(make_oracle(ch["oracle"])) if dist.dim == 1 else math.nan
        checks.append(_check("ks_to_oracle", ks, "<=", ch.get("ks_max", 0.02)))
    if "median_bias_max" in ch:
        checks.append(_check("median_bias", float(mb.max()), "<=", ch["median_bias_max"]))
    checks.append(_check("boundary_fraction", dist.boundary_fraction, "<=", ch.get("boundary_fraction_max", 1e-3)))
    return ExperimentResult(cols, rows, _verdict(checks, n=dist.n, median_bias=mb.tolist(),
                                                 tie_fraction=dist.tie_fraction, flags=dist.flags))


def _run_symmetry(cfg: ExperimentConfig, workers) -> ExperimentResult:
    drift, part = make_drift(cfg.get("drift")), make_part(cfg.get("part"))
    cone, grid = make_cone(cfg.get("cone")), make_grid(cfg.get("grid"))
    n, alpha = cfg.get("n_replicates"), cfg.get("alpha", 0.01)
    expect = bool(cfg.get("expect_reject", False))
    rows, checks = [], []
    for seed in cfg.get("seeds", [cfg.master_seed]):
        a = argmin_distribution(drift, part, cone, grid, n, seed, 0, workers)
        b = argmin_distribution(drift, part, cone, grid, n, seed, n, workers)
        v = symmetry_test(a, b, cfg.get("mode", "central"), cfg.get("n_perm", 1000), seed)
        rows.append({"seed": seed, "statistic": v.statistic, "p_value": v.p_value, "rejects": v.rejects(alpha),
                     "boundary_fraction": max(a.boundary_fraction, b.boundary_fraction)})
        checks.append(_check(f"rejects[seed={seed}]", v.rejects(alpha), "==", expect))
    return ExperimentResult(["seed", "statistic", "p_value", "rejects", "boundary_fraction"], rows,
                            _verdict(checks, alpha=alpha, expect_reject=expect, mode=cfg.get("mode", "central")))


def _run_necessity(cfg: ExperimentConfig, workers) -> ExperimentResult:
    grid = make_grid(cfg.get("grid")) if cfg.get("grid") else None
    rep = necessity_probe_1d(make_drift(cfg.get("drift")), make_cone(cfg.get("cone")), make_part(cfg.get("part")),
                             cfg.get("n_replicates"), cfg.master_seed, grid, cfg.get("alpha", 0.01), workers)
    d = rep.to_dict()
    row = {"a1": d["a1"], "p_value": rep.symmetry.p_value, "rejects": rep.symmetry.rejects(cfg.get("alpha", 0.01)),
           "median_bias_w": rep.median_bias_w, "median_bias_y": rep.median_bias_y,
           "subadditivity_ok": rep.subadditivity_ok, "conclusion": rep.conclusion}
    checks = []
    if "expect_conclusion" in cfg.checks:
        checks.append(_check("conclusion_prefix", rep.conclusion.split(":")[0], "==",
                             cfg.checks["expect_conclusion"]))
    if "median_unbiased" in cfg.checks:
        checks.append(_check("median_unbiased", rep.median_unbiased_ok, "==", cfg.checks["median_unbiased"]))
    return ExperimentResult(list(row), [row], _verdict(checks, report=d))


def _run_bridge(cfg: ExperimentConfig, workers) -> ExperimentResult:
    rep = finite_n_bridge(cfg.get("estimator"), cfg.get("sample_sizes"), cfg.get("n_mc"), cfg.master_seed,
                          cfg.get("limit_replicates"), workers, bool(cfg.get("simulate_limit", False)))
    rows = [dict(r.__dict__) for r in rep.rows]
    ch = cfg.checks
    checks = []
    last = rep.rows[-1]
    if "ks_max" in ch:
        checks.append(_check(f"ks_to_limit[n={last.n}]", last.ks_to_limit, "<=", ch["ks_max"]))
    if "median_bias_tol" in ch:
        checks.append(_check(f"median_bias_gap[n={last.n}]", abs(last.median_bias - rep.limit_median_bias), "<=",
                             ch["median_bias_tol"]))
    return ExperimentResult(["n", "median_bias", "ks_to_limit", "mean", "n_mc"], rows,
                            _verdict(checks, limit_median_bias=rep.limit_median_bias,
                                     monotone_toward_limit=rep.monotone_toward_limit, limit_n=rep.limit_n))


def _run_coverage(cfg: ExperimentConfig, workers) -> ExperimentResult:
    reps = [coverage_experiment(s, cfg.get("alpha"), cfg.get("n"), cfg.get("n_mc"), cfg.master_seed, workers)
            for s in cfg.get("scenarios")]
    rows = [r.row() for r in reps]
    by = {r.scenario: r for r in reps}
    ch = cfg.checks
    checks = []
    for s, (target, tol) in ch.get("within", {}).items():
        checks.append(_check(f"|coverage - {target}|[{s}]", abs(by[s].coverage - target), "<=", tol))
    for s, lo in ch.get("at_least", {}).items():
        checks.append(_check(f"coverage[{s}]", by[s].coverage, ">=", lo))
    if "lowest" in ch:
        low = ch["lowest"]
        others = min(r.coverage for r in reps if r.scenario != low)
        checks.append(_check(f"coverage gap below {low}", others - by[low].coverage, ">=", ch.get("margin", 0.0)))
    cols = ["scenario", "n", "alpha", "coverage", "wilson_lo", "wilson_hi", "med_bias_hat"]
    return ExperimentResult(cols, rows, _verdict(checks, reports=[r.to_dict() for r in reps]))


def _run_escape(cfg: ExperimentConfig, workers) -> ExperimentResult:
    rep = sublinear_escape_demo(make_drift(cfg.get("drift")), make_cone(cfg.get("cone")), cfg.master_seed,
                                tuple(cfg.get("radii", (10.0, 50.0, 250.0))), cfg.get("n_replicates", 20_000),
                                cfg.get("half_nodes", 200), cfg.get("y_sd"), cfg.get("feasible_radius"), workers)
    rows = [{"radius": r, "fraction": f, "standard_error": s}
            for r, f, s in zip(rep.radii, rep.fractions, rep.standard_errors)]
    ch = cfg.checks
    checks = []
    if "min_fraction" in ch:
        checks.append(_check("min escape fraction", min(rep.fractions), ">=", ch["min_fraction"]))
    if "max_last_fraction" in ch:
        checks.append(_check("escape fraction at largest radius", rep.fractions[-1], "<=", ch["max_last_fraction"]))
    return ExperimentResult(["radius", "fraction", "standard_error"], rows, _verdict(checks, report=rep.to_dict()))


_RUNNERS = {
    "argmin_distribution": _run_argmin,
    "symmetry_test": _run_symmetry,
    "necessity_probe": _run_necessity,
    "finite_n_bridge": _run_bridge,
    "coverage": _run_coverage,
    "escape_demo": _run_escape,
}


def run_experiment(cfg: ExperimentConfig, workers=None) -> ExperimentResult:
    return _RUNNERS[cfg.kind](cfg, workers)
