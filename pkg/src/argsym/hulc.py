"""HulC intervals (hull of batch estimates) and coverage experiments."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .argmin_mc import median_bias
from .estimators import REGISTRY, Dataset, EstimatorRegistration, fit_constrained_mean, HALF_LINE
from .seeding import chunks, derived_rng, map_ordered


def batch_count(alpha: float) -> int:
    """``B = ceil(log2(2 / alpha))``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    # guard against log2 landing a hair above an integer
    return int(math.ceil(math.log2(2.0 / alpha) - 1e-12))


@dataclass(frozen=True)
class HulCInterval:
    lower: float
    upper: float
    alpha: float
    B: int
    batch_estimates: tuple

    def covers(self, theta) -> bool:
        return self.lower <= theta <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _fit_fn(estimator) -> Callable[[Dataset], float]:
    return estimator.fit if isinstance(estimator, EstimatorRegistration) else estimator


def _canonical_order(data: Dataset) -> np.ndarray:
    # sort rows first so the seeded shuffle does not depend on the input order
    obs = data.observations
    return np.lexsort(obs.T[::-1])


def partition(data: Dataset, B: int, seed) -> list[np.ndarray]:
    """Seeded shuffle into B batches; the first ``n mod B`` batches get one extra row."""
    n = data.n
    if n < B:
        raise ValueError(f"need n >= B (n={n}, B={B})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = _canonical_order(data)[rng.permutation(n)]
    base, extra = divmod(n, B)
    sizes = [base + (1 if b < extra else 0) for b in range(B)]
    return np.split(order, np.cumsum(sizes)[:-1])


def interval_from_estimates(estimates, alpha: float) -> HulCInterval:
    est = tuple(float(e) for e in estimates)
    return HulCInterval(min(est), max(est), alpha, len(est), est)


def hulc_interval(data, estimator, alpha: float = 0.05, seed=0) -> HulCInterval:
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, float))
    B = batch_count(alpha)
    fit = _fit_fn(estimator)
    return interval_from_estimates([fit(data.subset(idx)) for idx in partition(data, B, seed)], alpha)


def hulc_intervals_nested(data, estimator, alphas, seed=0) -> dict:
    """Intervals for several alphas on nested batches.

    The data are split once into ``B_max`` batches (for the smallest
    alpha); a level needing ``B`` batches uses the first ``B`` of them, so
    smaller alpha hulls a superset of estimates.
    """
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, float))
    Bs = {a: batch_count(a) for a in alphas}
    fit = _fit_fn(estimator)
    batches = partition(data, max(Bs.values()), seed)
    est = [fit(data.subset(idx)) for idx in batches]
    return {a: interval_from_estimates(est[:B], a) for a, B in Bs.items()}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    generate: Callable[[int, np.random.Generator], Dataset]
    fit: Callable[[Dataset], float]
    theta0: float
    limit_median_bias: float
    description: str = ""


def _gen_gauss(n, rng):
    return Dataset(rng.standard_normal(n).reshape(-1, 1), ("w",), {"generator": "N(0,1)"})


_bridge = REGISTRY["bridge"]

SCENARIOS = {
    "sample_mean": Scenario("sample_mean", _gen_gauss, lambda d: float(d.observations[:, 0].mean()), 0.0, 0.0,
                            "mean of N(0,1) data"),
    "constrained_mean": Scenario("constrained_mean", _gen_gauss,
                                 lambda d: float(fit_constrained_mean(d, HALF_LINE)[0]), 0.0, 0.0,
                                 "mean projected on [0, inf) with theta0 = 0 on the boundary"),
    "bridge_asym": Scenario("bridge_asym", _bridge.generate, _bridge.fit, _bridge.theta0,
                            0.5 - float(stats.norm.sf(0.5)),
                            "ridge with lambda_m = 0.5 sqrt(m) per batch; batch limit N(0,1) - 1/2"),
}


def exact_coverage(B: int, p_above: float) -> float:
    """Coverage of the hull of B iid continuous estimates with ``P(est > theta0) = p_above``."""
    return 1.0 - p_above ** B - (1.0 - p_above) ** B


@dataclass(frozen=True)
class CoverageReport:
    scenario: str
    n: int
    alpha: float
    coverage: float
    wilson_lo: float
    wilson_hi: float
    med_bias_hat: float
    n_mc: int
    B: int
    master_seed: int
    mean_width: float

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.coverage * (1 - self.coverage) / self.n_mc)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in
                ("scenario", "n", "alpha", "coverage", "wilson_lo", "wilson_hi", "med_bias_hat")}

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


COVERAGE_COLUMNS = ("scenario", "n", "alpha", "coverage", "wilson_lo", "wilson_hi", "med_bias_hat")


def coverage_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COVERAGE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()


def coverage_experiment(scenario, alpha: float, n: int, n_mc: int, master_seed: int,
                        workers: int | None = None, block: int = 500) -> CoverageReport:
    """Fraction of replications whose HulC interval contains ``theta0``.

    Replication ``i`` draws its data from ``derived_rng(seed, "<name>-data", i)``
    and its batch split from ``derived_rng(seed, "<name>-split", i)``.
    """
    sc = SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    B = batch_count(alpha)

    def run(span):
        out = []
        for i in range(*span):
            data = sc.generate(n, derived_rng(master_seed, f"{sc.name}-data", i))
            iv = hulc_interval(data, sc.fit, alpha, derived_rng(master_seed, f"{sc.name}-split", i))
            out.append((iv.covers(sc.theta0), iv.width, iv.batch_estimates))
        return out

    res = [r for part in map_ordered(run, chunks(0, n_mc, block), workers) for r in part]
    hits = int(sum(r[0] for r in res))
    ci = stats.binomtest(hits, n_mc).proportion_ci(0.95, method="wilson")
    batch_est = np.concatenate([np.asarray(r[2]) for r in res])
    mb = float(median_bias(batch_est, sc.theta0)[0])
    return CoverageReport(sc.name, n, alpha, hits / n_mc, float(ci.low), float(ci.high), mb, n_mc, B,
                          master_seed, float(np.mean([r[1] for r in res])))
