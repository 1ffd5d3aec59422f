import math

import numpy as np
import pytest

from argsym.estimators import Dataset
from argsym.hulc import (
    SCENARIOS,
    batch_count,
    coverage_csv,
    coverage_experiment,
    exact_coverage,
    hulc_interval,
    hulc_intervals_nested,
    interval_from_estimates,
    partition,
)


def test_batch_count():
    assert batch_count(0.05) == 6
    assert batch_count(0.5) == 2 and batch_count(0.25) == 3 and batch_count(0.1) == 5
    alphas = np.linspace(0.01, 0.99, 50)
    Bs = [batch_count(a) for a in alphas]
    assert all(b1 >= b2 for b1, b2 in zip(Bs, Bs[1:]))
    with pytest.raises(ValueError):
        batch_count(1.0)


def test_hull_of_estimates_and_constant_estimator():
    iv = interval_from_estimates([1.2, 0.8, 1.5, 0.9, 1.1, 1.3], 0.05)
    assert (iv.lower, iv.upper, iv.B) == (0.8, 1.5, 6)
    data = Dataset(np.arange(20.0))
    const = hulc_interval(data, lambda d: 3.25, 0.05, seed=1)
    assert const.lower == const.upper == 3.25
    with pytest.raises(ValueError):
        hulc_interval(Dataset(np.arange(5.0)), lambda d: 0.0, 0.05)


def test_partition_sizes_and_coverage_of_rows():
    data = Dataset(np.arange(23.0))
    parts = partition(data, 6, 0)
    assert [len(p) for p in parts] == [4] * 5 + [3]
    assert sorted(np.concatenate(parts).tolist()) == list(range(23))


def test_permuting_observations_changes_nothing():
    rng = np.random.default_rng(0)
    w = rng.normal(size=100)
    a = hulc_interval(Dataset(w), lambda d: float(np.median(d.observations)), 0.05, seed=3)
    b = hulc_interval(Dataset(rng.permutation(w)), lambda d: float(np.median(d.observations)), 0.05, seed=3)
    assert a == b


def test_nested_intervals_widen_as_alpha_drops():
    w = np.random.default_rng(1).normal(size=300)
    mean = lambda d: float(d.observations.mean())
    ivs = hulc_intervals_nested(Dataset(w), mean, [0.5, 0.25, 0.1, 0.05, 0.01], seed=2)
    ordered = [ivs[a] for a in (0.5, 0.25, 0.1, 0.05, 0.01)]
    for small, big in zip(ordered, ordered[1:]):
        assert big.lower <= small.lower and big.upper >= small.upper


def test_exact_coverage_formula():
    assert exact_coverage(6, 0.5) == 1 - 2 ** -5
    assert math.isclose(exact_coverage(2, 0.5), 0.5)


def test_coverage_report_and_determinism():
    a = coverage_experiment("sample_mean", 0.05, 60, 400, 7, workers=1)
    b = coverage_experiment("sample_mean", 0.05, 60, 400, 7, workers=3, block=37)
    assert a == b
    assert a.wilson_lo <= a.coverage <= a.wilson_hi
    text = coverage_csv([a])
    assert text.splitlines()[0] == "scenario,n,alpha,coverage,wilson_lo,wilson_hi,med_bias_hat"


def test_median_biased_scenario_covers_least():
    reps = {s: coverage_experiment(s, 0.05, 2000, 1500, 11) for s in SCENARIOS}
    assert reps["bridge_asym"].med_bias_hat > 0.15
    assert reps["bridge_asym"].coverage < min(reps["sample_mean"].coverage, reps["constrained_mean"].coverage)
    # shifted-normal oracle for the biased batch estimator
    p_above = SCENARIOS["bridge_asym"].limit_median_bias
    predicted = exact_coverage(6, 0.5 - p_above)
    assert abs(reps["bridge_asym"].coverage - predicted) < 4 * reps["bridge_asym"].standard_error + 0.01
