import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import linprog, minimize

from argsym.argmin_mc import finite_n_bridge
from argsym.cones import PolyhedralSet
from argsym.estimators import (
    REGISTRY,
    Dataset,
    InfeasibleSetError,
    JumpDensitySpec,
    RankDeficientError,
    bridge_duality_gap,
    bridge_objective,
    fit_bridge,
    fit_constrained_mean,
    fit_lad,
    fit_lms,
    fit_mle_jump,
    fit_mode_venter,
    fit_shorth,
    lms_objective,
    registry_json,
    scaled_errors,
)


def test_dataset_csv_round_trip(tmp_path):
    d = Dataset(np.array([[0.1, 1.0 / 3.0], [2.0, -5e-17]]), meta={"seed": 3})
    back = Dataset.from_csv(d.to_csv(tmp_path / "d.csv") and tmp_path / "d.csv")
    assert np.array_equal(back.observations, d.observations)
    assert back.columns == ("x1", "y") and back.meta == {"seed": 3}
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, np.nan]))


def _slsqp_projection(m, pset):
    cons = [{"type": "ineq", "fun": lambda z, a=a, b=b: b - a @ z} for a, b in zip(pset.A, pset.b)]
    cons += [{"type": "eq", "fun": lambda z, e=e, d=d: e @ z - d} for e, d in zip(pset.E, pset.d)]
    res = minimize(lambda z: np.sum((z - m) ** 2), np.zeros(pset.dim), constraints=cons,
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    return res.x


def test_constrained_mean_against_projection_oracle():
    rng = np.random.default_rng(0)
    for _ in range(30):
        p = int(rng.integers(1, 4))
        rows = [np.concatenate([rng.normal(size=p), [abs(rng.normal())]]) for _ in range(int(rng.integers(1, 4)))]
        pset = PolyhedralSet.from_dict({"dim": p, "ineq": rows})
        data = rng.normal(loc=2.0, size=(20, p))
        est = fit_constrained_mean(data, pset)
        assert pset.contains(est)
        ref = _slsqp_projection(data.mean(axis=0), pset)
        assert np.allclose(est, ref, atol=1e-6)


def test_constrained_mean_examples_and_equivariance():
    half = PolyhedralSet.from_dict({"dim": 1, "ineq": [[-1.0, 0.0]]})
    assert fit_constrained_mean([-1.0, -2.0], half)[0] == 0.0
    assert fit_constrained_mean([1.0, 2.0], half)[0] == 1.5
    data = np.random.default_rng(1).normal(size=(30, 2))
    pset = PolyhedralSet.from_dict({"dim": 2, "ineq": [[1, 1, 0.1]], "eq": [[1, -2, 0]]})
    c = np.array([0.7, -1.3])
    assert np.allclose(fit_constrained_mean(data + c, pset.shifted(c)), fit_constrained_mean(data, pset) + c)
    empty = PolyhedralSet.from_dict({"dim": 1, "ineq": [[1.0, -1.0], [-1.0, -1.0]]})
    with pytest.raises(InfeasibleSetError):
        fit_constrained_mean([0.0], empty)


def _lad_bruteforce(x, y):
    # an optimal LAD line interpolates two observations
    best = np.inf
    for i, j in itertools.combinations(range(len(y)), 2):
        if x[i] != x[j]:
            b = (y[j] - y[i]) / (x[j] - x[i])
            a = y[i] - b * x[i]
            best = min(best, np.abs(y - a - b * x).sum())
    return best


def test_lad_matches_elemental_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(15):
        n = int(rng.integers(5, 25))
        x = rng.normal(size=n)
        y = 1 + 2 * x + rng.standard_t(2, size=n)
        phi, info = fit_lad(Dataset(np.column_stack([x, y])), return_info=True)
        assert math.isclose(info.objective, _lad_bruteforce(x, y), rel_tol=1e-9, abs_tol=1e-9)
        assert info.certificate <= 1e-7


def test_lad_intercept_only_and_errors():
    assert fit_lad([3.0, 1.0, 2.0])[0] == 2.0
    with pytest.raises(RankDeficientError):
        fit_lad(Dataset(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 1.0], [3.0, 3.0, 5.0]])))
    y = np.random.default_rng(3).normal(size=11)
    assert math.isclose(fit_lad(y + 4.0)[0], fit_lad(y)[0] + 4.0)


def _scan_1d(objective, lo, hi, m=200_001):
    t = np.linspace(lo, hi, m)
    v = np.array([objective(s) for s in t]) if m <= 20_001 else objective(t)
    return t[np.argmin(v)], v.min()


@pytest.mark.parametrize("mu", [2.0, 1.5, 1.0])
def test_bridge_convex_certificate(mu):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 3))
    y = X @ np.array([1.0, -0.2, 0.0]) + rng.normal(size=40)
    phi, info = fit_bridge(Dataset(np.column_stack([X, y])), lam=5.0, mu=mu, return_info=True)
    assert info.label == "certified" and info.gap <= 1e-8
    assert bridge_duality_gap(X, y, phi, 5.0, mu) <= 1e-8
    if mu == 2.0:
        assert np.allclose(phi, np.linalg.solve(X.T @ X + 5.0 * np.eye(3), X.T @ y))


@pytest.mark.parametrize("mu", [1.0, 0.5])
def test_bridge_one_dimensional_against_grid_scan(mu):
    rng = np.random.default_rng(5)
    x = rng.normal(size=30)
    y = 0.4 * x + rng.normal(size=30)
    lam = 3.0
    phi = fit_bridge(Dataset(np.column_stack([x, y])), lam, mu)[0]
    obj = lambda t: np.sum((y[None, :] - np.outer(np.atleast_1d(t), x)) ** 2, axis=1) + lam * np.abs(t) ** mu
    t_best, v_best = _scan_1d(obj, -2.0, 2.0)
    mine = bridge_objective(x[:, None], y, np.array([phi]), lam, mu)
    assert mine <= v_best + 1e-9
    assert abs(phi - t_best) <= 1e-4 or math.isclose(mine, v_best, rel_tol=1e-9)


def test_bridge_is_not_translation_equivariant():
    rng = np.random.default_rng(6)
    x = rng.normal(size=50)
    y = x + rng.normal(size=50)
    base = fit_bridge(Dataset(np.column_stack([x, y])), 10.0, 2.0)[0]
    moved = fit_bridge(Dataset(np.column_stack([x, y + 3.0 * x])), 10.0, 2.0)[0]
    assert abs(moved - (base + 3.0)) > 1e-3


def test_shorth_examples_and_bruteforce():
    assert fit_shorth([-1.0, 0.0, 1.0]) == -0.5
    assert fit_shorth([0.0, 0.1, 0.2, 5.0]) == 0.05
    rng = np.random.default_rng(7)
    for _ in range(30):
        w = rng.normal(size=int(rng.integers(2, 40)))
        k = math.ceil(w.size / 2)
        best = None
        # every subset of k points; the shortest one sets the window
        s = np.sort(w)
        for i in range(w.size - k + 1):
            width = s[i + k - 1] - s[i]
            if best is None or width < best[0]:
                best = (width, 0.5 * (s[i] + s[i + k - 1]))
        assert fit_shorth(w) == best[1]
        assert math.isclose(fit_shorth(w + 2.5), fit_shorth(w) + 2.5, abs_tol=1e-12)


def _lms_candidates_oracle(x, y):
    X = x[:, None]
    cands = [y[i] / x[i] for i in range(len(x)) if x[i] != 0]
    for i, j in itertools.combinations(range(len(x)), 2):
        for s in (1.0, -1.0):
            if x[i] - s * x[j] != 0:
                cands.append((y[i] - s * y[j]) / (x[i] - s * x[j]))
    return min(lms_objective(X, y, np.array([c])) for c in cands)


def test_lms_one_parameter_exact():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(3, 25))
        x = rng.normal(size=n)
        y = x + rng.normal(size=n)
        phi, info = fit_lms(Dataset(np.column_stack([x, y])), return_info=True)
        assert info.objective <= _lms_candidates_oracle(x, y) * (1 + 1e-9) + 1e-12


def test_lms_location_agrees_with_shorth():
    rng = np.random.default_rng(9)
    for _ in range(20):
        w = rng.normal(size=int(rng.integers(3, 30)))
        phi = fit_lms(w, intercept=True)[0]
        X = np.ones((w.size, 1))
        assert math.isclose(lms_objective(X, w, [phi]), lms_objective(X, w, [fit_shorth(w)]),
                            rel_tol=1e-9, abs_tol=1e-12)


def _cheb3(X, y):
    c = np.array([0.0, 0.0, 1.0])
    A = np.vstack([np.hstack([X, -np.ones((3, 1))]), np.hstack([-X, -np.ones((3, 1))])])
    res = linprog(c, A_ub=A, b_ub=np.concatenate([y, -y]), bounds=[(None, None)] * 2 + [(0, None)])
    return res.x[:2]


def test_lms_two_parameters_matches_triple_enumeration():
    rng = np.random.default_rng(10)
    for _ in range(4):
        n = 13
        x = rng.normal(size=n)
        y = 1 + x + rng.normal(size=n)
        X = np.column_stack([np.ones(n), x])
        oracle = min(lms_objective(X, y, _cheb3(X[list(t)], y[list(t)]))
                     for t in itertools.combinations(range(n), 3))
        phi, info = fit_lms(Dataset(np.column_stack([x, y])), intercept=True, return_info=True)
        assert info.label == "best-found"
        assert info.objective <= oracle * (1 + 1e-7) + 1e-10


def test_mode_venter_examples():
    assert fit_mode_venter([1.0, 2.0, 2.1, 2.2, 5.0], 1) == 2.1
    with pytest.raises(ValueError):
        fit_mode_venter([1.0, 2.0, 3.0], 1)
    w = np.random.default_rng(11).normal(size=100)
    assert math.isclose(fit_mode_venter(w - 1.0, 10), fit_mode_venter(w, 10) - 1.0)


def test_mle_jump_against_dense_likelihood():
    dens = JumpDensitySpec(0.7, 0.3)
    rng = np.random.default_rng(12)
    for _ in range(5):
        n = 300
        x = rng.uniform(0.5, 1.5, n)
        y = x + dens.sample_errors(rng, n)
        grid = 1.0 + np.linspace(-0.2, 0.2, 81)
        est = fit_mle_jump(Dataset(np.column_stack([x, y])), grid, dens)
        ll = lambda t: dens.log_density(y - t * x, x).sum()
        fine = 1.0 + np.linspace(-0.2, 0.2, 40_001)
        jumps = y / x
        jumps = jumps[np.abs(jumps - 1.0) <= 0.2]
        dense_best = max(max(ll(t) for t in fine[::10]), max(ll(t) for t in jumps))
        assert ll(est) >= dense_best - 1e-9
    with pytest.raises(ValueError):
        JumpDensitySpec(0.3, 0.7).validate(np.ones(3))


def test_registry_export_and_ids():
    assert set(REGISTRY) == {"constrained_mean", "lad", "bridge", "shorth", "lms", "mode", "mle_jump"}
    parsed = json.loads(registry_json())
    assert parsed["bridge"]["limit"]["drift"]["kind"] == "bridge"
    assert parsed["mle_jump"]["rate"] == "n"


def test_scaled_errors_deterministic_across_workers():
    reg = REGISTRY["shorth"]
    a = scaled_errors(reg, 200, 300, 5, workers=1)
    b = scaled_errors(reg, 200, 300, 5, workers=3, block=17)
    assert np.array_equal(a, b)


def test_finite_n_bridge_constrained_mean_small():
    rep = finite_n_bridge("constrained_mean", [100, 400], 2000, 1, limit_replicates=5000)
    assert all(r.ks_to_limit < 0.05 for r in rep.rows)
    assert abs(rep.limit_median_bias) < 0.03
    with pytest.raises(KeyError):
        finite_n_bridge("nope", [10], 10, 0)


@pytest.mark.slow
@pytest.mark.parametrize("eid", sorted(REGISTRY))
def test_registered_rate_gives_flat_spread(eid):
    reg = REGISTRY[eid]
    ns = [250, 1000, 4000]
    iqr = [stats.iqr(scaled_errors(reg, n, 300, 77)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(iqr), 1)[0]
    assert abs(slope) <= 0.15, (eid, iqr, slope)
