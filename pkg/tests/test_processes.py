import json
import math

import numpy as np
import pytest

from argsym.cones import PolyhedralCone
from argsym.grid import GridDomain, GridFunction
from argsym.processes import (
    ClassIIISpec,
    ClassISpec,
    DriftSpec,
    HorizonTooSmallError,
    NotPSDError,
    ClassIISpec,
    check_evenness,
    class1_centered_poisson,
    class1_gaussian,
    class1_table,
    class1_two_point,
    class2_brownian,
    class2_pflug,
    class2_pflug_isotropic,
    class2_scaled_brownian,
    class3_example7,
    class3_horizon,
    class3_mean,
    class3_paired,
    class3_point_mass,
    class3_skewed,
    drift_eval,
    drift_nonneg_expected,
    drift_on_grid,
    h_mu,
    part_from_dict,
    sample_block,
    sample_class1,
    sample_class2,
    sample_class3,
)
from argsym.seeding import derived_rng


def rngs(n, stream="t", seed=0):
    return [derived_rng(seed, stream, i) for i in range(n)]


def test_class1_fixed_y_and_origin():
    spec = ClassISpec(lambda rng: np.array([1.0]), 1, False, "fixed")
    g = GridDomain.from_points([-1.0, 0.0, 1.0])
    assert sample_class1(spec, g, 0).values.tolist() == [-1.0, 0.0, 1.0]
    g2 = GridDomain.uniform(1.0, 0.5, dim=2)
    path = sample_class1(class1_gaussian(2), g2, 3)
    assert path.values[g2.origin_index] == 0.0


def test_class1_covariance_matches_inner_product():
    g = GridDomain.uniform(1.0, 0.5, dim=2)
    n = 100_000
    paths = sample_block(class1_gaussian(2), g, rngs(n))
    i, j = g.index_of([1.0, 0.5]), g.index_of([-0.5, 1.0])
    u, v = g.nodes[i], g.nodes[j]
    cov = np.mean(paths[:, i] * paths[:, j])
    se = math.sqrt((u @ u * (v @ v) + (u @ v) ** 2) / n)
    assert abs(cov - u @ v) <= 3 * se


def test_class1_presets_mean_zero_and_symmetry_flags():
    n = 50_000
    for spec, sym in [(class1_centered_poisson(2.0), False), (class1_two_point(-1, 3), False),
                      (class1_two_point(-2, 2), True), (class1_table([[-1.0], [0.5]], [1, 2]), False)]:
        y = np.array([spec.draw_y(r)[0] for r in rngs(n, "m")])
        assert abs(y.mean()) <= 4 * y.std() / math.sqrt(n)
        assert spec.symmetric is sym
    with pytest.raises(ValueError):
        class1_table([[1.0], [2.0]], [1, 1])


def test_pflug_kernel_values():
    spec = class2_pflug(1.0, [(1.0, 1.0, [1.0])])
    pts = np.array([[1.0], [2.0], [-1.0], [0.0]])
    K = spec.kernel(pts, pts)
    assert K[0, 1] == pytest.approx(1.0)
    assert K[0, 2] == 0.0 and K[3, 3] == 0.0
    assert K[1, 1] == pytest.approx(2.0)


def test_class2_brownian_variance_and_origin():
    g = GridDomain.uniform(2.0, 0.5)
    n = 100_000
    paths = sample_block(class2_brownian(), g, rngs(n, "bm"))
    assert np.all(paths[:, g.origin_index] == 0.0)
    for u in (-2.0, -0.5, 1.0, 2.0):
        var = np.var(paths[:, g.index_of([u])])
        assert abs(var - abs(u)) <= 3 * abs(u) * math.sqrt(2 / n)


def test_class2_covariance_random_pairs():
    g = GridDomain.uniform(1.0, 0.5, dim=2)
    spec = class2_pflug_isotropic(2, 6)
    n = 100_000
    paths = sample_block(spec, g, rngs(n, "iso"))
    K = spec.gram(g.nodes)
    pick = np.random.default_rng(5).integers(0, g.size, size=(5, 2))
    for i, j in pick:
        prod = paths[:, i] * paths[:, j]
        assert abs(prod.mean() - K[i, j]) <= 4 * prod.std() / math.sqrt(n) + 1e-12


def test_class2_not_psd_and_jitter():
    g = GridDomain.uniform(1.0, 0.5)
    bad = ClassIISpec(lambda X, Y: -np.abs(X - Y.T) - 1.0, 1, "bad")
    with pytest.raises(NotPSDError):
        sample_class2(bad, g, 0)
    # rank-one kernel: singular but PSD, factorized with jitter
    ones = ClassIISpec(lambda X, Y: np.ones((X.shape[0], Y.shape[0])), 1, "rank one")
    p = sample_class2(ones, g, 0).values
    assert np.ptp(p) < 1e-4


def test_class3_point_mass_is_poisson_count():
    g = GridDomain.uniform(2.0, 1.0)
    spec = class3_point_mass()
    n = 100_000
    paths = sample_block(ClassIIISpec(**{**spec.__dict__, "centered": False}), g, rngs(n, "pp"))
    at2 = paths[:, g.index_of([2.0])]
    assert abs(at2.mean() - 2.0) <= 3 * math.sqrt(2.0 / n)
    assert np.all(paths[:, g.index_of([-1.0])] == 0.0)
    assert np.all(paths[:, g.origin_index] == 0.0)


def test_class3_centered_mean_zero():
    g = GridDomain.uniform(2.0, 1.0)
    n = 100_000
    for spec in (class3_point_mass(), class3_skewed()):
        paths = sample_block(spec, g, rngs(n, "c3"))
        se = paths.std(axis=0) / math.sqrt(n) + 1e-12
        assert np.all(np.abs(paths.mean(axis=0)) <= 4 * se)


def test_class3_quadrature_matches_closed_forms():
    g = GridDomain.uniform(2.0, 0.5)
    for spec in (class3_point_mass(), class3_paired(), class3_skewed(), class3_example7()):
        m = class3_mean(spec, g)
        exact = spec.mean_fn(g.nodes)
        assert np.allclose(m, exact, atol=5e-3 * (1 + np.abs(exact).max()))
    paired = class3_mean(class3_paired(), g)
    assert np.array_equal(paired, paired[g.negation_index])


def test_class3_horizon_policy():
    g = GridDomain.uniform(2.0, 1.0)
    assert class3_horizon(class3_paired(), g).horizon == pytest.approx(1.1 * 2.0 * 1.5)
    tight = ClassIIISpec(**{**class3_paired().__dict__, "horizon": 1.0})
    with pytest.raises(HorizonTooSmallError):
        sample_class3(tight, g, 0)
    gauss = ClassIIISpec(1.0, lambda rng, n: (np.ones(n), rng.standard_normal((n, 1))), 1, "gauss U")
    info = class3_horizon(gauss, g)
    assert not info.exact and 3.5 < info.bound < 4.5


def test_determinism_bit_identical():
    g = GridDomain.uniform(2.0, 0.25)
    for spec in (class1_gaussian(), class2_brownian(), class3_paired()):
        a = sample_block(spec, g, rngs(5, "d"))
        b = sample_block(spec, g, rngs(5, "d"))
        assert np.array_equal(a, b)
    single = sample_class3(class3_paired(), g, derived_rng(0, "d", 2)).values
    assert np.array_equal(single, sample_block(class3_paired(), g, rngs(5, "d"))[2])


def test_csv_export():
    g = GridDomain.from_points([-1.0, 0.0, 1.0])
    text = sample_class1(class1_gaussian(), g, 0).to_csv()
    assert text.splitlines()[0] == "u_1,value" and len(text.splitlines()) == 4


def test_drift_catalog_values():
    assert drift_eval(DriftSpec("quadratic", {"Q": 1.0}), [1.0, 2.0]) == 5.0
    assert h_mu(3.0, 2.0, 2.0) == 6.0
    assert h_mu(3.0, 0.0, 1.0) == 3.0
    assert h_mu(4.0, 1.0, 0.5) == 0.0
    assert drift_eval(DriftSpec("bridge", {"mu": 2.0, "lam0": 1.0, "theta0": 1.0}), [1.0]) == 2.0
    assert drift_eval(DriftSpec("mode", {"c0": 2.0, "mu": 7 / 8}), [1.0]) == -1.0
    assert drift_eval(DriftSpec("mode", {"c0": 2.0, "mu": 0.8}), [1.0]) == 1.0
    lad = DriftSpec("lad_limit", {"gamma": 1.0, "lam": 1.0})
    assert drift_eval(lad, [2.0]) == pytest.approx(2.0)
    for spec in (DriftSpec("quadratic", {"Q": 1.0}), DriftSpec("bridge", {"mu": 0.5, "theta0": 1.0}),
                 DriftSpec("example7"), lad):
        assert drift_eval(spec, [0.0]) == 0.0
        vals = drift_on_grid(spec, GridDomain.uniform(2.0, 0.25))
        assert drift_nonneg_expected(spec) and np.all(vals >= 0)
    assert not drift_nonneg_expected(DriftSpec("bridge", {"mu": 2.0, "theta0": 1.0}))


def test_example7_asymmetry_identity():
    p, q = 0.7, 0.3
    lr = math.log(p / q)
    for variant, r1, r2 in [("consistent", q - p + q * lr, (p - q) * lr), ("uncorrected", q - p, (p + q) * lr)]:
        spec = DriftSpec("example7", {"variant": variant})
        ex = 1.0  # E[X] for X ~ U(0.5, 1.5)
        for u in (0.5, 1.3):
            diff = drift_eval(spec, [u]) - drift_eval(spec, [-u])
            assert diff == pytest.approx(2 * u * ex * (r1 + r2 / 2), abs=2e-3)


def test_example7_consistent_drift_matches_jump_compensator():
    # D = E[Poisson](u) + u E[X (q - p)]: the mean of the uncentered process plus the linear compensator
    g = GridDomain.uniform(2.0, 0.5)
    mean = class3_mean(class3_example7(), g)
    lin = g.nodes[:, 0] * (0.3 - 0.7)
    d = drift_on_grid(DriftSpec("example7"), g)
    assert np.allclose(d, mean + lin, atol=5e-3)


def test_custom_drift_and_json_round_trip():
    g = GridDomain.from_points([-1.0, 0.0, 1.0])
    f = GridFunction(g, [np.inf, 0.0, 1.0])
    spec = DriftSpec("custom", {"function": f})
    back = DriftSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert drift_on_grid(back, g).tolist() == [np.inf, 0.0, 1.0]
    b = DriftSpec("bridge", {"mu": 2.0, "theta0": [1.0]})
    assert DriftSpec.from_dict(json.loads(json.dumps(b.to_dict()))).params == b.params
    for spec in (class1_gaussian(2, 1.5), class2_brownian(2.0), class3_paired(2.0, 2)):
        again = part_from_dict(json.loads(json.dumps(spec.to_dict())))
        assert again.to_dict() == spec.to_dict()


def test_evenness_verdicts():
    g = GridDomain.uniform(2.0, 0.25)
    full, half = PolyhedralCone.full(1), PolyhedralCone.nonnegative(1)
    assert check_evenness(DriftSpec("bridge", {"mu": 2.0, "lam0": 1.0, "theta0": 1.0}), g, cone=full).status == "not_even"
    assert check_evenness(DriftSpec("bridge", {"mu": 0.5, "lam0": 1.0, "theta0": 1.0}), g, cone=full).status == "even"
    assert check_evenness(DriftSpec("bridge", {"mu": 0.5, "lam0": 1.0, "theta0": 0.0}), g, cone=full).status == "even"
    assert check_evenness(DriftSpec("mode", {"c0": 1.0, "mu": 7 / 8}), g).status == "not_even"
    assert check_evenness(DriftSpec("quadratic", {"Q": 1.0}), g, cone=half).status == "not_even"
    assert check_evenness(class2_brownian(), g).status == "even"
    assert check_evenness(class2_scaled_brownian(), g).status == "not_even"
    assert check_evenness(class3_paired(), g).status == "even"
    with pytest.raises(ValueError):
        check_evenness(class2_brownian(), GridDomain.from_points([-1.0, 0.0, 2.0]))


def test_pflug_kernels_always_even():
    rng = np.random.default_rng(4)
    g = GridDomain.uniform(1.0, 0.5, dim=2)
    for _ in range(5):
        atoms = []
        for _ in range(3):
            s = rng.normal(size=2)
            atoms.append((rng.random(), rng.normal(), s / np.linalg.norm(s)))
        assert check_evenness(class2_pflug(rng.uniform(0.5, 2), atoms), g).status == "even"


def test_statistical_evenness():
    g = GridDomain.uniform(2.0, 0.5)
    sym = check_evenness(class1_gaussian(), g, n_mc=5000, seed=1)
    assert sym.status == "statistical" and sym.p_value > 0.01
    skew = check_evenness(class1_centered_poisson(1.0), g, n_mc=5000, seed=1)
    assert skew.p_value < 1e-6
    assert check_evenness(class3_skewed(), g, n_mc=5000, seed=1).p_value < 1e-6
