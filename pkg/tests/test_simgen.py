import numpy as np
import pytest

from passglm import simgen
from passglm.simgen import (
    ScenarioSpec,
    TruthOracle,
    coefficient_constants,
    count_log_transform,
    gen_main,
    gen_mis,
    true_linear_predictor,
)

A1 = np.array([0.5, 1.0, -0.8, 0.6, 0.2])
A2 = np.array([0.1, -0.2, -0.2, 0.2, 0.7])
D1 = np.array([-0.05, -0.5, 1.4, 0.5, -0.6])
D2 = np.array([0.02, 0.05, 0.02, -0.02, -0.05])
A3 = np.array([0.6, -0.4, 0.4, 0.5, -0.5])
D3 = np.array([0.3, 0.4, 0.6, -0.5, -0.5])


class TestCoefficientConstants:
    def test_scenario_one_is_proportional(self):
        c = coefficient_constants("I", 20)
        np.testing.assert_array_equal(c["beta0"], 1.5 * c["alpha0"])
        assert c["beta0"][0] == 0.75

    def test_exact_vectors_all_main_scenarios(self):
        p = 25
        c1 = coefficient_constants("I", p)
        np.testing.assert_array_equal(c1["alpha0"][:10], np.r_[A1, A2])
        assert not c1["alpha0"][10:].any()
        c2 = coefficient_constants("II", p)
        np.testing.assert_array_equal(c2["beta0"][:10],
                                      1.5 * np.r_[A1 + D1, A2 + D2])
        c3 = coefficient_constants("III", p)
        np.testing.assert_array_equal(c3["alpha0"][:20],
                                      np.r_[A1, A2, A2, A2])
        np.testing.assert_array_equal(c3["beta0"][:10],
                                      1.5 * np.r_[A1 + D1, A2 + D2])
        c4 = coefficient_constants("IV", p)
        np.testing.assert_array_equal(c4["alpha0"][:5], A1)
        assert not c4["alpha0"][5:].any()
        c5 = coefficient_constants("V", p)
        np.testing.assert_array_equal(c5["beta0"][:10], 1.5 * np.r_[A2, A1])

    def test_scenario_six_supports(self):
        c = coefficient_constants("VI", 30)
        np.testing.assert_array_equal(np.flatnonzero(c["alpha0"]),
                                      np.arange(10))
        np.testing.assert_array_equal(np.flatnonzero(c["beta0"]),
                                      np.r_[np.arange(5), np.arange(10, 15)])
        np.testing.assert_array_equal(c["beta0"][:5], 1.5 * A2)
        np.testing.assert_array_equal(c["beta0"][10:15], 1.5 * A1)

    def test_mis_scenarios(self):
        c = coefficient_constants("iii", 40)
        assert c["mu"] == 2.0
        np.testing.assert_array_equal(np.flatnonzero(c["eta1"]),
                                      np.arange(15))
        np.testing.assert_array_equal(c["eta1"][:15], np.r_[A3, A3, A3])
        np.testing.assert_array_equal(c["eta2"][:15], np.r_[D3, D3, D3])
        ci = coefficient_constants("i", 40)
        assert ci["mu"] == 1.0
        assert not ci["eta1"].any() and not ci["eta2"].any()

    def test_scenario_one_alignment_and_six_mismatch(self):
        c1 = coefficient_constants("I", 50)
        cos1 = c1["alpha0"] @ c1["beta0"] / (
            np.linalg.norm(c1["alpha0"]) * np.linalg.norm(c1["beta0"]))
        assert cos1 == pytest.approx(1.0, abs=1e-15)
        c6 = coefficient_constants("VI", 50)
        overlap = sorted(set(np.flatnonzero(c6["alpha0"])) &
                         set(np.flatnonzero(c6["beta0"])))
        assert overlap == list(range(5))


class TestCountLogTransform:
    def test_known_values(self):
        assert count_log_transform(0.0) == pytest.approx(np.log(2), abs=0)
        assert count_log_transform(-10.0) == 0.0

    def test_rounding_half_away_from_zero(self):
        # e^t = 2.5 at t = ln 2.5 rounds to 3
        t = np.log(2.5)
        assert count_log_transform(t) == pytest.approx(np.log(4), abs=1e-12)

    def test_large_arguments_no_overflow(self):
        assert np.isfinite(count_log_transform(800.0))
        assert count_log_transform(800.0) == 800.0


class TestScenarioSpecValidation:
    def test_minimum_p(self):
        with pytest.raises(ValueError, match="p >= 20"):
            ScenarioSpec(id="III", n=10, N=100, p=15, seed=0)
        with pytest.raises(ValueError, match="p >= 20"):
            ScenarioSpec(id="iii", n=10, N=100, p=10, seed=0)
        with pytest.raises(ValueError, match="p >= 15"):
            ScenarioSpec(id="VI", n=10, N=100, p=12, seed=0)

    def test_n_bounds(self):
        with pytest.raises(ValueError):
            ScenarioSpec(id="I", n=200, N=100, p=10, seed=0)

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            ScenarioSpec(id="VII", n=10, N=100, p=10, seed=0)


class TestGenMain:
    def test_reproducible_bit_for_bit(self):
        spec = ScenarioSpec(id="II", n=30, N=200, p=12, seed=99,
                            test_size=50)
        a = gen_main(spec)
        b = gen_main(spec)
        assert (a[0].features == b[0].features).all()
        assert (a[0].surrogate == b[0].surrogate).all()
        assert np.array_equal(a[0].labels, b[0].labels, equal_nan=True)
        assert (a[1].features == b[1].features).all()

    def test_labeling_prefix(self):
        spec = ScenarioSpec(id="I", n=25, N=100, p=10, seed=1, test_size=20)
        train, test, oracle = gen_main(spec)
        np.testing.assert_array_equal(train.labeled_idx, np.arange(25))
        assert test.n_labeled == 20
        assert oracle.kind == "exact"
        assert oracle.zeta0 == -4.0 and oracle.gamma0 == 0.5

    def test_moments_of_latent_gaussian(self):
        rng = simgen._rng(123)
        z = simgen._normal(rng, (50_000, 6)) @ simgen._main_cholesky(6).T
        var = z.var(axis=0)
        assert np.all(np.abs(var - 4.0) <= 0.15)
        for j in range(5):
            corr = np.corrcoef(z[:, j], z[:, j + 1])[0, 1]
            assert abs(corr - 0.5) <= 0.03

    def test_calibration_of_label_model(self):
        # empirical Bernoulli rate within predictor bins tracks the model
        spec = ScenarioSpec(id="I", n=50_000, N=50_000, p=10, seed=7,
                            test_size=10)
        train, _, oracle = gen_main(spec)
        y = train.labels
        eta = oracle.linear_predictor(train.surrogate, train.features)
        for lo, hi in [(-3, -1), (-1, 1), (1, 3)]:
            mask = (eta >= lo) & (eta < hi)
            if mask.sum() < 500:
                continue
            p_emp = float(y[mask].mean())
            p_mod = float((1 / (1 + np.exp(-eta[mask]))).mean())
            assert abs(p_emp - p_mod) <= 0.03

    def test_probabilities_in_unit_interval(self):
        spec = ScenarioSpec(id="I", n=10, N=500, p=10, seed=3, test_size=10)
        train, _, oracle = gen_main(spec)
        probs = oracle.prob(train.surrogate, train.features)
        assert np.all((probs > 0) & (probs < 1))
        assert true_linear_predictor(oracle, 8.0, np.zeros(10)) == \
            pytest.approx(0.0, abs=1e-12)


class TestGenMis:
    def test_features_in_open_interval(self):
        spec = ScenarioSpec(id="i", n=20, N=500, p=25, seed=5, test_size=30)
        train, test, oracle = gen_mis(spec)
        assert np.all(np.abs(train.features) < 1)
        assert np.all(np.abs(test.features) < 1)
        assert oracle.kind == "approx"
        assert oracle.mu == 1.0

    def test_conditional_independence_scenario_i(self):
        spec = ScenarioSpec(id="i", n=10, N=50_000, p=20, seed=11,
                            test_size=10)
        train, _, _ = gen_mis(spec)
        s, y = train.surrogate, None
        # labels are known for all rows in the generator; regenerate to get
        # them via the labeled prefix trick
        spec_full = ScenarioSpec(id="i", n=50_000, N=50_000, p=20, seed=11,
                                 test_size=10)
        tr, _, _ = gen_mis(spec_full)
        y = tr.labels
        x1 = tr.features[:, 0]
        s = tr.surrogate
        # partial correlation of s and x1 given y
        for cls in (0.0, 1.0):
            m = y == cls
            corr = np.corrcoef(s[m], x1[m])[0, 1]
            assert abs(corr) <= 0.03

    def test_block_structure(self):
        chol = simgen._mis_cholesky(30)
        sigma = chol @ chol.T
        assert sigma[0, 25] == 0.0
        assert sigma[5, 6] == pytest.approx(0.5)
        assert sigma[21, 22] == pytest.approx(0.5)
        assert sigma[0, 0] == pytest.approx(1.0)


class TestOracleSerialization:
    def test_exact_oracle_roundtrip(self):
        spec = ScenarioSpec(id="I", n=10, N=100, p=10, seed=2, test_size=10)
        _, _, oracle = gen_main(spec)
        blob = oracle.to_dict()
        back = TruthOracle.from_dict(blob)
        np.testing.assert_array_equal(back.beta0, oracle.beta0)
        assert back.zeta0 == oracle.zeta0
