import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from passglm import solver
from passglm.solver import (
    ETA_CAP,
    GlmFit,
    PenaltySpec,
    SolverError,
    fit_weighted_l1_linear,
    fit_weighted_l1_logistic,
    kkt_check,
    lambda_max,
    logistic_loss,
    newton_logistic,
    regularization_path,
    sigmoid,
)

import oracles

LOG2 = 0.6931471805599453


def random_problem(rng, n, p, loss="linear", weight_pattern=None):
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * (rng.random(p) < 0.6)
    if loss == "linear":
        y = X @ beta + rng.normal(size=n)
    else:
        y = (rng.random(n) < sigmoid(X @ beta - 0.2)).astype(float)
    if weight_pattern is None:
        w = np.ones(p)
    else:
        w = np.asarray(weight_pattern, dtype=float)
    return X, y, w


class TestLogisticLoss:
    def test_zero_eta_is_log_two(self):
        assert logistic_loss(0, 0.0) == pytest.approx(LOG2, abs=1e-12)
        assert logistic_loss(1, 0.0) == pytest.approx(LOG2, abs=1e-12)

    def test_saturation_no_overflow(self):
        val = logistic_loss(1, 1000.0)
        assert np.isfinite(val)
        assert val == pytest.approx(0.0, abs=1e-12)
        val = logistic_loss(0, -1000.0)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        y = (rng.random(50) < 0.5).astype(float)
        eta = rng.normal(scale=5, size=50)
        vec = logistic_loss(y, eta)
        for i in range(50):
            assert vec[i] == pytest.approx(logistic_loss(y[i], eta[i]),
                                           rel=1e-12)


class TestLinearFit:
    def test_full_shrinkage_leaves_intercept_only(self):
        rng = np.random.default_rng(1)
        X, y, w = random_problem(rng, 40, 5)
        lmax = lambda_max(X, y, w, "linear")
        fit = fit_weighted_l1_linear(X, y, PenaltySpec(2 * lmax, w))
        assert np.all(fit.coefficients == 0.0)
        assert fit.intercept == pytest.approx(y.mean(), abs=1e-10)

    def test_single_standardized_covariate_soft_threshold(self):
        rng = np.random.default_rng(2)
        n = 60
        x = rng.normal(size=n)
        x = (x - x.mean()) / np.sqrt(np.mean((x - x.mean()) ** 2))
        y = 0.9 * x + rng.normal(size=n)
        lam, w = 0.25, 1.3
        fit = fit_weighted_l1_linear(x[:, None], y,
                                     PenaltySpec(lam, np.array([w])),
                                     fit_intercept=False)
        z = float(x @ y) / n
        expected = np.sign(z) * max(abs(z) - lam * w, 0.0)
        assert fit.coefficients[0] == pytest.approx(expected, abs=1e-10)
        # independent check: scalar grid + refinement on the objective
        _, coef, _ = oracles.grid_refine_minimize(
            "linear", x[:, None], y, lam, np.array([w]), fit_intercept=False)
        assert coef[0] == pytest.approx(expected, abs=1e-6)

    def test_small_problem_matches_grid_oracle(self):
        rng = np.random.default_rng(3)
        X, y, w = random_problem(rng, 50, 3)
        lam = 0.1
        fit = fit_weighted_l1_linear(X, y, PenaltySpec(lam, w))
        b, coef, f_oracle = oracles.grid_refine_minimize("linear", X, y,
                                                         lam, w)
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-4)
        assert fit.intercept == pytest.approx(b, abs=1e-4)
        assert fit.objective_value <= f_oracle + 1e-8

    def test_rejects_bad_inputs(self):
        X = np.ones((4, 2))
        with pytest.raises(SolverError):
            fit_weighted_l1_linear(X, np.array([1.0, np.nan, 0, 0]),
                                   PenaltySpec(0.1, np.ones(2)))
        with pytest.raises(SolverError):
            fit_weighted_l1_linear(np.empty((0, 2)), np.empty(0),
                                   PenaltySpec(0.1, np.ones(2)))
        with pytest.raises(SolverError):
            PenaltySpec(-1.0, np.ones(2))
        with pytest.raises(SolverError):
            PenaltySpec(1.0, np.array([1.0, np.nan]))

    def test_scaling_equivariance(self):
        rng = np.random.default_rng(4)
        X, y, w = random_problem(rng, 80, 6)
        lam, c = 0.15, 3.7
        base = fit_weighted_l1_linear(X, y, PenaltySpec(lam, w))
        scaled = fit_weighted_l1_linear(X, c * y, PenaltySpec(c * lam, w))
        np.testing.assert_allclose(scaled.coefficients,
                                   c * base.coefficients, atol=1e-7)

    def test_infinite_weight_pins_coordinate(self):
        rng = np.random.default_rng(5)
        X, y, _ = random_problem(rng, 50, 4)
        w = np.array([1.0, np.inf, 1.0, 1.0])
        fit = fit_weighted_l1_linear(X, y, PenaltySpec(0.01, w))
        assert fit.coefficients[1] == 0.0


class TestLogisticFit:
    def test_degenerate_all_ones_intercept_at_cap(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 3))
        y = np.ones(30)
        w = np.ones(3)
        fit = fit_weighted_l1_logistic(X, y, PenaltySpec(10.0, w))
        assert np.all(fit.coefficients == 0.0)
        assert fit.intercept == pytest.approx(ETA_CAP, abs=1e-6)
        assert fit.eta_clamped

    def test_unpenalized_matches_newton_oracle(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(120, 1))
        y = (rng.random(120) < sigmoid(0.5 + 1.2 * X[:, 0])).astype(float)
        fit = fit_weighted_l1_logistic(X, y, PenaltySpec(0.0, np.ones(1)))
        b, coef = oracles.newton_logistic_dense(X, y)
        assert fit.coefficients[0] == pytest.approx(coef[0], abs=1e-5)
        assert fit.intercept == pytest.approx(b, abs=1e-5)

    def test_weighted_problem_matches_grid_oracle(self):
        rng = np.random.default_rng(8)
        X, y, _ = random_problem(rng, 70, 3, loss="logistic")
        w = np.array([1.0, 0.0, 2.0])
        lam = 0.05
        fit = fit_weighted_l1_logistic(X, y, PenaltySpec(lam, w))
        b, coef, f_oracle = oracles.grid_refine_minimize("logistic", X, y,
                                                         lam, w)
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-4)
        # the unpenalized coordinate carries no shrinkage
        viol = oracles.subgradient_violation("logistic", X, y, fit.intercept,
                                             fit.coefficients, lam, w)
        assert viol <= 1e-6

    def test_rejects_nonbinary_labels(self):
        X = np.ones((4, 1))
        with pytest.raises(SolverError):
            fit_weighted_l1_logistic(X, np.array([0.0, 1.0, 2.0, 0.0]),
                                     PenaltySpec(0.1, np.ones(1)))

    def test_fractional_labels_behind_flag(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(40, 2))
        y = rng.random(40)
        with pytest.raises(SolverError):
            fit_weighted_l1_logistic(X, y, PenaltySpec(0.1, np.ones(2)))
        fit = fit_weighted_l1_logistic(X, y, PenaltySpec(0.1, np.ones(2)),
                                       allow_fractional=True)
        assert fit.converged

    def test_newton_helper_matches_dense_oracle(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(150, 3))
        y = (rng.random(150) < sigmoid(X @ np.array([0.8, -0.4, 0.0]))
             ).astype(float)
        fit = newton_logistic(X, y)
        b, coef = oracles.newton_logistic_dense(X, y)
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-8)
        assert fit.intercept == pytest.approx(b, abs=1e-8)


class TestKktCheck:
    def test_converged_fit_certifies(self):
        rng = np.random.default_rng(11)
        for loss in ("linear", "logistic"):
            X, y, w = random_problem(rng, 60, 8, loss=loss)
            pen = PenaltySpec(0.08, w)
            if loss == "linear":
                fit = fit_weighted_l1_linear(X, y, pen)
            else:
                fit = fit_weighted_l1_logistic(X, y, pen)
            assert kkt_check(fit, X, y, pen, loss) <= 1e-6

    def test_perturbed_fit_detected(self):
        rng = np.random.default_rng(12)
        X, y, w = random_problem(rng, 60, 4)
        pen = PenaltySpec(0.1, w)
        fit = fit_weighted_l1_linear(X, y, pen)
        bad = GlmFit(coefficients=fit.coefficients + np.array([0.1, 0, 0, 0]),
                     intercept=fit.intercept, loss_value=0.0,
                     objective_value=0.0, n_iterations=1, converged=True,
                     kkt_max_violation=0.0)
        assert kkt_check(bad, X, y, pen, "linear") > 1e-3

    def test_unpenalized_violation_is_gradient_norm(self):
        rng = np.random.default_rng(13)
        X, y, w = random_problem(rng, 60, 3)
        pen = PenaltySpec(0.0, w)
        fit = fit_weighted_l1_linear(X, y, pen)
        viol = kkt_check(fit, X, y, pen, "linear")
        grad = X.T @ (fit.linear_predictor(X) - y) / len(y)
        assert viol == pytest.approx(float(np.max(np.abs(grad))), abs=1e-12)
        assert viol <= 1e-8


class TestRegularizationPath:
    def test_top_of_grid_is_all_zero(self):
        rng = np.random.default_rng(14)
        for loss in ("linear", "logistic"):
            X, y, w = random_problem(rng, 60, 10, loss=loss)
            w[0] = 0.0  # one always-free coordinate
            path = regularization_path(X, y, w, loss, n_lambda=10,
                                       lambda_min_ratio=0.1)
            top = path[0][1]
            assert np.all(top.coefficients[1:] == 0.0)

    def test_every_path_fit_certifies(self):
        rng = np.random.default_rng(15)
        X, y, w = random_problem(rng, 50, 6)
        path = regularization_path(X, y, w, "linear", n_lambda=20,
                                   lambda_min_ratio=1e-3)
        for lam, fit in path:
            assert fit.kkt_max_violation <= 1e-6

    def test_warm_equals_cold(self):
        rng = np.random.default_rng(16)
        X, y, w = random_problem(rng, 60, 8)
        path = regularization_path(X, y, w, "linear", n_lambda=50,
                                   lambda_min_ratio=1e-3)
        for lam, fit in path[::7]:
            cold = fit_weighted_l1_linear(X, y, PenaltySpec(lam, w))
            np.testing.assert_allclose(fit.coefficients, cold.coefficients,
                                       atol=1e-4)

    def test_logistic_warm_equals_cold(self):
        rng = np.random.default_rng(17)
        X, y, w = random_problem(rng, 80, 5, loss="logistic")
        path = regularization_path(X, y, w, "logistic", n_lambda=30,
                                   lambda_min_ratio=0.01)
        for lam, fit in path[::6]:
            cold = fit_weighted_l1_logistic(X, y, PenaltySpec(lam, w))
            np.testing.assert_allclose(fit.coefficients, cold.coefficients,
                                       atol=1e-4)


class TestGradients:
    def test_linear_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        worst = 0.0
        for _ in range(100):
            theta = rng.normal(size=6)

            def f(t):
                eta = t[0] + X @ t[1:]
                return float(np.mean(0.5 * (y - eta) ** 2))

            g_true = np.r_[np.mean(theta[0] + X @ theta[1:] - y),
                           X.T @ (theta[0] + X @ theta[1:] - y) / 40]
            g_num = oracles.central_difference_gradient(f, theta)
            rel = np.max(np.abs(g_true - g_num) / (1 + np.abs(g_true)))
            worst = max(worst, rel)
        assert worst <= 1e-5

    def test_logistic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(40, 5))
        y = (rng.random(40) < 0.5).astype(float)
        worst = 0.0
        for _ in range(100):
            theta = rng.normal(size=6)

            def f(t):
                return float(np.mean(logistic_loss(y, t[0] + X @ t[1:])))

            pi = sigmoid(theta[0] + X @ theta[1:])
            g_true = np.r_[np.mean(pi - y), X.T @ (pi - y) / 40]
            g_num = oracles.central_difference_gradient(f, theta)
            rel = np.max(np.abs(g_true - g_num) / (1 + np.abs(g_true)))
            worst = max(worst, rel)
        assert worst <= 1e-5


class TestMonotonicity:
    def test_linear_objective_nonincreasing_per_sweep(self):
        from passglm import _kernels

        rng = np.random.default_rng(20)
        X, y, w = random_problem(rng, 50, 8)
        lam = 0.05
        n = len(y)
        Xc = X - X.mean(axis=0)
        yc = y - y.mean()
        gram = Xc.T @ Xc / n
        xty = Xc.T @ yc / n
        coef = np.zeros(8)
        excl = np.zeros(8, dtype=bool)

        def objective():
            resid = yc - Xc @ coef
            return float(resid @ resid) / (2 * n) + lam * np.abs(coef).sum()

        prev = objective()
        for _ in range(40):
            _kernels.linear_cd_gram(gram, xty, coef, lam, w, excl, 0.0, 1)
            cur = objective()
            assert cur <= prev + 1e-12
            prev = cur

    def test_logistic_outer_objective_nonincreasing(self):
        rng = np.random.default_rng(21)
        X, y, w = random_problem(rng, 60, 6, loss="logistic")
        lam = 0.02
        pen = PenaltySpec(lam, w)
        objs = []
        coef = None
        b = 0.0
        for outer in range(1, 9):
            fit = fit_weighted_l1_logistic(X, y, pen, coef_init=None,
                                           max_outer=outer)
            objs.append(fit.objective_value)
        for a, bb in zip(objs, objs[1:]):
            assert bb <= a + 1e-12


class TestWeightZeroCoordinates:
    def test_free_coordinates_converge_to_restricted_fit(self):
        rng = np.random.default_rng(22)
        X, y, _ = random_problem(rng, 80, 6)
        w = np.ones(6)
        w[2] = 0.0
        w[4] = 0.0
        lam = 10.0 * lambda_max(X, y, w, "linear")
        fit = fit_weighted_l1_linear(X, y, PenaltySpec(lam, w))
        assert np.all(fit.coefficients[w == 1.0] == 0.0)
        # unpenalized least squares restricted to the free columns
        free = X[:, [2, 4]]
        A = np.column_stack([np.ones(len(y)), free])
        sol = np.linalg.lstsq(A, y, rcond=None)[0]
        assert fit.coefficients[2] == pytest.approx(sol[1], abs=1e-7)
        assert fit.coefficients[4] == pytest.approx(sol[2], abs=1e-7)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.integers(min_value=0, max_value=10_000))
def test_kkt_certificate_random_problems(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 200))
    p = int(rng.integers(1, 20))
    loss = "linear" if rng.random() < 0.5 else "logistic"
    X, y, _ = random_problem(rng, n, p, loss=loss)
    w = rng.choice([0.0, 0.5, 1.0, 2.0], size=p)
    lam = float(rng.uniform(0.01, 0.3))
    pen = PenaltySpec(lam, w)
    if loss == "linear":
        fit = fit_weighted_l1_linear(X, y, pen)
    else:
        fit = fit_weighted_l1_logistic(X, y, pen)
    if not fit.eta_clamped:
        assert fit.kkt_max_violation <= 1e-6
        # cross-check with the independent violation formula
        viol = oracles.subgradient_violation(loss, X, y, fit.intercept,
                                             fit.coefficients, lam, w)
        assert viol <= 2e-6
