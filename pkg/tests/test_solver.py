import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from advkern.config import Settings
from advkern.core.kernels import GramMatrix, gram_matrix
from advkern.core.solver import (
    FittedModel,
    adversarial_loss,
    adversarial_objective,
    cross_validate_adversarial,
    cross_validate_krr,
    fit_adversarial,
    fit_krr,
    objective_settled,
    rkhs_norm,
    update_weights,
    weighted_krr_solve,
)
from advkern.core.specs import KernelFamily, KernelSpec, SolverConfig
from advkern.exceptions import ConfigurationError, DataError


def _gram(entries) -> GramMatrix:
    entries = np.array(entries, dtype=float)
    entries.setflags(write=False)
    return GramMatrix(entries=entries, symmetric=True)


class TestSolverConfig:
    def test_controls_come_from_the_environment(self, monkeypatch):
        monkeypatch.setenv("ADVKERN_MAX_ITER", "12")
        monkeypatch.setenv("ADVKERN_EPSILON", "1e-6")
        config = SolverConfig.from_settings(0.3, Settings(), tol=1e-4)
        assert (config.delta, config.max_iter, config.epsilon, config.tol) == (0.3, 12, 1e-6, 1e-4)


class TestWeightedSolve:
    def test_single_point(self):
        alpha = weighted_krr_solve(_gram([[1.0]]), np.array([2.0]), np.array([1.0]), 1.0)
        np.testing.assert_allclose(alpha, [1.0])

    def test_identity_two_points(self):
        alpha = weighted_krr_solve(_gram(np.eye(2)), np.array([2.0, 4.0]), np.ones(2), 0.5)
        np.testing.assert_allclose(alpha, [1.0, 2.0])

    def test_unit_weights_are_plain_krr(self, gaussian, rng):
        X = rng.uniform(0, 1, (12, 2))
        y = rng.standard_normal(12)
        K = gram_matrix(gaussian, X)
        alpha = weighted_krr_solve(K, y, np.ones(12), 0.1)
        np.testing.assert_allclose((K.entries + 12 * 0.1 * np.eye(12)) @ alpha, y, atol=1e-10)

    def test_weighted_normal_equations(self, gaussian, rng):
        X = rng.uniform(0, 1, (10, 1))
        y = rng.standard_normal(10)
        w = rng.uniform(1, 5, 10)
        K = gram_matrix(gaussian, X)
        alpha = weighted_krr_solve(K, y, w, 0.01)
        np.testing.assert_allclose(np.diag(w) @ K.entries @ alpha + 10 * 0.01 * alpha, w * y, atol=1e-9)

    def test_conjugate_gradients_agree_with_cholesky(self, gaussian, rng):
        X = rng.uniform(0, 1, (40, 2))
        y = rng.standard_normal(40)
        K = gram_matrix(gaussian, X)
        dense = weighted_krr_solve(K, y, np.ones(40), 0.1)
        iterative = weighted_krr_solve(K, y, np.ones(40), 0.1, dense_threshold=10)
        np.testing.assert_allclose(dense, iterative, rtol=1e-8, atol=1e-10)

    def test_shrinks_with_lambda(self, gaussian, rng):
        X = rng.uniform(0, 1, (15, 1))
        y = rng.standard_normal(15)
        K = gram_matrix(gaussian, X)
        norms = [np.linalg.norm(weighted_krr_solve(K, y, np.ones(15), lam)) for lam in (1e-3, 1e-2, 1e-1, 1.0, 10.0)]
        assert all(b < a for a, b in zip(norms, norms[1:]))

    @pytest.mark.parametrize("lam, w", [(0.0, [1.0, 1.0]), (1.0, [1.0, 0.0])])
    def test_rejects_nonpositive_inputs(self, lam, w):
        with pytest.raises(ConfigurationError):
            weighted_krr_solve(_gram(np.eye(2)), np.ones(2), np.array(w), lam)


class TestUpdateWeights:
    def test_symmetric_point(self):
        state = update_weights(np.array([1.0, -1.0]), rkhs_norm=2.0, delta=0.5, epsilon=1e-14)
        np.testing.assert_allclose(state.w, [2.0, 2.0])
        np.testing.assert_allclose(state.eta0, [0.5, 0.5])
        assert state.lam == pytest.approx(2 * 0.25)

    def test_small_residuals_stay_finite(self):
        state = update_weights(np.zeros(3), rkhs_norm=1.0, delta=1.0, epsilon=1e-8)
        assert np.all(np.isfinite(state.w))
        np.testing.assert_allclose(state.w, 1.0 + np.sqrt(1.0 + 1e-8) / 1e-4)

    def test_dominant_norm(self):
        state = update_weights(np.array([1e-3]), rkhs_norm=1e3, delta=1.0, epsilon=1e-12)
        assert state.w[0] > 1e5
        assert state.lam == pytest.approx(1.0, rel=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(
        residuals=st.lists(st.floats(-10, 10), min_size=1, max_size=20),
        norm=st.floats(0, 10),
        delta=st.floats(1e-3, 2),
    )
    def test_shares_sum_to_one(self, residuals, norm, delta):
        state = update_weights(np.array(residuals), norm, delta, 1e-8)
        np.testing.assert_allclose(state.eta0 + state.eta1, 1.0)
        assert np.all(state.w >= 1.0)

    def test_rejects_zero_delta(self):
        with pytest.raises(ConfigurationError):
            update_weights(np.ones(2), 1.0, 0.0, 1e-8)


class TestAdversarialLoss:
    def test_zero_radius_is_squared_residual(self, gaussian):
        model = FittedModel.from_coefficients(np.array([1.0]), np.array([[0.0]]), gaussian)
        assert adversarial_loss(model, [0.0], 3.0, 0.0) == pytest.approx(4.0)

    def test_zero_model(self, gaussian):
        model = FittedModel.from_coefficients(np.zeros(2), np.array([[0.0], [1.0]]), gaussian)
        assert adversarial_loss(model, [0.5], -1.5, 0.3) == pytest.approx(2.25)

    def test_adds_norm_term(self, gaussian):
        model = FittedModel.from_coefficients(np.array([2.0]), np.array([[0.0]]), gaussian)
        assert adversarial_loss(model, [0.0], 1.0, 0.5) == pytest.approx((1.0 + 0.5 * 2.0) ** 2)

    def test_negative_radius(self, gaussian):
        model = FittedModel.from_coefficients(np.zeros(1), np.array([[0.0]]), gaussian)
        with pytest.raises(ConfigurationError):
            adversarial_loss(model, [0.0], 1.0, -0.1)


class TestFittedModel:
    def test_predict_on_training_points(self, gaussian, rng):
        X = rng.uniform(0, 1, (6, 2))
        alpha = rng.standard_normal(6)
        model = FittedModel.from_coefficients(alpha, X, gaussian)
        np.testing.assert_allclose(model.predict(X), model.K_train.entries @ alpha)

    def test_zero_coefficients_predict_zero(self, gaussian, rng):
        model = FittedModel.from_coefficients(np.zeros(4), rng.uniform(0, 1, (4, 2)), gaussian)
        np.testing.assert_array_equal(model.predict(rng.uniform(0, 1, (3, 2))), np.zeros(3))

    def test_dict_layout(self, gaussian, sine_data):
        model = fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=0.1))
        data = model.to_dict()
        assert set(data) == {"kernel", "alpha", "x_train", "rkhs_norm", "summary"}
        assert "wall_time" not in data["summary"]
        restored = FittedModel.from_dict(data)
        np.testing.assert_allclose(restored.predict(sine_data.X), model.predict(sine_data.X))

    def test_from_dict_missing_keys(self):
        with pytest.raises(DataError):
            FittedModel.from_dict({"alpha": [1.0]})


class TestFitKrr:
    def test_interpolates_as_lambda_vanishes(self, rng):
        X = np.linspace(0, 1, 8)[:, None]
        y = rng.standard_normal(8)
        model = fit_krr(X, y, KernelSpec(family=KernelFamily.GAUSSIAN, gamma=50.0), 1e-8)
        np.testing.assert_allclose(model.predict(X), y, atol=1e-4)

    def test_summary(self, gaussian, sine_data):
        model = fit_krr(sine_data.X, sine_data.y, gaussian, 0.01)
        assert model.summary.method == "krr"
        assert model.summary.iterations == 1


class TestFitAdversarial:
    def test_objective_is_non_increasing(self, gaussian, sine_data):
        model = fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=0.1, tol=1e-12))
        history = np.array(model.summary.objective_history)
        assert len(history) >= 2
        assert np.all(np.diff(history) <= 1e-5 * history[0])

    def test_reports_exact_objective(self, gaussian, sine_data):
        delta = 0.1
        model = fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=delta))
        residuals = sine_data.y - model.predict(sine_data.X)
        exact = np.mean((np.abs(residuals) + delta * model.rkhs_norm) ** 2)
        assert model.summary.objective == pytest.approx(exact, rel=1e-10)

    def test_zero_radius_falls_back_to_ridge(self, gaussian, sine_data):
        model = fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=0.0))
        assert model.summary.method == "krr"

    def test_max_iter_flags_non_convergence(self, gaussian, sine_data):
        model = fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=0.1, max_iter=1))
        assert not model.summary.converged
        assert model.summary.iterations == 1

    def test_larger_radius_shrinks_the_norm(self, gaussian, sine_data):
        norms = [fit_adversarial(sine_data.X, sine_data.y, gaussian, SolverConfig(delta=d)).rkhs_norm
                 for d in (0.01, 0.1, 1.0)]
        assert norms[0] > norms[1] > norms[2]

    def test_needs_two_samples(self, gaussian):
        with pytest.raises(DataError):
            fit_adversarial([[0.0]], [1.0], gaussian, SolverConfig(delta=0.1))

    def test_converged_coefficients_are_a_local_minimum(self, sine_data, rng):
        kernel = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
        delta = 0.1
        config = SolverConfig(delta=delta, epsilon=1e-12, tol=1e-13, max_iter=2000)
        model = fit_adversarial(sine_data.X, sine_data.y, kernel, config)
        K = model.K_train
        best = adversarial_objective(sine_data.y - K.entries @ model.alpha, model.rkhs_norm, delta)
        for scale in (1e-3, 1e-2, 1e-1):
            for _ in range(20):
                alpha = model.alpha + scale * rng.standard_normal(K.n)
                moved = adversarial_objective(sine_data.y - K.entries @ alpha, rkhs_norm(K, alpha), delta)
                assert moved >= best * (1 - 1e-5)

    @pytest.mark.slow
    @pytest.mark.parametrize("delta", [0.01, 0.1, 0.5])
    def test_matches_a_direct_minimizer(self, sine_data, delta):
        X, y = sine_data.X[:12], sine_data.y[:12]
        kernel = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
        model = fit_adversarial(X, y, kernel, SolverConfig(delta=delta, epsilon=1e-12, tol=1e-13, max_iter=2000))
        K = model.K_train

        def objective(alpha):
            return adversarial_objective(y - K.entries @ alpha, rkhs_norm(K, alpha), delta)

        options = {"xtol": 1e-10, "ftol": 1e-14, "maxfev": 200000}
        from_zero = minimize(objective, np.zeros(K.n), method="Powell", options=options)
        from_solver = minimize(objective, np.array(model.alpha), method="Powell", options=options)
        assert model.summary.objective <= from_zero.fun * (1 + 1e-6)
        assert from_solver.fun >= model.summary.objective * (1 - 1e-6)


class TestCrossValidation:
    def test_single_point_grids(self, sine_data):
        spec, lam = cross_validate_krr(
            sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.GAUSSIAN), [3.0], [0.05], folds=3
        )
        assert spec.gamma == 3.0
        assert lam == 0.05

    def test_prefers_small_lambda_on_a_clean_problem(self, sine_data):
        _, lam = cross_validate_krr(
            sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.GAUSSIAN), [10.0], [1e-3, 1e3], folds=5
        )
        assert lam == 1e-3

    def test_linear_kernel_skips_gamma_grid(self, sine_data):
        spec, _ = cross_validate_krr(sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.LINEAR), folds=3)
        assert spec.family == KernelFamily.LINEAR

    def test_adversarial_single_gamma(self, sine_data):
        spec = cross_validate_adversarial(sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.GAUSSIAN), [2.0],
                                          folds=3)
        assert spec.gamma == 2.0

    def test_too_many_folds(self, sine_data):
        with pytest.raises(DataError):
            cross_validate_krr(sine_data.X[:3], sine_data.y[:3], KernelSpec(family=KernelFamily.GAUSSIAN), folds=5)


class TestObjectiveSettled:
    def test_large_increase_is_not_settled(self):
        assert not objective_settled(1.0, 1.5, 1e-8)

    def test_large_decrease_is_not_settled(self):
        assert not objective_settled(1.0, 0.5, 1e-8)

    @pytest.mark.parametrize("current", [1 - 1e-10, 1.0, 1 + 1e-10])
    def test_small_moves_either_way_are_settled(self, current):
        assert objective_settled(1.0, current, 1e-8)
