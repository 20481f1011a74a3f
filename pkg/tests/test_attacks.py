import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from advkern.core.attacks import (
    attack_dataset,
    certified_loss,
    certified_radius,
    fit_adversarial_input,
    pgd_attack,
    r2,
    robust_score,
)
from advkern.core.solver import FittedModel, fit_krr
from advkern.core.specs import AttackSpec, KernelFamily, KernelSpec, Norm
from advkern.exceptions import ConfigurationError, DataError, RadiusError


@pytest.fixture
def linear_model(linear):
    """f(x) = w^T x with w = (1.5, -0.5, 2.0)."""
    X_train = np.eye(3)
    return FittedModel.from_coefficients(np.array([1.5, -0.5, 2.0]), X_train, linear)


@pytest.fixture
def smooth_model(sine_data):
    return fit_krr(sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0), 1e-3)


class TestPgdAttack:
    def test_zero_radius_returns_clean_point(self, linear_model):
        x = np.array([0.1, 0.2, 0.3])
        np.testing.assert_array_equal(pgd_attack(linear_model, x, 1.0, AttackSpec(radius=0.0)), x)

    def test_l2_linear_closed_form(self, linear_model):
        x = np.array([0.1, 0.2, 0.3])
        y = 2.0
        w = np.array([1.5, -0.5, 2.0])
        radius = 0.2
        x_adv = pgd_attack(linear_model, x, y, AttackSpec(norm=Norm.L2, radius=radius))
        achieved = (y - w @ x_adv) ** 2
        expected = (abs(y - w @ x) + radius * np.linalg.norm(w)) ** 2
        assert achieved == pytest.approx(expected, rel=1e-3)

    def test_linf_linear_closed_form(self, linear_model):
        x = np.array([0.1, 0.2, 0.3])
        y = -1.0
        w = np.array([1.5, -0.5, 2.0])
        radius = 0.05
        x_adv = pgd_attack(linear_model, x, y, AttackSpec(norm=Norm.LINF, radius=radius))
        achieved = (y - w @ x_adv) ** 2
        expected = (abs(y - w @ x) + radius * np.abs(w).sum()) ** 2
        assert achieved == pytest.approx(expected, rel=1e-3)

    @pytest.mark.parametrize(
        "norm, dual_norm",
        [(Norm.L2, lambda w: np.linalg.norm(w)), (Norm.LINF, lambda w: np.abs(w).sum())],
    )
    def test_leaves_an_exactly_fitted_point(self, linear_model, norm, dual_norm):
        x = np.array([0.1, 0.2, 0.3])
        w = np.array([1.5, -0.5, 2.0])
        y = float(w @ x)
        radius = 0.1
        x_adv = pgd_attack(linear_model, x, y, AttackSpec(norm=norm, radius=radius))
        assert (y - w @ x_adv) ** 2 == pytest.approx((radius * dual_norm(w)) ** 2, rel=1e-3)

    def test_never_worse_than_clean(self, smooth_model, sine_data):
        spec = AttackSpec(norm=Norm.L2, radius=0.05, restarts=3)
        X_adv = attack_dataset(smooth_model, sine_data.X, sine_data.y, spec, seed=1)
        clean = (sine_data.y - smooth_model.predict(sine_data.X)) ** 2
        attacked = (sine_data.y - smooth_model.predict(X_adv)) ** 2
        assert np.all(attacked >= clean)

    @pytest.mark.parametrize("norm", [Norm.L2, Norm.LINF])
    @settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(radius=st.floats(1e-4, 0.5), restarts=st.integers(1, 3))
    def test_stays_inside_the_ball(self, smooth_model, sine_data, norm, radius, restarts):
        spec = AttackSpec(norm=norm, radius=radius, steps=10, restarts=restarts)
        X_adv = attack_dataset(smooth_model, sine_data.X, sine_data.y, spec, seed=0)
        order = np.inf if norm == Norm.LINF else 2
        assert np.all(np.linalg.norm(X_adv - sine_data.X, ord=order, axis=1) <= radius * (1 + 1e-12))

    def test_thread_count_does_not_change_results(self, smooth_model, sine_data):
        spec = AttackSpec(norm=Norm.LINF, radius=0.05, restarts=2)
        serial = attack_dataset(smooth_model, sine_data.X, sine_data.y, spec, seed=4, threads=1)
        threaded = attack_dataset(smooth_model, sine_data.X, sine_data.y, spec, seed=4, threads=3)
        np.testing.assert_allclose(serial, threaded, rtol=0, atol=1e-12)

    def test_l1_attacks_are_rejected(self):
        with pytest.raises(ValueError):
            AttackSpec(norm=Norm.L1, radius=0.1)


class TestRobustScore:
    def test_perfect_predictor(self, linear_model):
        X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        y = linear_model.predict(X)
        assert robust_score(linear_model, X, y, AttackSpec(radius=0.0)) == pytest.approx(1.0)

    def test_perfect_predictor_under_attack(self, linear_model):
        X = np.eye(3)
        y = linear_model.predict(X)
        radius = 0.1
        attacked_sse = 3 * (radius * np.linalg.norm([1.5, -0.5, 2.0])) ** 2
        score = robust_score(linear_model, X, y, AttackSpec(radius=radius))
        assert score == pytest.approx(1 - attacked_sse / np.sum((y - y.mean()) ** 2), rel=1e-3)
        assert score < 1.0

    def test_constant_predictor_at_mean(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2(y, np.full(3, y.mean())) == pytest.approx(0.0)

    def test_non_increasing_in_radius(self, smooth_model, sine_data):
        scores = [
            robust_score(smooth_model, sine_data.X, sine_data.y, AttackSpec(radius=r)) for r in (0.0, 0.01, 0.05, 0.1)
        ]
        assert all(b <= a + 1e-12 for a, b in zip(scores, scores[1:]))

    def test_constant_targets(self):
        with pytest.raises(DataError):
            r2(np.ones(3), np.zeros(3))


class TestCertificate:
    def test_certified_loss_bounds_the_attack(self, smooth_model, sine_data):
        spec = AttackSpec(norm=Norm.L2, radius=0.05, restarts=2)
        X_adv = attack_dataset(smooth_model, sine_data.X, sine_data.y, spec, seed=2)
        attacked = (sine_data.y - smooth_model.predict(X_adv)) ** 2
        bounds = np.array([certified_loss(smooth_model, x, y, spec) for x, y in zip(sine_data.X, sine_data.y)])
        assert np.all(attacked <= bounds * (1 + 1e-9))

    def test_linear_radius_is_input_radius(self, linear_model):
        assert certified_radius(linear_model, AttackSpec(norm=Norm.L2, radius=0.3)) == pytest.approx(0.3)

    def test_polynomial_has_no_certificate(self, sine_data):
        model = fit_krr(sine_data.X, sine_data.y, KernelSpec(family=KernelFamily.POLYNOMIAL, degree=3), 1e-2)
        with pytest.raises(RadiusError):
            certified_radius(model, AttackSpec(radius=0.1))


class TestInputSpaceTraining:
    def test_zero_radius_decreases_training_error(self, sine_data):
        kernel = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
        model = fit_adversarial_input(sine_data.X, sine_data.y, kernel, train_radius=0.0, epochs=200, lr=0.01)
        history = model.summary.objective_history
        assert len(history) == 200
        assert history[-1] < 0.5 * history[0]

    def test_attacked_training_runs(self, sine_data):
        kernel = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
        model = fit_adversarial_input(sine_data.X, sine_data.y, kernel, train_radius=0.05, epochs=20,
                                      attack_steps=5)
        assert model.summary.iterations == 20
        assert np.all(np.isfinite(model.alpha))

    @pytest.mark.parametrize("epochs, lr", [(0, 0.01), (10, 0.0)])
    def test_rejects_bad_controls(self, sine_data, gaussian, epochs, lr):
        with pytest.raises(ConfigurationError):
            fit_adversarial_input(sine_data.X, sine_data.y, gaussian, epochs=epochs, lr=lr)
