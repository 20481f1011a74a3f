import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advkern.core.bounds import (
    beta_tail_probability,
    critical_radius,
    empirical_gamma_beta,
    excess_risk,
    gamma_tail_probability,
    gaussian_complexity,
    kernel_spectrum,
    matern_critical_rate,
    theorem_bounds,
)
from advkern.core.kernels import GramMatrix, gram_matrix
from advkern.core.solver import FittedModel, fit_adversarial, fit_krr
from advkern.core.specs import BoundInputs, Estimator, KernelFamily, KernelSpec, SolverConfig
from advkern.exceptions import ConfigurationError, DimensionMismatchError


def _identity(n: int) -> GramMatrix:
    entries = np.eye(n)
    entries.setflags(write=False)
    return GramMatrix(entries=entries, symmetric=True)


class TestGaussianComplexity:
    def test_identity_matrix(self):
        n = 50
        report = gaussian_complexity(_identity(n), mc_samples=4000, seed=1)
        assert report.gamma_bar_analytic == pytest.approx(1 / math.sqrt(n))
        assert report.gamma_bar_mc <= 1 / math.sqrt(n) + 3 * report.mc_stderr

    def test_normalized_kernel_trace(self, gaussian, rng):
        X = rng.uniform(0, 1, (40, 3))
        report = gaussian_complexity(gram_matrix(gaussian, X), mc_samples=100)
        assert report.gamma_bar_analytic == pytest.approx(1 / math.sqrt(40))

    def test_linear_kernel_trace(self, linear, rng):
        X = rng.standard_normal((30, 2))
        report = gaussian_complexity(gram_matrix(linear, X), mc_samples=100)
        assert report.gamma_bar_analytic == pytest.approx(math.sqrt(np.sum(X ** 2)) / 30)
        assert report.gamma_bar_analytic <= np.linalg.norm(X, axis=1).max() / math.sqrt(30)

    def test_seeded(self, gaussian, rng):
        K = gram_matrix(gaussian, rng.uniform(0, 1, (20, 1)))
        assert gaussian_complexity(K, 200, seed=5).gamma_bar_mc == gaussian_complexity(K, 200, seed=5).gamma_bar_mc

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            gaussian_complexity(_identity(3), mc_samples=1)

    def test_spectrum_is_sorted_and_scaled(self, gaussian, rng):
        K = gram_matrix(gaussian, rng.uniform(0, 1, (15, 2)))
        spectrum = kernel_spectrum(K)
        assert np.all(np.diff(spectrum) <= 0)
        assert spectrum.sum() == pytest.approx(1.0)


class TestCriticalRadius:
    def test_all_zero_spectrum(self):
        assert critical_radius(np.zeros(5), 5) == 0.0

    @pytest.mark.parametrize("n", [10, 100, 1000])
    def test_rank_one(self, n):
        spectrum = np.zeros(n)
        spectrum[0] = 1.0
        assert critical_radius(spectrum, n) ** 2 == pytest.approx(2.0 / n, rel=1e-8)

    def test_root_beyond_the_top_eigenvalue(self):
        n = 4
        spectrum = np.full(n, 0.01)
        beta = critical_radius(spectrum, n)
        assert beta == pytest.approx((2.0 * spectrum.sum() / n) ** 0.25)

    @settings(max_examples=50, deadline=None)
    @given(
        spectrum=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30).filter(lambda s: max(s) > 1e-6),
        n=st.integers(2, 500),
    )
    def test_satisfies_the_fixed_point(self, spectrum, n):
        mu = np.array(spectrum)
        beta = critical_radius(mu, n)
        lhs = beta ** 2
        rhs = math.sqrt(2.0 / n) * math.sqrt(np.minimum(beta ** 2, np.where(mu < 1e-10 * mu.max(), 0.0, mu)).sum())
        assert lhs >= rhs * (1 - 1e-6)

    def test_linear_kernel_scales_like_dimension(self, linear):
        p = 3
        rng = np.random.default_rng(0)
        for n in (64, 256, 1024):
            X = rng.standard_normal((n, p))
            ratio = critical_radius(kernel_spectrum(gram_matrix(linear, X)), n) ** 2 / (p / n)
            assert 0.25 <= ratio <= 4.0


class TestEmpiricalComplexities:
    def test_zero_noise(self, gaussian, rng):
        K = gram_matrix(gaussian, rng.uniform(0, 1, (6, 1)))
        assert empirical_gamma_beta(K, rng.standard_normal(6), np.zeros(6)) == (0.0, 0.0)

    def test_identity_and_ones(self):
        n = 16
        gamma_w, _ = empirical_gamma_beta(_identity(n), np.ones(n), np.ones(n))
        assert gamma_w == pytest.approx(1 / math.sqrt(n))

    def test_zero_direction(self):
        _, beta_w = empirical_gamma_beta(_identity(4), np.zeros(4), np.ones(4))
        assert beta_w == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            empirical_gamma_beta(_identity(4), np.zeros(3), np.ones(4))


class TestExcessRisk:
    def test_exact_fit(self, gaussian, rng):
        X = rng.uniform(0, 1, (5, 1))
        model = FittedModel.from_coefficients(rng.standard_normal(5), X, gaussian)
        assert excess_risk(model, model.predict(X), X) == pytest.approx(0.0)

    def test_constant_offset(self, gaussian, rng):
        X = rng.uniform(0, 1, (5, 1))
        model = FittedModel.from_coefficients(rng.standard_normal(5), X, gaussian)
        assert excess_risk(model, model.predict(X) - 0.3, X) == pytest.approx(0.09)


class TestTheoremBounds:
    def test_adversarial_example(self):
        inputs = BoundInputs(sigma=1, R=1, delta_or_lambda=0.5, gamma=0.5, beta=0)
        values = theorem_bounds(inputs, Estimator.ADVERSARIAL)
        assert values.b_gamma == pytest.approx(20.0)
        assert values.b_beta == pytest.approx(4.5)
        assert values.minimum == pytest.approx(4.5)

    def test_noiseless_ridge_branches_agree(self):
        inputs = BoundInputs(sigma=0, R=2, delta_or_lambda=0.1, gamma=0.3, beta=0.2)
        values = theorem_bounds(inputs, Estimator.RIDGE)
        assert values.b_gamma == pytest.approx(2 * 4 * 0.1)
        assert values.b_beta == pytest.approx(values.b_gamma)

    def test_zero_norm_leaves_noise_term(self):
        inputs = BoundInputs(sigma=2, R=0, delta_or_lambda=0.1, gamma=0.3, beta=0.5)
        values = theorem_bounds(inputs, Estimator.ADVERSARIAL)
        assert values.b_beta == pytest.approx(16 * 4 * 0.25)

    def test_zero_radius_gamma_branch_is_infinite(self):
        inputs = BoundInputs(sigma=1, R=1, delta_or_lambda=0, gamma=0.1, beta=0.1)
        values = theorem_bounds(inputs, Estimator.ADVERSARIAL)
        assert math.isinf(values.b_gamma)
        assert values.minimum == values.b_beta


class TestTailProbabilities:
    def test_gamma_tail(self):
        assert gamma_tail_probability(0.1, 10, 2.0) == pytest.approx(math.exp(-100 * 0.01 / 4.0))
        assert gamma_tail_probability(0.1, 10, 2.0, printed_exponent=True) == pytest.approx(math.exp(-100 * 0.1 / 4.0))

    @pytest.mark.parametrize("eps", [0.2, 0.3, 0.5])
    def test_gamma_tail_dominates_the_empirical_tail(self, gaussian, rng, eps):
        n, draws = 30, 20000
        K = gram_matrix(gaussian, rng.uniform(0, 1, (n, 1)))
        top = float(np.linalg.eigvalsh(K.entries).max())
        W = rng.standard_normal((draws, n))
        gammas = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", W, K.entries, W), 0.0)) / n
        tail = float(np.mean(gammas > gammas.mean() + eps))
        assert tail <= gamma_tail_probability(eps, n, top) + 0.01

    def test_beta_tail(self):
        assert beta_tail_probability(0.2, 0.1, 20) == pytest.approx(math.exp(-3.0))

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ConfigurationError):
            beta_tail_probability(0.2, 0.0, 20)

    def test_matern_rate(self):
        assert matern_critical_rate(100, 1, 0.5) == pytest.approx(100 ** (-2 / 4))


@pytest.mark.slow
class TestBoundsOverTrials:
    """Realized excess risk against the bound evaluated with realized complexities."""

    n = 40
    trials = 200
    sigma = 0.1

    @pytest.fixture
    def design(self):
        rng = np.random.default_rng(7)
        kernel = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
        X = rng.uniform(0, 1, (self.n, 1))
        K = gram_matrix(kernel, X)
        c = rng.standard_normal(self.n)
        c /= math.sqrt(float(c @ K.entries @ c))
        return kernel, X, K, K.entries @ c

    def _coverage(self, design, estimator: Estimator, weight: float) -> float:
        kernel, X, K, f_star = design
        rng = np.random.default_rng(11)
        held = 0
        for _ in range(self.trials):
            w = rng.standard_normal(self.n)
            w /= math.sqrt(float(np.mean(w * w)))
            y = f_star + self.sigma * w
            if estimator == Estimator.ADVERSARIAL:
                model = fit_adversarial(X, y, kernel, SolverConfig(delta=weight), gram=K)
            else:
                model = fit_krr(X, y, kernel, weight, gram=K)
            gamma_w, beta_w = empirical_gamma_beta(K, model.predict(X) - f_star, w)
            inputs = BoundInputs(sigma=self.sigma, R=1.0, delta_or_lambda=weight, gamma=gamma_w, beta=beta_w)
            held += excess_risk(model, f_star, X) <= theorem_bounds(inputs, estimator).minimum
        return held / self.trials

    @pytest.mark.parametrize("delta", [0.05, 0.2])
    def test_adversarial_bound_holds(self, design, delta):
        assert self._coverage(design, Estimator.ADVERSARIAL, delta) >= 0.95

    @pytest.mark.parametrize("lam", [1e-3, 1e-2])
    def test_ridge_bound_holds(self, design, lam):
        assert self._coverage(design, Estimator.RIDGE, lam) >= 0.95
