"""Tests for exact GP regression against dense linear-algebra oracles."""

import math

import numpy as np
import pytest

from rmesbo.gp import (
    Dataset,
    Domain,
    KernelHyperparams,
    MleConfig,
    fit,
    log_marginal_likelihood,
    log_marginal_likelihood_grad,
    mle_fit,
    predict,
    predict_gradients,
    se_kernel,
    se_kernel_matrix,
)


def dense_posterior(X, y, Xq, hyper):
    """Textbook posterior by explicit dense inversion (test oracle)."""
    K = se_kernel_matrix(X, X, hyper) + hyper.noise_variance * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Kq = se_kernel_matrix(Xq, X, hyper)
    mean = Kq @ Kinv @ y
    var = hyper.signal_variance - np.einsum("ij,jk,ik->i", Kq, Kinv, Kq)
    return mean, var


@pytest.fixture
def hyper2d():
    return KernelHyperparams(np.array([0.5, 0.8]), 2.5, 0.05)


class TestKernel:
    def test_zero_distance(self, hyper2d):
        x = np.array([0.3, -1.2])
        assert se_kernel(x, x, hyper2d) == 2.5

    def test_unit_distance_1d(self):
        hyper = KernelHyperparams(np.array([1.0]), 1.0, 0.0)
        value = se_kernel(np.array([0.0]), np.array([1.0]), hyper)
        assert value == pytest.approx(math.exp(-0.5), rel=1e-12)
        assert value == pytest.approx(0.606531, abs=1e-6)

    def test_symmetry_random_pairs(self, hyper2d):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.standard_normal(2), rng.standard_normal(2)
            assert se_kernel(a, b, hyper2d) == se_kernel(b, a, hyper2d)

    def test_bounded_by_signal_variance(self, hyper2d):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((40, 2))
        assert np.all(se_kernel_matrix(A, A, hyper2d) <= 2.5 + 1e-12)

    def test_dimension_mismatch(self, hyper2d):
        with pytest.raises(ValueError):
            se_kernel(np.array([1.0]), np.array([1.0, 2.0]), hyper2d)
        with pytest.raises(ValueError):
            se_kernel(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]), hyper2d)


class TestFitPredict:
    def test_empty_dataset_gives_prior(self, hyper2d):
        model = fit(Dataset.empty(2), hyper2d)
        stats = predict(model, np.array([0.7, -0.3]))
        assert stats.mean == 0.0
        assert stats.latent_variance == 2.5
        assert stats.observation_variance == 2.5 + 0.05

    def test_noiseless_interpolation(self):
        hyper = KernelHyperparams(np.array([0.5]), 1.3, 0.0)
        model = fit(Dataset(np.array([[0.4]]), np.array([2.2])), hyper)
        stats = predict(model, np.array([0.4]))
        assert stats.mean == pytest.approx(2.2, rel=1e-10)
        assert stats.latent_variance == pytest.approx(0.0, abs=1e-9)

    def test_noise_prevents_interpolation(self):
        hyper = KernelHyperparams(np.array([0.5]), 1.0, 0.5)
        model = fit(Dataset(np.array([[0.0]]), np.array([1.0])), hyper)
        stats = predict(model, np.array([0.0]))
        assert 0.0 < stats.latent_variance < 1.0

    def test_matches_dense_oracle_5_points(self, hyper2d):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(5, 2))
        y = rng.standard_normal(5)
        model = fit(Dataset(X, y), hyper2d)
        xq = rng.uniform(-1, 1, size=2)
        mean_o, var_o = dense_posterior(X, y, xq[None], hyper2d)
        stats = predict(model, xq)
        assert stats.mean == pytest.approx(mean_o[0], rel=1e-10)
        assert stats.latent_variance == pytest.approx(var_o[0], rel=1e-10, abs=1e-12)

    def test_batch_matches_dense_oracle(self, hyper2d):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, size=(12, 2))
        y = rng.standard_normal(12)
        model = fit(Dataset(X, y), hyper2d)
        Xq = rng.uniform(-1, 1, size=(50, 2))
        mean_o, var_o = dense_posterior(X, y, Xq, hyper2d)
        stats = predict(model, Xq)
        np.testing.assert_allclose(stats.mean, mean_o, rtol=1e-10)
        np.testing.assert_allclose(stats.latent_variance, var_o, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(
            stats.observation_variance, stats.latent_variance + 0.05
        )

    def test_variance_never_negative_near_duplicates(self):
        hyper = KernelHyperparams(np.array([1.0]), 1.0, 0.0)
        X = np.array([[0.0], [1e-9], [2e-9], [0.5]])
        model = fit(Dataset(X, np.array([1.0, 1.0, 1.0, 0.3])), hyper)
        stats = predict(model, np.linspace(-1, 2, 101)[:, None])
        assert np.all(stats.latent_variance >= 0.0)

    def test_cholesky_reconstruction(self, hyper2d):
        rng = np.random.default_rng(9)
        X = rng.uniform(-1, 1, size=(8, 2))
        model = fit(Dataset(X, rng.standard_normal(8)), hyper2d)
        K = se_kernel_matrix(X, X, hyper2d) + (0.05 + model.jitter) * np.eye(8)
        rebuilt = model.cholesky_factor @ model.cholesky_factor.T
        np.testing.assert_allclose(rebuilt, K, rtol=1e-8)

    def test_training_variance_at_most_prior(self, hyper2d):
        rng = np.random.default_rng(10)
        for _ in range(5):
            n = rng.integers(2, 15)
            X = rng.uniform(-2, 2, size=(n, 2))
            model = fit(Dataset(X, rng.standard_normal(n)), hyper2d)
            stats = predict(model, X)
            assert np.all(stats.latent_variance <= 2.5 + 1e-10)

    def test_duplicate_point_never_increases_variance(self):
        hyper = KernelHyperparams(np.array([0.7, 0.7]), 1.0, 0.1)
        rng = np.random.default_rng(11)
        X = rng.uniform(-1, 1, size=(6, 2))
        y = rng.standard_normal(6)
        model_a = fit(Dataset(X, y), hyper)
        model_b = fit(Dataset(np.vstack([X, X[2]]), np.append(y, y[2])), hyper)
        probes = rng.uniform(-1, 1, size=(100, 2))
        var_a = predict(model_a, probes).latent_variance
        var_b = predict(model_b, probes).latent_variance
        assert np.all(var_b <= var_a + 1e-9)


class TestMarginalLikelihood:
    def test_single_zero_observation(self):
        hyper = KernelHyperparams(np.array([1.0]), 1.5, 0.25)
        dataset = Dataset(np.array([[0.0]]), np.array([0.0]))
        expected = -0.5 * math.log(2 * math.pi * (1.5 + 0.25))
        assert log_marginal_likelihood(dataset, hyper) == pytest.approx(expected, rel=1e-12)

    def test_permutation_invariance(self, hyper2d):
        rng = np.random.default_rng(12)
        X = rng.uniform(-1, 1, size=(7, 2))
        y = rng.standard_normal(7)
        base = log_marginal_likelihood(Dataset(X, y), hyper2d)
        perm = rng.permutation(7)
        assert log_marginal_likelihood(Dataset(X[perm], y[perm]), hyper2d) == pytest.approx(
            base, rel=1e-12
        )

    def test_matches_dense_determinant_oracle(self, hyper2d):
        rng = np.random.default_rng(13)
        X = rng.uniform(-1, 1, size=(6, 2))
        y = rng.standard_normal(6)
        K = se_kernel_matrix(X, X, hyper2d) + 0.05 * np.eye(6)
        _, logdet = np.linalg.slogdet(K)
        expected = -0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 3 * math.log(2 * math.pi)
        assert log_marginal_likelihood(Dataset(X, y), hyper2d) == pytest.approx(expected, rel=1e-9)

    def test_empty_dataset_rejected(self, hyper2d):
        with pytest.raises(ValueError):
            log_marginal_likelihood(Dataset.empty(2), hyper2d)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        X = rng.uniform(-1, 1, size=(8, 2))
        y = rng.standard_normal(8)
        dataset = Dataset(X, y)
        hyper = KernelHyperparams(np.array([0.6, 0.9]), 1.4, 0.08)
        _, grad = log_marginal_likelihood_grad(dataset, hyper)
        theta = np.log(np.array([0.6, 0.9, 1.4, 0.08]))
        step = 1e-6
        for i in range(4):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            fd = (
                log_marginal_likelihood(
                    dataset, KernelHyperparams(np.exp(tp[:2]), math.exp(tp[2]), math.exp(tp[3]))
                )
                - log_marginal_likelihood(
                    dataset, KernelHyperparams(np.exp(tm[:2]), math.exp(tm[2]), math.exp(tm[3]))
                )
            ) / (2 * step)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


class TestMleFit:
    def test_ascent_guarantee(self):
        rng = np.random.default_rng(15)
        for seed in range(3):
            X = rng.uniform(0, 1, size=(10, 1))
            y = np.sin(6 * X[:, 0]) + 0.1 * rng.standard_normal(10)
            dataset = Dataset(X, y)
            init = KernelHyperparams(np.array([0.5]), 1.0, 0.01)
            fitted = mle_fit(dataset, init, MleConfig(seed=seed, fixed_noise=0.01))
            init_fixed = KernelHyperparams(np.array([0.5]), 1.0, 0.01)
            assert log_marginal_likelihood(dataset, fitted) >= log_marginal_likelihood(
                dataset, init_fixed
            ) - 1e-9

    def test_recovers_known_lengthscale(self):
        # Median recovery within a factor of 2 over 10 generative seeds.
        true_ls = 0.33
        domain = Domain(np.array([0.0]), np.array([1.0]))
        ratios = []
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            X = rng.uniform(0, 1, size=(60, 1))
            hyper_true = KernelHyperparams(np.array([true_ls]), 1.0, 1e-4)
            K = se_kernel_matrix(X, X, hyper_true) + 1e-4 * np.eye(60)
            y = np.linalg.cholesky(K) @ rng.standard_normal(60)
            init = KernelHyperparams(np.array([0.1]), 0.5, 1e-4)
            fitted = mle_fit(
                Dataset(X, y), init, MleConfig(domain=domain, fixed_noise=1e-4, seed=seed)
            )
            ratios.append(fitted.lengthscales[0] / true_ls)
        median = float(np.median(ratios))
        assert 0.5 <= median <= 2.0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(16)
        X = rng.uniform(0, 1, size=(12, 2))
        y = rng.standard_normal(12)
        dataset = Dataset(X, y)
        init = KernelHyperparams(np.array([0.3, 0.3]), 1.0, 0.05)
        a = mle_fit(dataset, init, MleConfig(seed=4))
        b = mle_fit(dataset, init, MleConfig(seed=4))
        np.testing.assert_array_equal(a.lengthscales, b.lengthscales)
        assert a.signal_variance == b.signal_variance
        assert a.noise_variance == b.noise_variance

    def test_positivity_invariants(self):
        rng = np.random.default_rng(17)
        X = rng.uniform(0, 1, size=(9, 2))
        y = rng.standard_normal(9)
        fitted = mle_fit(Dataset(X, y), KernelHyperparams(np.array([0.2, 0.2]), 1.0, 0.01))
        assert np.all(fitted.lengthscales > 0)
        assert fitted.signal_variance > 0
        assert fitted.noise_variance >= 0


class TestDomain:
    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            Domain(np.array([0.0, 1.0]), np.array([1.0, 1.0]))

    def test_unit_round_trip(self):
        domain = Domain(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
        rng = np.random.default_rng(0)
        X = domain.sample(rng, 20)
        assert np.all(domain.contains(X))
        np.testing.assert_allclose(domain.from_unit(domain.to_unit(X)), X, rtol=1e-14)


def test_predict_gradients_match_finite_differences():
    rng = np.random.default_rng(18)
    X = rng.uniform(0, 1, size=(9, 2))
    y = rng.standard_normal(9)
    hyper = KernelHyperparams(np.array([0.4, 0.6]), 1.2, 0.02)
    model = fit(Dataset(X, y), hyper)
    for _ in range(5):
        x = rng.uniform(0.1, 0.9, size=2)
        g_mu, g_var = predict_gradients(model, x[None])
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-6
            sp, sm = predict(model, x + e), predict(model, x - e)
            assert g_mu[0, k] == pytest.approx((sp.mean - sm.mean) / 2e-6, rel=1e-5, abs=1e-7)
            assert g_var[0, k] == pytest.approx(
                (sp.latent_variance - sm.latent_variance) / 2e-6, rel=1e-5, abs=1e-7
            )
