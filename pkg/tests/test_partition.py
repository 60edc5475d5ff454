import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fastkci.errors import DimensionMismatch, TooFewSamples
from fastkci.partition import (
    MixtureParams,
    assign_labels,
    cluster_log_likelihood,
    component_log_density,
    draw_labels,
    fit_hyper,
    gp_log_marginal,
    relabel_by_first_appearance,
    sample_inverse_wishart,
    sample_mixture,
)


class TestFitHyper:
    def test_mean_of_standard_normal(self, rng):
        z = rng.normal(size=(4000, 2))
        assert np.all(np.abs(fit_hyper(z).mu0) <= 3 / np.sqrt(4000))

    def test_constant_column_still_spd(self, rng):
        z = np.column_stack([np.ones(50), rng.normal(size=50)])
        np.linalg.cholesky(fit_hyper(z).psi)

    def test_two_point_hand_computation(self):
        h = fit_hyper([[-1.0], [1.0]])
        assert h.mu0.tolist() == [0.0]
        # sample variance 2 with n - 1 denominator, jitter 1e-6 * max(2, 1)
        assert h.psi[0, 0] == pytest.approx(2.0 + 2e-6, abs=1e-15)
        assert h.nu == 3.0 and h.alpha == 1.0 and h.lambda0 == 1.0

    def test_too_few_rows(self):
        with pytest.raises(TooFewSamples):
            fit_hyper(np.zeros((3, 2)))


class TestSampleMixture:
    def test_single_component_weight(self, rng):
        p = sample_mixture(fit_hyper(rng.normal(size=(30, 2))), 1, rng)
        assert p.weights.tolist() == [1.0]

    def test_weights_simplex(self, rng):
        p = sample_mixture(fit_hyper(rng.normal(size=(30, 1))), 7, rng)
        assert np.all(p.weights > 0)
        assert abs(p.weights.sum() - 1) <= 1e-12

    def test_inverse_wishart_mean(self):
        rng = np.random.default_rng(0)
        psi = np.array([[2.0, 0.8], [0.8, 1.0]])
        nu = 8.0
        draws = np.array([sample_inverse_wishart(psi, nu, rng)[0] for _ in range(10000)])
        assert np.allclose(draws.mean(axis=0), psi / (nu - 2 - 1), rtol=0.05)

    def test_inverse_wishart_matches_scipy_law(self):
        rng = np.random.default_rng(1)
        psi = np.array([[1.5, -0.4], [-0.4, 0.7]])
        ours = [np.trace(sample_inverse_wishart(psi, 6.0, rng)[0]) for _ in range(3000)]
        ref = [np.trace(s) for s in stats.invwishart(df=6.0, scale=psi).rvs(3000, random_state=2)]
        assert stats.ks_2samp(ours, ref).pvalue > 0.01

    def test_root_factorizes_draw(self, rng):
        cov, root = sample_inverse_wishart(np.eye(3), 5.0, rng)
        assert np.allclose(root @ root.T, cov)

    def test_prior_mean_of_means(self):
        rng = np.random.default_rng(2)
        z = rng.normal(loc=[3.0, -1.0], size=(200, 2))
        h = fit_hyper(z, nu=6.0)
        means = np.vstack([sample_mixture(h, 1, rng).means for _ in range(10000)])
        # each mean has covariance E[Sigma] / lambda0 = psi / (nu - d - 1)
        se = np.sqrt(np.diag(h.psi) / (h.nu - 3) / 10000)
        assert np.all(np.abs(means.mean(axis=0) - h.mu0) <= 4 * se)


def two_blobs(rng, n=200):
    truth = np.repeat([0, 1], n // 2)
    z = np.where(truth[:, None] == 0, -10.0, 10.0) + rng.normal(size=(n, 2))
    return z, truth


class TestAssignLabels:
    def test_single_component(self, rng):
        z = rng.normal(size=(40, 1))
        a = assign_labels(z, sample_mixture(fit_hyper(z), 1, rng), rng)
        assert a.V_effective == 1 and not a.labels.any()

    def test_separable_blobs(self):
        agree = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            z, truth = two_blobs(rng)
            params = MixtureParams(np.array([0.5, 0.5]), np.array([[-10.0, -10], [10, 10]]),
                                   np.stack([np.eye(2)] * 2))
            labels = assign_labels(z, params, rng).labels
            # labels are numbered by first appearance, and row 0 is blob 0
            agree.append(np.mean(labels == truth))
        assert min(agree) >= 0.99

    def test_pigeonhole(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            z = rng.normal(size=(25, 1))
            a = assign_labels(z, sample_mixture(fit_hyper(z), 3, rng), rng, min_cluster_size=10)
            assert a.V_effective <= 2

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 6), st.integers(20, 120))
    def test_partition_invariants(self, seed, V, n):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(n, 2))
        a = assign_labels(z, sample_mixture(fit_hyper(z), V, rng), rng, min_cluster_size=10)
        assert a.cluster_sizes.sum() == n
        assert a.V_effective <= V
        assert np.array_equal(a.cluster_sizes, np.bincount(a.labels))
        if a.V_effective > 1:
            assert a.cluster_sizes.min() >= 10
        _, first = np.unique(a.labels, return_index=True)
        assert np.all(np.diff(first) > 0)

    def test_log_sum_exp_shift_invariance(self, rng):
        log_dens = rng.normal(size=(100, 4)) * 30
        u = rng.random(100)
        shift = rng.normal(size=(100, 1)) * 500
        assert np.array_equal(draw_labels(log_dens, u), draw_labels(log_dens + shift, u))

    def test_component_order_does_not_matter(self, rng):
        z = rng.normal(size=(150, 2))
        p = sample_mixture(fit_hyper(z), 4, rng)
        perm = np.array([2, 0, 3, 1])
        q = MixtureParams(p.weights[perm], p.means[perm], p.covariances[perm])
        a = assign_labels(z, p, np.random.default_rng(9))
        b = assign_labels(z, q, np.random.default_rng(9))
        assert np.array_equal(a.labels, b.labels)

    def test_relabel(self):
        assert relabel_by_first_appearance(np.array([4, 4, 1, 7, 1])).tolist() == [0, 0, 1, 2, 1]

    def test_empty_z_draws_from_weights(self, rng):
        z = np.empty((300, 0))
        a = assign_labels(z, sample_mixture(fit_hyper(z), 3, rng), rng)
        assert a.cluster_sizes.sum() == 300

    def test_dimension_mismatch(self, rng):
        p = sample_mixture(fit_hyper(rng.normal(size=(20, 2))), 2, rng)
        with pytest.raises(DimensionMismatch):
            component_log_density(rng.normal(size=(20, 3)), p)

    def test_component_log_density_vs_scipy(self, rng):
        z = rng.normal(size=(30, 2))
        p = sample_mixture(fit_hyper(z), 3, rng)
        ref = np.column_stack([
            np.log(p.weights[v]) + stats.multivariate_normal(p.means[v], p.covariances[v]).logpdf(z)
            for v in range(3)
        ])
        assert np.allclose(component_log_density(z, p), ref, atol=1e-9)


class TestClusterLogLikelihood:
    def test_zero_column_closed_form(self):
        n = 12
        assert gp_log_marginal(np.zeros(n), np.eye(n)) == pytest.approx(-(n / 2) * np.log(2 * np.pi))

    def test_constant_z_lambda_one(self):
        n = 12
        ll = cluster_log_likelihood(np.zeros(n), np.zeros(n), np.ones(n), 1.0)
        assert ll == pytest.approx(-n * np.log(2 * np.pi))

    def test_matches_scipy(self, rng):
        z = rng.normal(size=(25, 1))
        x, y = np.sin(z), rng.normal(size=(25, 2))
        from fastkci.kernels import median_bandwidth, rbf_gram
        cov = rbf_gram(z, median_bandwidth(z)).entries + 0.1 * np.eye(25)
        mvn = stats.multivariate_normal(np.zeros(25), cov)
        ref = sum(mvn.logpdf(c) for c in np.hstack([x, y]).T)
        assert cluster_log_likelihood(x, y, z, 0.1) == pytest.approx(ref, rel=1e-9)

    def test_additive_over_columns(self, rng):
        z = rng.normal(size=(30, 1))
        c = rng.normal(size=(30, 1))
        one = cluster_log_likelihood(c, c, z, 1e-2)
        two = cluster_log_likelihood(np.hstack([c, c]), np.hstack([c, c]), z, 1e-2)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_row_permutation_invariance(self, rng):
        x, y, z = rng.normal(size=(40, 1)), rng.normal(size=(40, 2)), rng.normal(size=(40, 2))
        p = rng.permutation(40)
        a = cluster_log_likelihood(x, y, z, 1e-2)
        b = cluster_log_likelihood(x[p], y[p], z[p], 1e-2)
        assert a == pytest.approx(b, rel=1e-10)

    def test_functional_beats_scrambled(self):
        wins = 0
        for seed in range(40):
            rng = np.random.default_rng(seed)
            z = rng.normal(size=(100, 1))
            f = np.sin(2 * z) + 0.1 * rng.normal(size=(100, 1))
            scrambled = rng.permutation(f)
            y = rng.normal(size=(100, 1))
            wins += cluster_log_likelihood(f, y, z, 1e-2) > cluster_log_likelihood(scrambled, y, z, 1e-2)
        assert wins >= 38
