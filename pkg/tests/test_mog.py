import numpy as np
import pytest
from scipy.stats import multivariate_normal

from hrtfgp.mog import (ConditionalMog, MogError, MogModel, PcaCodec,
                        conditional_mean_scores, load_mog, mog_condition,
                        mog_fit, nonindividualized, pca_decode, pca_encode,
                        pca_fit, sample_candidates, save_mog)


def make_joint_data(seed=0, n=400, q=4):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n, q)) * np.array([3.0, 2.0, 1.0, 0.5])[:q]
    u = rng.standard_normal((n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    # correlate the leading score with the direction
    w[:, 0] += 2.0 * u[:, 0]
    return np.hstack([w, u])


class TestPca:
    def test_round_trip_with_enough_components(self):
        rng = np.random.default_rng(1)
        scores = rng.standard_normal((30, 3))
        basis = np.linalg.qr(rng.standard_normal((10, 3)))[0]
        rows = np.exp(scores @ basis.T + 0.3)
        codec = pca_fit(rows, 3)
        back = pca_decode(codec, pca_encode(codec, rows))
        np.testing.assert_allclose(back, rows, rtol=1e-8)

    def test_energy_ordering(self):
        rng = np.random.default_rng(2)
        rows = np.exp(rng.standard_normal((50, 8)) * np.linspace(2, 0.1, 8))
        codec = pca_fit(rows, 5)
        scores = pca_encode(codec, rows)
        vars_ = scores.var(axis=0)
        assert np.all(np.diff(vars_) <= 1e-9)

    def test_negative_rows_rejected(self):
        with pytest.raises(MogError):
            pca_fit(-np.ones((4, 6)), 2)

    def test_component_count_validated(self):
        with pytest.raises(MogError):
            pca_fit(np.ones((4, 6)), 5)

    def test_nonorthonormal_basis_rejected(self):
        with pytest.raises(MogError):
            PcaCodec(np.zeros(4), np.ones((4, 2)))


class TestEm:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(3)
        Z = rng.standard_normal((200, 5)) @ np.diag([1, 2, 1, 1, 3]) + 1.0
        model, trace = mog_fit(Z, 1, q=2)
        np.testing.assert_allclose(model.means[0], Z.mean(axis=0), atol=1e-9)
        d = Z.shape[1]
        floor = 1e-6 * np.trace(np.cov(Z.T)) / d
        want = np.cov(Z.T, bias=True) + floor * np.eye(d)
        np.testing.assert_allclose(model.covs[0], want, rtol=1e-6, atol=1e-9)

    def test_two_separated_clusters_recovered(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((150, 4)) * 0.3 + np.array([5, 0, 0, 0])
        b = rng.standard_normal((50, 4)) * 0.3 - np.array([5, 0, 0, 0])
        model, _ = mog_fit(np.vstack([a, b]), 2, seed=1, q=1)
        order = np.argsort(model.means[:, 0])
        np.testing.assert_allclose(model.means[order, 0], [-5, 5], atol=0.2)
        np.testing.assert_allclose(np.sort(model.weights), [0.25, 0.75],
                                   atol=0.02)

    @pytest.mark.parametrize("seed", range(4))
    def test_trace_nondecreasing(self, seed):
        Z = make_joint_data(seed=seed, n=200)
        _, trace = mog_fit(Z, 6, seed=seed)
        assert len(trace) >= 2
        assert np.all(np.diff(trace) >= -1e-9)

    def test_seed_determinism(self):
        Z = make_joint_data(seed=5)
        m1, t1 = mog_fit(Z, 4, seed=7)
        m2, t2 = mog_fit(Z, 4, seed=7)
        np.testing.assert_array_equal(m1.means, m2.means)
        np.testing.assert_array_equal(t1, t2)

    def test_validation(self):
        Z = make_joint_data(n=10)
        with pytest.raises(MogError):
            mog_fit(Z, 0)
        with pytest.raises(MogError):
            mog_fit(Z, 11)
        with pytest.raises(MogError):
            mog_fit(Z, 2, q=7)


class TestConditioning:
    def test_single_gaussian_textbook_formula(self):
        # jointly Gaussian [w, u]: conditioning must reproduce the
        # partitioned-covariance formulas exactly
        rng = np.random.default_rng(6)
        a = rng.standard_normal((5, 5))
        cov = a @ a.T + 0.5 * np.eye(5)
        mean = rng.standard_normal(5)
        model = MogModel(np.array([1.0]), mean[None], cov[None], 2)
        u = rng.standard_normal(3)
        cond = mog_condition(model, u)
        s_w, s_wu, s_u = cov[:2, :2], cov[:2, 2:], cov[2:, 2:]
        gain = s_wu @ np.linalg.inv(s_u)
        np.testing.assert_allclose(cond.cond_means[0],
                                   mean[:2] + gain @ (u - mean[2:]),
                                   rtol=1e-10)
        np.testing.assert_allclose(cond.cond_covs[0], s_w - gain @ s_wu.T,
                                   rtol=1e-9, atol=1e-12)
        assert cond.weights[0] == pytest.approx(1.0)

    def test_posterior_weights_follow_marginal_density(self):
        # two components, weights at u proportional to prior x density(u)
        means = np.array([[0.0, 0, 0, 1.0], [0.0, 0, 0, -1.0]])
        covs = np.repeat(np.eye(4)[None], 2, axis=0)
        model = MogModel(np.array([0.5, 0.5]), means, covs, 3)
        cond = mog_condition(model, [0.8])
        da = multivariate_normal.pdf(0.8, mean=1.0, cov=1.0)
        db = multivariate_normal.pdf(0.8, mean=-1.0, cov=1.0)
        np.testing.assert_allclose(cond.weights,
                                   np.array([da, db]) / (da + db), rtol=1e-9)

    def test_conditioning_shifts_correlated_mean(self):
        Z = make_joint_data(seed=7)
        model, _ = mog_fit(Z, 4, seed=0)
        plus = conditional_mean_scores(mog_condition(model, [1.0, 0, 0]))
        minus = conditional_mean_scores(mog_condition(model, [-1.0, 0, 0]))
        assert plus[0] - minus[0] > 1.0  # slope 2 was built into the data

    def test_dimension_mismatch(self):
        Z = make_joint_data()
        model, _ = mog_fit(Z, 2)
        with pytest.raises(MogError):
            mog_condition(model, [1.0, 0.0])


class TestSamplingAndPersistence:
    def make_fitted(self, seed=8):
        rng = np.random.default_rng(seed)
        scores = rng.standard_normal((300, 4))
        basis = np.linalg.qr(rng.standard_normal((12, 4)))[0]
        rows = np.exp(scores @ basis.T)
        codec = pca_fit(rows, 4)
        u = rng.standard_normal((300, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        Z = np.hstack([pca_encode(codec, rows), u])
        model, _ = mog_fit(Z, 3, seed=0)
        return model, codec

    def test_samples_positive_and_seeded(self):
        model, codec = self.make_fitted()
        cond = mog_condition(model, [0.0, 1.0, 0.0])
        a = sample_candidates(cond, codec, 20, seed=5)
        b = sample_candidates(cond, codec, 20, seed=5)
        c = sample_candidates(cond, codec, 20, seed=6)
        assert a.shape == (20, 12)
        assert np.all(a > 0)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_sample_mean_approaches_conditional_mean(self):
        model, codec = self.make_fitted()
        cond = mog_condition(model, [1.0, 0.0, 0.0])
        draws = sample_candidates(cond, codec, 20000, seed=1)
        mean_scores = pca_encode(codec, draws).mean(axis=0)
        want = conditional_mean_scores(cond)
        np.testing.assert_allclose(mean_scores, want, atol=0.1)

    def test_nonindividualized_is_decoded_mean(self):
        model, codec = self.make_fitted()
        cond = mog_condition(model, [0.0, 0.0, 1.0])
        row = nonindividualized(cond, codec)
        want = pca_decode(codec, conditional_mean_scores(cond))[0]
        np.testing.assert_array_equal(row, want)
        assert row.shape == (12,)

    def test_save_load_round_trip(self, tmp_path):
        model, codec = self.make_fitted()
        path = tmp_path / "mog.json"
        save_mog(str(path), model, codec)
        back_model, back_codec = load_mog(str(path))
        assert back_model.m == model.m and back_model.q == model.q
        np.testing.assert_allclose(back_model.means, model.means, atol=1e-4)
        np.testing.assert_allclose(back_codec.basis, codec.basis, atol=1e-5)
        # conditionals from the reloaded model stay close
        u = [0.0, 1.0, 0.0]
        a = conditional_mean_scores(mog_condition(model, u))
        b = conditional_mean_scores(mog_condition(back_model, u))
        np.testing.assert_allclose(a, b, atol=1e-3)

    def test_load_missing_manifest(self, tmp_path):
        from hrtfgp.container import ContainerError
        with pytest.raises(ContainerError):
            load_mog(str(tmp_path / "absent.json"))
