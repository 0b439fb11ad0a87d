import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectralgp.errors import LabelLengthMismatch
from spectralgp.gp import Posterior, gp_predict
from spectralgp.kernel import CosineKernel, HyperParams, SpectralKind, gram, sample_spectral
from spectralgp.ssgp import (
    Construction,
    SsgpModel,
    averaged_gram,
    clustered_gram,
    cross_vector,
    fit_ssgp,
    predict_with_gram,
)


def hp(ls, noise=0.5):
    return HyperParams.create(ls, noise)


class TestAveragedGram:
    def test_zero_draw_gives_ones(self, rs):
        X = rs.normal(size=(4, 2))
        K = CosineKernel(np.zeros((1, 2))).gram(X, hp([1.0, 1.0]))
        np.testing.assert_array_equal(K, np.ones((4, 4)))

    @given(st.integers(1, 30), st.integers(1, 50), st.integers(0, 2**31))
    def test_unit_diagonal_and_range(self, n, p, seed):
        rs = np.random.default_rng(seed)
        G = averaged_gram(rs.normal(size=(n, 3)), hp([1.0, 0.5, 2.0]), p, seed)
        assert G.construction is Construction.AVERAGED
        np.testing.assert_array_equal(np.diag(G.matrix), np.ones(n))
        assert np.all(np.abs(G.matrix) <= 1 + 1e-12)

    def test_deterministic(self, rs):
        X = rs.normal(size=(5, 2))
        np.testing.assert_array_equal(averaged_gram(X, hp([1, 1]), 8, 3).matrix, averaged_gram(X, hp([1, 1]), 8, 3).matrix)

    def test_unbiased_entrywise(self, rs):
        """Mean of 200 independent p=50 Grams is within 4 sqrt(V / 10^4) of K."""
        X = rs.normal(size=(6, 2))
        h = hp([1.0, 1.5])
        K = gram(X, h)
        mean = np.mean([averaged_gram(X, h, 50, s).matrix for s in range(200)], axis=0)
        V = 0.5 * (1 - K**2) ** 2
        assert np.all(np.abs(mean - K) <= 4 * np.sqrt(V / (200 * 50)) + 1e-12)


class TestClusteredGram:
    def test_one_cluster_equals_averaged(self, rs):
        X = rs.normal(size=(7, 2))
        np.testing.assert_array_equal(clustered_gram(X, np.zeros(7), hp([1, 1]), 9, 1).matrix, averaged_gram(X, hp([1, 1]), 9, 1).matrix)

    def test_singletons_give_identity(self, rs):
        X = rs.normal(size=(5, 2))
        np.testing.assert_array_equal(clustered_gram(X, np.arange(5), hp([1, 1]), 9, 1).matrix, np.eye(5))

    def test_label_length(self, rs):
        with pytest.raises(LabelLengthMismatch):
            clustered_gram(rs.normal(size=(5, 2)), [0, 1], hp([1, 1]), 3, 0)

    @given(st.integers(2, 30), st.integers(1, 20), st.integers(0, 2**31))
    def test_block_diagonal_psd(self, n, p, seed):
        rs = np.random.default_rng(seed)
        labels = rs.integers(0, 3, size=n)
        K = clustered_gram(rs.normal(size=(n, 2)), labels, hp([1.0, 1.0]), p, seed).matrix
        assert np.all(K[labels[:, None] != labels[None, :]] == 0)
        assert np.linalg.eigvalsh(K)[0] >= -1e-10


class TestFitSsgp:
    def test_zero_targets(self, rs):
        X = rs.normal(size=(10, 2))
        model = fit_ssgp(X, np.zeros(10), hp([1, 1]), 5, 0)
        np.testing.assert_array_equal(model.weights, np.zeros(10))
        np.testing.assert_array_equal(model.predict_mean(rs.normal(size=(3, 2))), np.zeros(3))

    def test_interpolation_regime(self, rs):
        X, y = rs.normal(size=(6, 2)), rs.normal(size=6)
        model = fit_ssgp(X, y, hp([1, 1], 1e-6), 16, 2)
        np.testing.assert_allclose(model.predict_mean(X), y, atol=1e-6)

    @pytest.mark.parametrize("n,m", [(10, 16), (40, 8), (50, 25)])
    def test_function_space_equivalence(self, rs, n, m):
        h = hp([0.8, 1.2], 0.3)
        X, y, Xs = rs.normal(size=(n, 2)), rs.normal(size=n), rs.normal(size=(5, 2))
        model = fit_ssgp(X, y, h, m, 11)
        kern = CosineKernel(sample_spectral(m, h, SpectralKind.STANDARD_NORMAL, 11).vectors)
        mean, var = Posterior(X, y, h, kernel=kern).predict(Xs)
        mean_w, var_w = model.predict(Xs)
        np.testing.assert_allclose(mean_w, mean, atol=1e-8)
        # function-space latent variance 1 - k'Q'^-1 k' equals the weight-space sigma^2 phi^T A^-1 phi
        np.testing.assert_allclose(var_w, var, atol=1e-8)

    def test_normal_equations(self, rs):
        from spectralgp.kernel import feature_matrix

        h = hp([1.0, 1.0], 0.4)
        X, y = rs.normal(size=(30, 2)), rs.normal(size=30)
        model = fit_ssgp(X, y, h, 5, 0)
        Phi = feature_matrix(X, model.feature_map)
        r = (Phi.T @ Phi + h.noise_var * np.eye(10)) @ model.weights - Phi.T @ y
        assert np.abs(r).max() <= 1e-8

    def test_json_round_trip(self, rs):
        X, y = rs.normal(size=(12, 2)), rs.normal(size=12)
        model = fit_ssgp(X, y, hp([0.3, 3.0], 0.2), 6, 5)
        back = SsgpModel.from_json(model.to_json(), X)
        np.testing.assert_array_equal(back.weights, model.weights)
        Xs = rs.normal(size=(4, 2))
        np.testing.assert_array_equal(back.predict_mean(Xs), model.predict_mean(Xs))
        np.testing.assert_allclose(back.predict(Xs)[1], model.predict(Xs)[1], rtol=1e-12)
        assert set(json.loads(model.to_json())) == {"seed", "m", "lengthscales", "noise_std", "weights"}


class TestPredictWithGram:
    def test_exact_gram_matches_gp(self, rs):
        h = hp([1.0, 0.5], 0.6)
        X, y, xs = rs.normal(size=(9, 2)), rs.normal(size=9), rs.normal(size=2)
        post = predict_with_gram(gram(X, h), gram(xs[None], h, X)[0], y, h)
        ref = gp_predict(X, y, xs, h)
        assert post.mean == ref.mean
        assert post.variance == pytest.approx(ref.variance, rel=1e-14)

    def test_zero_cross_vector(self, rs):
        h = hp([1.0], 0.6)
        post = predict_with_gram(gram(rs.normal(size=(4, 1)), h), np.zeros(4), rs.normal(size=4), h)
        assert post.mean == 0.0 and post.variance == 1.0

    def test_cross_vector_zeroed_for_other_cluster(self):
        h = hp([1.0], 0.5)
        X = np.array([[-10.0], [-10.2], [10.0], [10.1]])
        G = clustered_gram(X, np.array([0, 0, 1, 1]), h, 50, 0)
        k = cross_vector(G, X, np.array([9.9]), h)
        assert k[0] == 0.0 and k[1] == 0.0
        assert k[2] > 0.5 and k[3] > 0.5
