import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_pd
from spectralgp.bounds import (
    BoundReport,
    binomial_lower_bound,
    check_lemma6,
    check_lemma9_10,
    check_theorem3,
    check_theorem4,
    frobenius_distance,
    largest_eigenvalue_gap,
    spectral_distance,
    tau,
    verify_theorem2,
    wp_interval,
)
from spectralgp.clustergen import cluster_sizes, generate, lambda_for_a, required_samples
from spectralgp.errors import DegenerateDenominator, InvalidLambda, OrderMismatch, PreconditionViolated
from spectralgp.gp import TrainConfig
from spectralgp.kernel import HyperParams, gram


def perturbed(rs, K, lam):
    """``K + E`` with ``||E||_2 = lam`` exactly."""
    n = K.shape[0]
    E = rs.normal(size=(n, n))
    E = E + E.T
    return K + lam * E / np.abs(np.linalg.eigvalsh(E)).max()


def psd_perturbed(rs, K, lam):
    """PSD matrix within spectral distance ``lam`` of PSD ``K``.

    Clipping negative eigenvalues of ``K + E`` moves it no further from the
    PSD matrix ``K`` than ``2 lam``; the halved ``E`` keeps the total within ``lam``.
    """
    w, V = np.linalg.eigh(perturbed(rs, K, 0.5 * lam))
    return (V * np.clip(w, 0, None)) @ V.T


class TestDistances:
    def test_identical(self, rs):
        K = random_pd(rs, 5)
        assert spectral_distance(K, K) == 0.0

    def test_diagonal_example(self):
        # DERIVED: eigenvalues of diag(0.5, -0.3)
        assert spectral_distance(np.diag([0.5, -0.3]), np.zeros((2, 2))) == pytest.approx(0.5, rel=1e-15)
        assert spectral_distance(np.diag([0.2, -0.7]), np.zeros((2, 2))) == pytest.approx(0.7, rel=1e-15)
        assert largest_eigenvalue_gap(np.diag([0.2, -0.7]), np.zeros((2, 2))) == pytest.approx(0.2, rel=1e-15)

    def test_identity_vs_zero(self):
        assert spectral_distance(np.eye(4), np.zeros((4, 4))) == pytest.approx(1.0)
        assert frobenius_distance(np.eye(4), np.zeros((4, 4))) == pytest.approx(2.0)

    def test_order_mismatch(self):
        with pytest.raises(OrderMismatch):
            spectral_distance(np.eye(2), np.eye(3))

    @given(st.integers(1, 12), st.integers(0, 2**31))
    def test_spectral_below_frobenius(self, n, seed):
        rs = np.random.default_rng(seed)
        A, B = random_pd(rs, n), random_pd(rs, n)
        assert spectral_distance(A, B) <= frobenius_distance(A, B) + 1e-12


class TestBinomial:
    def test_all_successes(self):
        # DERIVED: (1 - c)^{1/n} solves P(X = n) = 1 - c
        assert binomial_lower_bound(100, 100) == pytest.approx(0.05 ** (1 / 100), rel=1e-10)

    def test_zero(self):
        assert binomial_lower_bound(0, 10) == 0.0

    def test_below_rate(self):
        for k in range(1, 20):
            assert binomial_lower_bound(k, 20) < k / 20

    def test_no_trials(self):
        with pytest.raises(ValueError):
            binomial_lower_bound(0, 0)


class TestLemma6:
    def test_identical_holds(self, rs):
        K = random_pd(rs, 6)
        res = check_lemma6(K, K, 0.0, 1.0)
        assert res.passed
        assert res.upper_slack >= -1e-12 and res.lower_slack >= -1e-12

    def test_random_pairs(self, rs):
        # DERIVED: randomized property oracle over 200 pairs
        for _ in range(200):
            n = int(rs.integers(1, 31))
            s = float(rs.uniform(0.3, 2.0))
            K = random_pd(rs, n, 1e4) * float(rs.uniform(0.01, 3.0))
            lam = float(rs.uniform(0, 0.95)) * s**2
            K2 = psd_perturbed(rs, K, lam)
            assert check_lemma6(K, K2, lam, s).passed

    def test_needs_psd_approximation(self):
        # the upper side fails for indefinite K': K = 0, K' = -lam I
        lam, s = 0.5, 1.0
        assert not check_lemma6(np.zeros((2, 2)), -lam * np.eye(2), lam, s).passed

    def test_precondition(self, rs):
        K = random_pd(rs, 4)
        with pytest.raises(PreconditionViolated):
            check_lemma6(K, perturbed(rs, K, 0.5), 0.1, 1.0)

    def test_tight_when_distance_equals_lambda(self):
        # K' = K + lam I: Q'^-1 = Q^-1 / (1 + e) when K = 0, within the sandwich
        n, lam = 3, 0.4
        res = check_lemma6(np.zeros((n, n)), lam * np.eye(n), lam, 1.0)
        assert res.passed


class TestTau:
    def test_spot_value(self):
        # DERIVED: max(log 1.1, |log 0.9|) / min(log 1.5, log 3)
        want = max(math.log(1.1), abs(math.log(0.9))) / min(math.log(1.5), math.log(3.0))
        got = tau(np.diag([0.5, 2.0]), 0.1, 1.0)
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(0.25986, rel=1e-4)

    def test_zero_lambda(self):
        assert tau(np.diag([0.5, 2.0]), 0.0, 1.0) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateDenominator):
            tau(np.diag([0.0, 2.0]), 0.1, 1.0)

    @pytest.mark.parametrize("lam", [-0.1, 1.0, 2.0])
    def test_invalid_lambda(self, lam):
        with pytest.raises(InvalidLambda):
            tau(np.eye(2), lam, 1.0)


class TestLemma910:
    def test_identical_equal(self, rs):
        K = random_pd(rs, 5)
        res = check_lemma9_10(K, K, rs.normal(size=5), 0.0, 1.3)
        assert res.passed
        assert res.logdet == res.logdet_approx and res.nll == res.nll_approx

    def test_random_gp_instances(self, rs):
        for _ in range(50):
            n = int(rs.integers(2, 30))
            hp = HyperParams.create(rs.uniform(0.5, 2.0, size=2), float(rs.uniform(1.2, 2.0)))
            X = rs.normal(size=(n, 2))
            K = gram(X, hp)
            lam = float(rs.uniform(0.01, 0.5))
            K2 = perturbed(rs, K, lam)
            assert check_lemma9_10(K, K2, rs.normal(size=n), lam, hp.noise_std).passed

    def test_requires_lambda_below_noise(self, rs):
        K = random_pd(rs, 3)
        with pytest.raises(PreconditionViolated):
            check_lemma9_10(K, K, np.zeros(3), 2.0, 1.0)


class TestTheorem3:
    def setup_data(self, rs, n=20, noise=1.5):
        hp = HyperParams.create([1.0, 0.7], noise)
        X = rs.normal(size=(n, 2))
        return hp, X, rs.normal(size=n), gram(X, hp)

    def test_identical(self, rs):
        hp, X, y, K = self.setup_data(rs)
        res = check_theorem3(X, y, hp, K, rs.normal(size=(5, 2)))
        assert res.passed
        for p in res.points:
            assert p.mean == p.mean_approx and p.var == p.var_approx

    def test_variance_bound_random(self, rs):
        for _ in range(30):
            hp, X, y, K = self.setup_data(rs)
            res = check_theorem3(X, y, hp, perturbed(rs, K, 0.3), rs.normal(size=(5, 2)))
            assert res.count("var_ok") == 0
            assert res.count("mean_propagated_ok") == 0

    def test_prior_point(self, rs):
        hp, X, y, K = self.setup_data(rs)
        res = check_theorem3(X, y, hp, perturbed(rs, K, 0.3), np.array([[50.0, 50.0]]))
        pt = res.points[0]
        assert abs(pt.mean) < 1e-12 and pt.var == pytest.approx(1.0)
        assert pt.passed

    def test_cross_approx_recorded(self, rs):
        hp, X, y, K = self.setup_data(rs, n=5)
        res = check_theorem3(X, y, hp, K, np.zeros((1, 2)), cross_approx=np.zeros((1, 5)))
        assert res.points[0].mean_cross_approx == 0.0

    def test_precondition(self, rs):
        hp, X, y, K = self.setup_data(rs, noise=0.3)
        with pytest.raises(PreconditionViolated):
            check_theorem3(X, y, hp, perturbed(rs, K, 0.5), np.zeros((1, 2)))


class TestTheorem2:
    def test_success_monotone_in_p(self):
        n = sum(cluster_sizes(3))
        lam = lambda_for_a(n, 1.0)
        ds = generate(3, 16, lam, 1.0, 0)
        hp = ds.hyperparams()
        runs = [verify_theorem2(ds, hp, 1.0, 0.2, p, 60, 1) for p in (1, 8, 64)]
        means = [np.mean(r.frobenius) for r in runs]
        assert means[0] > means[1] > means[2]
        # a threshold between the p=1 and p=64 levels separates the success rates
        lam = 0.5 * (np.median(runs[0].frobenius) + np.median(runs[2].frobenius))
        rates = [verify_theorem2(ds, hp, lam, 0.2, p, 60, 1).success_rate for p in (1, 8, 64)]
        assert rates[0] <= rates[1] <= rates[2] and rates[2] > rates[0]

    def test_required_samples_passes(self):
        n = sum(cluster_sizes(4))
        lam = lambda_for_a(n, 1.0)
        ds = generate(4, 64, lam, 1.0, 3)
        sizes = [int(np.sum(ds.labels == i)) ** 2 for i in range(1, 5)]
        p = required_samples(4, sizes, lam, 0.2, ds.spec.a)
        res = verify_theorem2(ds, ds.hyperparams(), lam, 0.2, p, 40, 0)
        assert res.passed
        assert res.to_dict()["target"] == pytest.approx(0.6)

    def test_invalid(self):
        ds = generate(2, 4, 0.1, 1.0, 0)
        with pytest.raises(ValueError):
            verify_theorem2(ds, ds.hyperparams(), 0.1, 0.2, 0, 10, 0)


class TestTheorem4:
    def test_wp_interval_identical(self):
        lo, hi = wp_interval([0.5, 2.0], [0.5, 2.0], 1.0, 0.0)
        assert lo == hi == 0.0

    def test_small_pipeline(self, rs):
        X = rs.normal(size=(25, 2))
        y = np.sin(X[:, 0]) + 0.1 * rs.normal(size=25)
        init = HyperParams.create([1.0, 1.0], 1.5)
        seeds = check_theorem4(X, y - y.mean(), init, 400, [0, 1], config=TrainConfig(steps=30, freeze_noise=True))
        assert len(seeds) == 2
        for s in seeds:
            assert s.lam < init.noise_var
            assert s.rho >= s.lam / init.noise_var
            assert s.passed


def test_bound_report_json():
    rep = BoundReport(0.1, 0.2, 0.3)
    rep.add("x", True, 0.5)
    assert rep.passed
    rep.add("y", False)
    assert not rep.passed
    d = json.loads(rep.to_json())
    assert d["verdicts"]["y"] == {"passed": False, "slack": None}
    assert d["passed"] is False
