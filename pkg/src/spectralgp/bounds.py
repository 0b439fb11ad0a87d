"""Numerical verification of the spectral-closeness bounds.

Every check evaluates both sides of an inequality on concrete matrices and
records the slack. Two-sided ``(1 +- e) * x`` statements are tested as interval
membership with an absolute tolerance of ``ABS_TOL`` for rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rng
from .errors import (
    DegenerateDenominator,
    InvalidLambda,
    OrderMismatch,
    PreconditionViolated,
)
from .gp import TrainConfig, gp_train, nll_terms
from .kernel import CosineKernel, HyperParams, SpectralKind, gram, sample_spectral
from .numerics import cho_solve, cholesky, sym_eigen
from .ssgp import ApproxGram, clustered_gram

ABS_TOL = 1e-9
LOEWNER_TOL = 1e-10


def _pair(K, K2) -> tuple[np.ndarray, np.ndarray]:
    K = np.asarray(K.matrix if isinstance(K, ApproxGram) else K, dtype=float)
    K2 = np.asarray(K2.matrix if isinstance(K2, ApproxGram) else K2, dtype=float)
    if K.shape != K2.shape or K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise OrderMismatch(f"cannot compare matrices of shapes {K.shape} and {K2.shape}")
    return K, K2


def spectral_distance(K, K2) -> float:
    """``max |eig(K - K2)|``, the spectral norm of the symmetric difference."""
    K, K2 = _pair(K, K2)
    w = np.linalg.eigvalsh(0.5 * ((K - K2) + (K - K2).T))
    return float(np.max(np.abs(w)))


def largest_eigenvalue_gap(K, K2) -> float:
    """Signed largest eigenvalue of ``K - K2`` (the one-sided reading)."""
    K, K2 = _pair(K, K2)
    return float(np.linalg.eigvalsh(0.5 * ((K - K2) + (K - K2).T))[-1])


def frobenius_distance(K, K2) -> float:
    K, K2 = _pair(K, K2)
    return float(np.linalg.norm(K - K2, "fro"))


def _within(value: float, center: float, radius: float) -> bool:
    return abs(value - center) <= radius + ABS_TOL


def _interval(x: float, e: float, bias: float = 0.0) -> tuple[float, float]:
    """``(1 +- e) x +- bias`` as a closed interval."""
    a, b = (1 - e) * x, (1 + e) * x
    return min(a, b) - bias, max(a, b) + bias


def _require_close(K, K2, lam: float) -> float:
    dist = spectral_distance(K, K2)
    if dist > lam * (1 + 1e-12) + 1e-14:
        raise PreconditionViolated(f"spectral distance {dist:.6g} exceeds lambda {lam:.6g}")
    return dist


def _require_below_noise(lam: float, noise_var: float) -> None:
    if not lam < noise_var:
        raise PreconditionViolated(f"lambda {lam:.6g} is not below the noise variance {noise_var:.6g}")


# -- Frobenius closeness over repeated draws -----------------------------------


def binomial_lower_bound(successes: int, trials: int, confidence: float = 0.95) -> float:
    """One-sided Clopper-Pearson lower confidence bound on a success rate."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    if successes <= 0:
        return 0.0
    return float(stats.beta.ppf(1.0 - confidence, successes, trials - successes + 1))


@dataclass
class Theorem2Result:
    lam: float
    delta: float
    p: int
    trials: int
    successes: int
    frobenius: list = field(default_factory=list)
    spectral: list = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def lower_bound(self) -> float:
        return binomial_lower_bound(self.successes, self.trials)

    @property
    def target(self) -> float:
        return 1.0 - 2.0 * self.delta

    @property
    def passed(self) -> bool:
        return self.lower_bound >= self.target

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(
            success_rate=self.success_rate,
            lower_bound=self.lower_bound,
            target=self.target,
            passed=self.passed,
        )
        return out


def verify_theorem2(ds, hp: HyperParams, lam: float, delta: float, p: int, trials: int, seed: int) -> Theorem2Result:
    """Fraction of independent draws whose clustered Gram is Frobenius-close to ``K``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    K = gram(ds.X, hp)
    res = Theorem2Result(float(lam), float(delta), int(p), int(trials), 0)
    for t in range(trials):
        Kc = clustered_gram(ds.X, ds.labels, hp, p, rng.derive_seed(seed, "theorem2", t))
        fro = frobenius_distance(K, Kc)
        res.frobenius.append(fro)
        res.spectral.append(spectral_distance(K, Kc))
        res.successes += int(fro <= lam)
    return res


# -- Loewner sandwich of the inverses ------------------------------------------


@dataclass
class Lemma6Result:
    distance: float
    lam: float
    lower_slack: float  # min eig of Q'^-1 - (1 - e) Q^-1
    upper_slack: float  # min eig of (1 + e) Q^-1 - Q'^-1
    lower_vacuous: bool

    @property
    def passed(self) -> bool:
        return self.upper_slack >= -LOEWNER_TOL and (self.lower_vacuous or self.lower_slack >= -LOEWNER_TOL)


def check_lemma6(K, K2, lam: float, sigma: float) -> Lemma6Result:
    """Loewner sandwich ``(1 - e) Q^-1 <= Q'^-1 <= (1 + e) Q^-1`` with ``e = lam / sigma^2``."""
    K, K2 = _pair(K, K2)
    dist = _require_close(K, K2, lam)
    s2 = sigma**2
    e = lam / s2
    eye = np.eye(K.shape[0])
    Qi = np.linalg.inv(K + s2 * eye)
    Qi2 = np.linalg.inv(K2 + s2 * eye)
    sym = lambda A: 0.5 * (A + A.T)  # noqa: E731
    lower = float(np.linalg.eigvalsh(sym(Qi2 - (1 - e) * Qi))[0])
    upper = float(np.linalg.eigvalsh(sym((1 + e) * Qi - Qi2))[0])
    return Lemma6Result(dist, float(lam), lower, upper, e >= 1.0)


# -- predictive mean and variance ----------------------------------------------


@dataclass
class PointVerdict:
    mean: float
    mean_approx: float
    var: float
    var_approx: float
    eps: float
    mean_ok: bool  # |m - m'| <= e |m'|, the asserted orientation
    mean_ok_swapped: bool  # |m - m'| <= e |m|
    mean_propagated_ok: bool  # bound obtained by carrying e through each quadratic form
    var_ok: bool  # |V - V'| <= e |V'| + e
    var_ok_swapped: bool
    mean_cross_approx: float | None = None  # k'_* variant, reported only

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.var_ok


def _theorem3_point(k, y, f, f2, e: float) -> PointVerdict:
    Qk, Qk2 = cho_solve(f, k), cho_solve(f2, k)
    Qy2 = cho_solve(f2, y)
    m, m2 = float(Qk @ y), float(Qk2 @ y)
    B, B2 = float(k @ Qk), float(k @ Qk2)
    v, v2 = 1.0 - B, 1.0 - B2
    C2 = float(y @ Qy2)
    A2 = B2 + 2.0 * m2 + C2  # (k + y)^T Q'^-1 (k + y)
    return PointVerdict(
        mean=m,
        mean_approx=m2,
        var=v,
        var_approx=v2,
        eps=e,
        mean_ok=_within(m, m2, e * abs(m2)),
        mean_ok_swapped=_within(m, m2, e * abs(m)),
        mean_propagated_ok=_within(m, m2, 0.5 * e * (A2 + B2 + C2)),
        var_ok=_within(v, v2, e * abs(v2) + e),
        var_ok_swapped=_within(v, v2, e * abs(v) + e),
    )


@dataclass
class Theorem3Result:
    distance: float
    noise_var: float
    points: list

    @property
    def violations(self) -> int:
        return sum(not p.passed for p in self.points)

    def count(self, attr: str) -> int:
        """Number of points failing the named verdict."""
        return sum(not getattr(p, attr) for p in self.points)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_theorem3(X, y, hp: HyperParams, K_approx, Xs, cross_approx=None) -> Theorem3Result:
    """Mean and variance bounds at each test input, same ``k_*`` on both sides.

    ``cross_approx`` optionally supplies approximate cross-vectors (rows per
    test point); their means are recorded but not asserted.
    """
    K = gram(X, hp)
    K, K2 = _pair(K, K_approx)
    lam = spectral_distance(K, K2)
    s2 = hp.noise_var
    _require_below_noise(lam, s2)
    y = np.asarray(y, dtype=float).ravel()
    eye = np.eye(K.shape[0])
    f, f2 = cholesky(K + s2 * eye), cholesky(K2 + s2 * eye)
    Ks = gram(np.atleast_2d(Xs), hp, X)
    pts = [_theorem3_point(k, y, f, f2, lam / s2) for k in Ks]
    if cross_approx is not None:
        alpha2 = cho_solve(f2, y)
        for pt, k2 in zip(pts, np.atleast_2d(cross_approx)):
            pt.mean_cross_approx = float(k2 @ alpha2)
    return Theorem3Result(lam, s2, pts)


# -- log-determinant and likelihood --------------------------------------------


def _tau_from_eigs(eigs, lam: float, noise_var: float) -> float:
    if lam < 0 or not lam < noise_var:
        raise InvalidLambda(f"tau needs 0 <= lambda < sigma^2, got {lam} vs {noise_var}")
    num = max(abs(math.log1p(lam / noise_var)), abs(math.log1p(-lam / noise_var)))
    den = min(abs(math.log(eigs[0] + noise_var)), abs(math.log(eigs[-1] + noise_var)))
    if den == 0.0:
        raise DegenerateDenominator("an extreme eigenvalue of K + sigma^2 I equals 1")
    return num / den


def tau(K, lam: float, sigma: float) -> float:
    """Spectral constant relating ``log|Q'|`` to ``log|Q|``."""
    w = np.linalg.eigvalsh(np.asarray(K, dtype=float))
    return _tau_from_eigs(w, lam, sigma**2)


@dataclass
class Lemma910Result:
    lam: float
    tau: float
    logdet: float
    logdet_approx: float
    nll: float
    nll_approx: float
    logdet_ok: bool
    nll_ok: bool
    degenerate: bool  # log|Q| == 0, interval collapses to a point

    @property
    def passed(self) -> bool:
        return self.logdet_ok and self.nll_ok


def check_lemma9_10(K, K2, y, lam: float, sigma: float) -> Lemma910Result:
    K, K2 = _pair(K, K2)
    _require_close(K, K2, lam)
    s2 = sigma**2
    _require_below_noise(lam, s2)
    t = tau(K, lam, sigma)
    ld, q = nll_terms(K, y, s2)
    ld2, q2 = nll_terms(K2, y, s2)
    logdet, logdet2 = 2 * ld, 2 * ld2
    nll, nll2 = ld + q, ld2 + q2
    r = max(t, lam / s2)
    return Lemma910Result(
        lam=float(lam),
        tau=t,
        logdet=logdet,
        logdet_approx=logdet2,
        nll=nll,
        nll_approx=nll2,
        logdet_ok=_within(logdet2, logdet, t * abs(logdet)),
        nll_ok=_within(nll2, nll, r * abs(nll)),
        degenerate=abs(logdet) < ABS_TOL,
    )


# -- separately optimized hyperparameters --------------------------------------


@dataclass
class Theorem4Seed:
    seed: int
    hp_exact: dict
    hp_approx: dict
    lam: float
    tau_exact: float
    tau_approx: float
    rho: float
    nll_exact: float
    nll_approx: float
    nll_interval: tuple
    wp_interval: tuple
    lemma11_ok: bool
    mean_checks: list  # (exact mean, approx mean, lo, hi, ok)

    @property
    def mean_violations(self) -> int:
        return sum(not c[-1] for c in self.mean_checks)

    @property
    def passed(self) -> bool:
        return self.lemma11_ok and self.mean_violations == 0


def wp_interval(eig_exact, eig_approx, noise_var: float, rho: float) -> tuple[float, float]:
    """``sum log((l_i + s2) / (l'_i + s2)) +- rho (1 - sum log(l_i + s2))``."""
    la = np.log(np.asarray(eig_exact) + noise_var)
    lb = np.log(np.asarray(eig_approx) + noise_var)
    center = float(np.sum(la) - np.sum(lb))
    half = abs(rho * (1.0 - float(np.sum(la))))
    return center - half, center + half


def check_theorem4(
    X,
    y,
    init: HyperParams,
    p: int,
    seeds,
    Xs=None,
    config: TrainConfig | None = None,
) -> list[Theorem4Seed]:
    """Train exact and cosine-kernel GPs from ``init`` and compare their optima.

    For each seed a fresh spectral draw defines the approximate kernel. The
    distance ``lam`` is the larger spectral distance measured at the two
    optimizers, the reading of closeness "over the entire parameter space"
    restricted to the points the argument visits.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    Xs = X if Xs is None else np.atleast_2d(Xs)
    config = config or TrainConfig(freeze_noise=True)
    exact = gp_train(X, y, init, config)
    hp_e = exact.final
    out = []
    for seed in seeds:
        draw = sample_spectral(p, init, SpectralKind.STANDARD_NORMAL, seed)
        kern = CosineKernel(draw.vectors)
        approx = gp_train(X, y, init, config, kernel=kern)
        hp_a = approx.final
        s2 = hp_e.noise_var
        K_e, K_a = gram(X, hp_e), kern.gram(X, hp_e)
        K2_e, K2_a = gram(X, hp_a), kern.gram(X, hp_a)
        lam = max(spectral_distance(K_e, K_a), spectral_distance(K2_e, K2_a))
        _require_below_noise(lam, s2)
        w_e = sym_eigen(K_e).eigenvalues
        w_a = sym_eigen(K2_a).eigenvalues
        t_e = _tau_from_eigs(w_e, lam, s2)
        t_a = _tau_from_eigs(w_a, lam, s2)
        t_e2 = _tau_from_eigs(sym_eigen(K2_e).eigenvalues, lam, s2)
        rho = max(t_e, t_a, lam / s2)
        ld, q = nll_terms(K_e, y, s2)
        ld2, q2 = nll_terms(K2_a, y, s2)
        nll_e, nll_a = ld + q, ld2 + q2
        r11 = max(t_e, t_e2, lam / s2)
        lo, hi = _interval(nll_e, r11)
        nll_ok = lo - ABS_TOL <= nll_a <= hi + ABS_TOL
        wlo, whi = wp_interval(w_e, w_a, s2, rho)
        eye = np.eye(X.shape[0])
        alpha_e = cho_solve(cholesky(K_e + s2 * eye), y)
        alpha_a = cho_solve(cholesky(K2_a + s2 * eye), y)
        m_e = gram(Xs, hp_e, X) @ alpha_e
        m_a = kern.cross(X, Xs, hp_a) @ alpha_a
        checks = []
        for a, b in zip(m_e, m_a):
            ilo, ihi = _interval(float(a), rho)
            clo, chi = ilo + wlo, ihi + whi
            checks.append((float(a), float(b), clo, chi, bool(clo - ABS_TOL <= b <= chi + ABS_TOL)))
        out.append(
            Theorem4Seed(
                seed=int(seed),
                hp_exact=hp_e.to_dict(),
                hp_approx=hp_a.to_dict(),
                lam=lam,
                tau_exact=t_e,
                tau_approx=t_a,
                rho=rho,
                nll_exact=nll_e,
                nll_approx=nll_a,
                nll_interval=(lo, hi),
                wp_interval=(wlo, whi),
                lemma11_ok=bool(nll_ok),
                mean_checks=checks,
            )
        )
    return out


# -- report ---------------------------------------------------------------------


@dataclass
class BoundReport:
    spectral_distance: float
    frobenius_distance: float
    lambda_target: float
    tau: float | None = None
    rho: float | None = None
    wp_interval: tuple | None = None
    verdicts: dict = field(default_factory=dict)  # name -> {"passed": bool, "slack": float}
    info: dict = field(default_factory=dict)  # reported quantities that carry no verdict

    def add(self, name: str, passed: bool, slack: float | None = None) -> None:
        self.verdicts[name] = {"passed": bool(passed), "slack": None if slack is None else float(slack)}

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
