"""Exact Gaussian-process regression with a unit-signal SE kernel.

The negative log likelihood deliberately omits the ``n/2 log(2 pi)``
constant; it is irrelevant to the optimizer and dropping it keeps values
directly comparable with the approximation bounds in :mod:`spectralgp.bounds`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NonFiniteLoss
from .kernel import HyperParams, SEKernel
from .numerics import cho_solve, cholesky, logdet_from_factor

log = logging.getLogger(__name__)

EXACT = SEKernel()


class GpPosterior(NamedTuple):
    mean: float
    variance: float


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    freeze_noise: bool = False


@dataclass
class TrainTrace:
    iterations: list = field(default_factory=list)  # (step, nll, HyperParams)
    final: HyperParams | None = None

    @property
    def nlls(self) -> np.ndarray:
        return np.array([it[1] for it in self.iterations])

    @property
    def initial_nll(self) -> float:
        return self.iterations[0][1]

    @property
    def final_nll(self) -> float:
        return min(self.nlls)


class Posterior:
    """Cached factorization of ``K + sigma^2 I`` for repeated prediction."""

    def __init__(self, X, y, hp: HyperParams, kernel=EXACT, K=None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        self.hp = hp
        self.kernel = kernel
        K = kernel.gram(self.X, hp) if K is None else K
        self.factor = cholesky(K + hp.noise_var * np.eye(len(self.y)))
        self.alpha = cho_solve(self.factor, self.y)

    def predict(self, Xs, **cross_kwargs) -> tuple[np.ndarray, np.ndarray]:
        """Latent mean and variance at each row of ``Xs``."""
        Ks = self.kernel.cross(self.X, np.atleast_2d(Xs), self.hp, **cross_kwargs)
        return self.predict_from_cross(Ks)

    def predict_from_cross(self, Ks) -> tuple[np.ndarray, np.ndarray]:
        Ks = np.atleast_2d(Ks)
        mean = Ks @ self.alpha
        V = cho_solve(self.factor, Ks.T)
        var = 1.0 - np.einsum("ij,ji->i", Ks, V)
        return mean, var


def gp_predict(X, y, xs, hp: HyperParams) -> GpPosterior:
    """Predictive mean and latent variance at a single test input."""
    mean, var = Posterior(X, y, hp).predict(np.atleast_2d(xs))
    return GpPosterior(float(mean[0]), float(var[0]))


def nll_terms(K: np.ndarray, y, noise_var: float) -> tuple[float, float]:
    """``(1/2 log|K + s I|, 1/2 y^T (K + s I)^-1 y)``."""
    y = np.asarray(y, dtype=float).ravel()
    factor = cholesky(K + noise_var * np.eye(len(y)))
    alpha = cho_solve(factor, y)
    return 0.5 * logdet_from_factor(factor), 0.5 * float(y @ alpha)


def gp_nll(X, y, hp: HyperParams, kernel=EXACT) -> float:
    logdet, quad = nll_terms(kernel.gram(np.atleast_2d(X), hp), y, hp.noise_var)
    return logdet + quad


def nll_and_grad(X, y, hp: HyperParams, kernel=EXACT) -> tuple[float, np.ndarray]:
    """NLL and its gradient in ``(log theta_1..d, log sigma)``.

    Uses ``d nll = 1/2 tr((Q^-1 - a a^T) dQ)`` with ``a = Q^-1 y``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    K = kernel.gram(X, hp)
    factor = cholesky(K + hp.noise_var * np.eye(len(y)))
    alpha = cho_solve(factor, y)
    nll = 0.5 * logdet_from_factor(factor) + 0.5 * float(y @ alpha)
    W = cho_solve(factor, np.eye(len(y))) - np.outer(alpha, alpha)
    W = 0.5 * (W + W.T)
    g_ls = kernel.lengthscale_grad(X, hp, W, K)
    g_noise = hp.noise_var * np.trace(W)
    return nll, np.append(g_ls, g_noise)


def gp_train(X, y, init: HyperParams, config: TrainConfig | None = None, kernel=EXACT) -> TrainTrace:
    """Minimize the NLL with Adam in log space.

    Every step is recorded; ``final`` is the best iterate seen, so its NLL
    never exceeds the initial one.
    """
    cfg = config or TrainConfig()
    v = init.to_vector()
    m1 = np.zeros_like(v)
    m2 = np.zeros_like(v)
    trace = TrainTrace()
    best = (np.inf, init)
    for step in range(cfg.steps + 1):
        hp = HyperParams.from_vector(v)
        try:
            nll, grad = nll_and_grad(X, y, hp, kernel)
        except Exception as exc:  # factorization blew up along the path
            trace.final = best[1]
            raise NonFiniteLoss(f"NLL evaluation failed at step {step}: {exc}", trace) from exc
        if not (np.isfinite(nll) and np.all(np.isfinite(grad))):
            trace.final = best[1]
            raise NonFiniteLoss(f"non-finite NLL at step {step}", trace)
        trace.iterations.append((step, nll, hp))
        if nll < best[0]:
            best = (nll, hp)
        if step == cfg.steps:
            break
        if cfg.freeze_noise:
            grad[-1] = 0.0
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * grad
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * grad**2
        mhat = m1 / (1 - cfg.beta1 ** (step + 1))
        vhat = m2 / (1 - cfg.beta2 ** (step + 1))
        v = v - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
    trace.final = best[1]
    log.debug("gp_train: nll %.6g -> %.6g over %d steps", trace.initial_nll, best[0], cfg.steps)
    return trace
