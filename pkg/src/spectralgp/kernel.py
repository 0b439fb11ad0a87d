"""Squared-exponential ARD kernel, spectral sampling and random cosine kernels.

The signal variance is fixed at one throughout; only the per-dimension
lengthscales and the observation noise are free. Two spectral
parameterizations coexist:

* frequencies ``r ~ N(0, (4 pi^2 Theta)^-1)`` driving the trigonometric feature
  map ``cos(2 pi r.x), sin(2 pi r.x)``;
* standardized draws ``eps ~ N(0, I)`` driving the cosine kernel
  ``cos(eps . (x - x') / theta)``, which do not depend on the lengthscales.

Both are generated from the same keyed normal stream, so for a given seed
``eps = 2 pi theta * r`` holds exactly and the two views describe the same
approximate kernel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import rng
from .errors import DimensionMismatch, SpectralGPError

SPECTRAL_TAG = "spectral"


@dataclass(frozen=True, eq=False)
class HyperParams:
    """ARD lengthscales and noise standard deviation, stored in log space."""

    log_lengthscales: np.ndarray
    log_noise_std: float

    def __post_init__(self):
        ll = np.array(self.log_lengthscales, dtype=float).ravel()
        ll.setflags(write=False)
        object.__setattr__(self, "log_lengthscales", ll)
        object.__setattr__(self, "log_noise_std", float(self.log_noise_std))
        if ll.size == 0 or not np.all(np.isfinite(ll)) or not np.isfinite(self.log_noise_std):
            raise SpectralGPError("hyperparameters must be finite with at least one lengthscale")

    @classmethod
    def create(cls, lengthscales, noise_std: float) -> "HyperParams":
        ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if np.any(ls <= 0) or noise_std <= 0:
            raise SpectralGPError("lengthscales and noise_std must be strictly positive")
        return cls(np.log(ls), float(np.log(noise_std)))

    @classmethod
    def from_vector(cls, v) -> "HyperParams":
        v = np.asarray(v, dtype=float)
        return cls(v[:-1], v[-1])

    def to_vector(self) -> np.ndarray:
        return np.append(self.log_lengthscales, self.log_noise_std)

    @property
    def dim(self) -> int:
        return self.log_lengthscales.size

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    @property
    def noise_std(self) -> float:
        return float(np.exp(self.log_noise_std))

    @property
    def noise_var(self) -> float:
        return float(np.exp(2.0 * self.log_noise_std))

    def with_noise(self, noise_std: float) -> "HyperParams":
        return HyperParams(self.log_lengthscales, np.log(noise_std))

    def to_dict(self) -> dict:
        return {"lengthscales": self.lengthscales.tolist(), "noise_std": self.noise_std}

    def __repr__(self) -> str:
        ls = ", ".join(f"{v:.4g}" for v in self.lengthscales)
        return f"HyperParams(lengthscales=[{ls}], noise_std={self.noise_std:.4g})"


class SpectralKind(str, enum.Enum):
    FREQUENCY = "frequency"
    STANDARD_NORMAL = "standard_normal"


@dataclass(frozen=True, eq=False)
class SpectralDraw:
    vectors: np.ndarray  # (p, d)
    kind: SpectralKind
    seed: int

    @property
    def p(self) -> int:
        return self.vectors.shape[0]

    def standardized(self, hp: HyperParams) -> np.ndarray:
        """The draw expressed as ``eps`` vectors of the cosine kernel."""
        if self.kind is SpectralKind.STANDARD_NORMAL:
            return self.vectors
        return 2.0 * np.pi * self.vectors * hp.lengthscales

    def frequencies(self, hp: HyperParams) -> np.ndarray:
        """The draw expressed as spectral frequencies ``r``."""
        if self.kind is SpectralKind.FREQUENCY:
            return self.vectors
        return self.vectors / (2.0 * np.pi * hp.lengthscales)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    frequencies: np.ndarray  # (m, d)

    @property
    def m(self) -> int:
        return self.frequencies.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.m)


def _check_dims(X, d: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != d:
        raise DimensionMismatch(f"inputs have dimension {X.shape[1]}, expected {d}")
    return X


def whiten(X, hp: HyperParams) -> np.ndarray:
    """Map inputs to ``Theta^{-1/2} x`` where the kernel is isotropic."""
    return _check_dims(X, hp.dim) / hp.lengthscales


def se_kernel(x, x2, hp: HyperParams) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.size != hp.dim or x2.size != hp.dim:
        raise DimensionMismatch(f"points of size {x.size}/{x2.size} for a {hp.dim}-d kernel")
    r = (x - x2) / hp.lengthscales
    return float(np.exp(-0.5 * np.dot(r, r)))


def gram(X, hp: HyperParams, X2=None) -> np.ndarray:
    """Gram matrix ``K_ij = k(x_i, x_j)``; cross-covariance when ``X2`` is given."""
    A = whiten(X, hp)
    if X2 is None:
        K = np.exp(-0.5 * cdist(A, A, "sqeuclidean"))
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    return np.exp(-0.5 * cdist(A, whiten(X2, hp), "sqeuclidean"))


def sample_spectral(p: int, hp: HyperParams, kind: SpectralKind | str, seed: int) -> SpectralDraw:
    """Draw ``p`` spectral vectors of dimension ``hp.dim``.

    ``FREQUENCY`` coordinates follow ``N(0, 1 / (4 pi^2 theta_l^2))`` and
    ``STANDARD_NORMAL`` coordinates follow ``N(0, 1)``.
    """
    if int(p) < 1:
        raise SpectralGPError(f"spectral sample count must be >= 1, got {p}")
    kind = SpectralKind(kind)
    eps = rng.standard_normal(seed, SPECTRAL_TAG, 0, (int(p), hp.dim))
    if kind is SpectralKind.FREQUENCY:
        eps = eps / (2.0 * np.pi * hp.lengthscales)
    eps.setflags(write=False)
    return SpectralDraw(eps, kind, int(seed))


def cosine_kernel(x, x2, eps, hp: HyperParams) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    eps = np.asarray(eps, dtype=float).ravel()
    if not (x.size == x2.size == eps.size == hp.dim):
        raise DimensionMismatch("cosine kernel arguments disagree on dimension")
    return float(np.cos(np.dot(eps, (x - x2) / hp.lengthscales)))


def _phase(X, eps, hp: HyperParams) -> np.ndarray:
    return whiten(X, hp) @ np.asarray(eps, dtype=float).T


def cosine_gram(X, eps, hp: HyperParams, X2=None) -> np.ndarray:
    """Average of the cosine kernels indexed by the rows of ``eps``.

    Evaluated through ``cos(a - b) = cos a cos b + sin a sin b`` so the
    result is a sum of rank-2 positive semidefinite terms.
    """
    eps = np.atleast_2d(eps)
    p = eps.shape[0]
    A = _phase(X, eps, hp)
    C, S = np.cos(A), np.sin(A)
    if X2 is None:
        K = (C @ C.T + S @ S.T) / p
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    B = _phase(X2, eps, hp)
    return (C @ np.cos(B).T + S @ np.sin(B).T) / p


def feature_matrix(X, fm: FeatureMap) -> np.ndarray:
    """Rows are the 2m trigonometric features of each input, interleaved cos/sin."""
    X = _check_dims(X, fm.frequencies.shape[1])
    A = 2.0 * np.pi * X @ fm.frequencies.T
    out = np.empty((X.shape[0], 2 * fm.m))
    out[:, 0::2] = np.cos(A)
    out[:, 1::2] = np.sin(A)
    return fm.scale * out


def feature_vector(x, fm: FeatureMap) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != fm.frequencies.shape[1]:
        raise DimensionMismatch(f"point of size {x.size} for a {fm.frequencies.shape[1]}-d feature map")
    return feature_matrix(x[None, :], fm)[0]


# ---------------------------------------------------------------------------
# Covariance models used by training: each returns its Gram matrix and the
# contraction  1/2 sum_uv W_uv dK_uv / dlog(theta_l)  for a symmetric W.
# ---------------------------------------------------------------------------


class SEKernel:
    """Exact squared-exponential covariance."""

    name = "se"

    def gram(self, X, hp: HyperParams) -> np.ndarray:
        return gram(X, hp)

    def cross(self, X, Xs, hp: HyperParams, **_) -> np.ndarray:
        return gram(Xs, hp, X)

    def lengthscale_grad(self, X, hp: HyperParams, W: np.ndarray, K: np.ndarray | None = None) -> np.ndarray:
        """``1/2 * d/dlog(theta) sum(W * K)`` for symmetric ``W``, the NLL's trace term."""
        A = whiten(X, hp)
        if K is None:
            K = gram(X, hp)
        M = W * K
        row = M.sum(axis=1)
        # sum_uv M_uv (a_u - a_v)^2 per dimension, M symmetric
        quad = 2.0 * (A**2).T @ row - 2.0 * np.einsum("ul,uv,vl->l", A, M, A)
        return 0.5 * quad


class CosineKernel:
    """Averaged random cosine covariance, optionally zeroed across clusters.

    ``eps`` holds the standardized draws. When ``labels`` are given, entries
    linking points with different labels are set to zero, which keeps the
    matrix positive semidefinite because every surviving block is itself an
    averaged cosine Gram.
    """

    name = "cosine"

    def __init__(self, eps, labels=None):
        self.eps = np.atleast_2d(np.asarray(eps, dtype=float))
        self.labels = None if labels is None else np.asarray(labels)

    @property
    def p(self) -> int:
        return self.eps.shape[0]

    def _mask(self, labels_a, labels_b) -> np.ndarray:
        return (np.asarray(labels_a)[:, None] == np.asarray(labels_b)[None, :]).astype(float)

    def gram(self, X, hp: HyperParams) -> np.ndarray:
        K = cosine_gram(X, self.eps, hp)
        if self.labels is not None:
            K = K * self._mask(self.labels, self.labels)
        return K

    def cross(self, X, Xs, hp: HyperParams, test_labels=None) -> np.ndarray:
        Ks = cosine_gram(Xs, self.eps, hp, X)
        if self.labels is not None:
            if test_labels is None:
                raise SpectralGPError("clustered covariance needs labels for the test inputs")
            Ks = Ks * self._mask(test_labels, self.labels)
        return Ks

    def lengthscale_grad(self, X, hp: HyperParams, W: np.ndarray, K: np.ndarray | None = None) -> np.ndarray:
        """Same contract as :meth:`SEKernel.lengthscale_grad`; the draws are held fixed."""
        if self.labels is not None:
            W = W * self._mask(self.labels, self.labels)
        A = whiten(X, hp)
        phase = A @ self.eps.T
        C, S = np.cos(phase), np.sin(phase)
        G = S * (W @ C) - C * (W @ S)
        return np.einsum("ul,ui,il->l", A, G, self.eps) / self.p
