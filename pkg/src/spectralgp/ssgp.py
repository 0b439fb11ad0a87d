"""Sparse-spectrum approximations of the exact GP.

Two Gram constructions share one spectral draw:

* ``Averaged``: ``K'_uv = 1/p sum_i cos(eps_i . (x_u - x_v) / theta)``;
* ``ClusteredZeroed``: the same average on in-cluster entries, exactly zero
  across clusters.

:func:`fit_ssgp` is the weight-space form used for prediction at scale.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import LabelLengthMismatch, SpectralGPError
from .gp import GpPosterior
from .kernel import (
    CosineKernel,
    FeatureMap,
    HyperParams,
    SpectralDraw,
    SpectralKind,
    cosine_gram,
    feature_matrix,
    sample_spectral,
    whiten,
)
from .numerics import cho_solve, cholesky


class Construction(str, enum.Enum):
    AVERAGED = "averaged"
    CLUSTERED_ZEROED = "clustered_zeroed"


@dataclass(frozen=True, eq=False)
class ApproxGram:
    matrix: np.ndarray
    draw: SpectralDraw
    construction: Construction
    labels: np.ndarray | None = None

    def kernel(self, hp: HyperParams) -> CosineKernel:
        """Covariance model reproducing this matrix (for cross-vectors and training)."""
        return CosineKernel(self.draw.standardized(hp), self.labels)


def averaged_gram(X, hp: HyperParams, p: int, seed: int) -> ApproxGram:
    draw = sample_spectral(p, hp, SpectralKind.STANDARD_NORMAL, seed)
    K = cosine_gram(X, draw.vectors, hp)
    return ApproxGram(K, draw, Construction.AVERAGED)


def clustered_gram(X, labels, hp: HyperParams, p: int, seed: int) -> ApproxGram:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise LabelLengthMismatch(f"{labels.size} labels for {X.shape[0]} points")
    draw = sample_spectral(p, hp, SpectralKind.STANDARD_NORMAL, seed)
    K = CosineKernel(draw.vectors, labels).gram(X, hp)
    return ApproxGram(K, draw, Construction.CLUSTERED_ZEROED, labels)


def assign_nearest(Xs, centers, hp: HyperParams) -> np.ndarray:
    """Index of the nearest center in the whitened metric."""
    A = whiten(Xs, hp)
    C = whiten(centers, hp)
    d2 = ((A[:, None, :] - C[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def label_centers(X, labels) -> tuple[np.ndarray, np.ndarray]:
    """Distinct labels and the mean input of each."""
    X = np.atleast_2d(X)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    return uniq, np.stack([X[labels == u].mean(axis=0) for u in uniq])


def cross_vector(gram: ApproxGram, X, xs, hp: HyperParams, test_label=None) -> np.ndarray:
    """Approximate ``k'_*`` for one test input using the draw behind ``gram``."""
    xs = np.atleast_2d(xs)
    kernel = gram.kernel(hp)
    if gram.labels is None:
        return kernel.cross(X, xs, hp)[0]
    if test_label is None:
        uniq, centers = label_centers(X, gram.labels)
        test_label = uniq[assign_nearest(xs, centers, hp)[0]]
    return kernel.cross(X, xs, hp, test_labels=[test_label])[0]


def predict_with_gram(K_approx, k_star, y, hp: HyperParams) -> GpPosterior:
    """Exact-GP predictive equations with ``K`` and ``k_*`` replaced."""
    K = K_approx.matrix if isinstance(K_approx, ApproxGram) else np.asarray(K_approx, dtype=float)
    k_star = np.asarray(k_star, dtype=float).ravel()
    factor = cholesky(K + hp.noise_var * np.eye(K.shape[0]))
    mean = k_star @ cho_solve(factor, np.asarray(y, dtype=float).ravel())
    var = 1.0 - k_star @ cho_solve(factor, k_star)
    return GpPosterior(float(mean), float(var))


@dataclass(frozen=True, eq=False)
class SsgpModel:
    feature_map: FeatureMap
    weights: np.ndarray
    hp: HyperParams
    seed: int
    precision_factor: tuple  # Cholesky of Phi^T Phi + sigma^2 I

    @property
    def m(self) -> int:
        return self.feature_map.m

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        Phi = feature_matrix(np.atleast_2d(Xs), self.feature_map)
        mean = Phi @ self.weights
        if self.precision_factor is None:
            raise SpectralGPError("model was restored without its training data; variance unavailable")
        V = cho_solve(self.precision_factor, Phi.T)
        var = self.hp.noise_var * np.einsum("ij,ji->i", Phi, V)
        return mean, var

    def predict_mean(self, Xs) -> np.ndarray:
        return feature_matrix(np.atleast_2d(Xs), self.feature_map) @ self.weights

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "m": self.m,
                "lengthscales": self.hp.lengthscales.tolist(),
                "noise_std": self.hp.noise_std,
                "weights": self.weights.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, X=None) -> "SsgpModel":
        """Rebuild a model; pass the training inputs to restore predictive variances."""
        obj = json.loads(text)
        hp = HyperParams.create(obj["lengthscales"], obj["noise_std"])
        fm = FeatureMap(sample_spectral(obj["m"], hp, SpectralKind.FREQUENCY, obj["seed"]).vectors)
        factor = None
        if X is not None:
            Phi = feature_matrix(X, fm)
            factor = cholesky(Phi.T @ Phi + hp.noise_var * np.eye(2 * fm.m))
        return cls(fm, np.asarray(obj["weights"], dtype=float), hp, int(obj["seed"]), factor)


def fit_ssgp(X, y, hp: HyperParams, m: int, seed: int) -> SsgpModel:
    """Weight-space SSGP with ``m`` frequencies (``2m`` features).

    ``w = (Phi^T Phi + sigma^2 I)^-1 Phi^T y``. When ``n <= 2m`` the
    equivalent dual form ``Phi^T (Phi Phi^T + sigma^2 I)^-1 y`` is solved
    instead, which is cheaper and better conditioned in that regime.
    """
    if int(m) < 1:
        raise SpectralGPError(f"feature count must be >= 1, got {m}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    fm = FeatureMap(sample_spectral(m, hp, SpectralKind.FREQUENCY, seed).vectors)
    Phi = feature_matrix(X, fm)
    s2 = hp.noise_var
    n = Phi.shape[0]
    if n <= 2 * fm.m:
        a = cho_solve(cholesky(Phi @ Phi.T + s2 * np.eye(n)), y)
        w = Phi.T @ a
    else:
        w = None
    factor = cholesky(Phi.T @ Phi + s2 * np.eye(2 * fm.m))
    if w is None:
        w = cho_solve(factor, Phi.T @ y)
    return SsgpModel(fm, w, hp, int(seed), factor)
