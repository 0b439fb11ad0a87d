"""Exact and sparse-spectrum Gaussian-process regression with spectral-closeness checks.

Modules
-------
numerics    Cholesky with jitter retries, eigen-decomposition, finite differences.
kernel      SE ARD kernel, spectral sampling, random cosine kernels, feature maps.
gp          Exact GP prediction, NLL, gradient and Adam training.
ssgp        Averaged and cluster-zeroed cosine Grams, weight-space SSGP.
clustergen  Cluster-compliant synthetic data and the kernel-value bands.
bounds      Numerical verification of the approximation bounds.
embed       Mixture-prior auto-encoder used to disentangle inputs.
harness     CSV ingestion, experiments, CLI.
"""

from .errors import SpectralGPError
from .gp import Posterior, TrainConfig, gp_nll, gp_predict, gp_train
from .kernel import HyperParams, SpectralDraw, SpectralKind, gram, sample_spectral, se_kernel
from .ssgp import averaged_gram, clustered_gram, fit_ssgp

__version__ = "0.1.0"

__all__ = [
    "HyperParams",
    "Posterior",
    "SpectralDraw",
    "SpectralGPError",
    "SpectralKind",
    "TrainConfig",
    "averaged_gram",
    "clustered_gram",
    "fit_ssgp",
    "gp_nll",
    "gp_predict",
    "gp_train",
    "gram",
    "sample_spectral",
    "se_kernel",
]
