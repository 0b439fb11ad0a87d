"""Synthetic clustered datasets and the kernel-value band machinery.

Data are drawn in the whitened space ``Theta^{-1/2} x`` where the SE kernel
is isotropic, then mapped back through ``Theta^{1/2}``. Cluster ``i`` (1-based)
holds ``round(2^{i/2})`` points; its spread is calibrated so that the kernel
value of an in-cluster pair lands in band ``i``:

    (1 - 2^{-(a+i-1)})^{1/4} <= k(x_u, x_v) < (1 - 2^{-(a+i)})^{1/4}

with ``a = log2(n^4 / (n^4 - lambda^4))``. Centers sit on a regular simplex
whose squared whitened edge is 10% above ``1.5 * log(2^a / (2^a - 1))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import BandOutOfRange, InfeasibleDimension, InvalidDelta, InvalidLambda
from .kernel import HyperParams, gram

CENTER_MARGIN = 1.1


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def cluster_sizes(b: int, scale: float = 1.0) -> list[int]:
    """Population of each cluster: ``round(scale * 2^{i/2})``, at least one."""
    return [max(1, _round_half_up(scale * 2.0 ** (i / 2.0))) for i in range(1, b + 1)]


def compute_a(n: float, lam: float) -> float:
    if not (0 < lam < n):
        raise InvalidLambda(f"lambda must lie in (0, n={n}), got {lam}")
    # log(n^4 / (n^4 - lam^4)) = -log1p(-(lam/n)^4), stable for tiny lam/n
    a = -math.log1p(-((lam / n) ** 4)) / math.log(2.0)
    if a == 0.0:
        raise InvalidLambda(f"lambda {lam} is too small relative to n={n}: a underflows to 0")
    return a


def lambda_for_a(n: float, a: float) -> float:
    """Inverse of :func:`compute_a` in ``lambda``."""
    return n * (1.0 - 2.0 ** (-a)) ** 0.25


def _one_minus_pow2(x: float) -> float:
    """``1 - 2^{-x}`` without cancellation for small ``x``."""
    return -math.expm1(-x * math.log(2.0))


def _check_band(i: int, b: int | None = None) -> None:
    if i < 1 or (b is not None and i > b):
        raise BandOutOfRange(f"band index {i} outside [1, {b if b is not None else 'b'}]")


def band_bounds(i: int, a: float, b: int | None = None) -> tuple[float, float]:
    """Kernel-value interval ``[lo, hi)`` of band ``i``."""
    _check_band(i, b)
    lo = _one_minus_pow2(a + (i - 1)) ** 0.25
    hi = _one_minus_pow2(a + i) ** 0.25
    return lo, hi


def diagonal_threshold(a: float, b: int) -> float:
    """Fourth-power threshold ``1 - 2^{-(a+b)}`` above which only self-pairs should lie."""
    return _one_minus_pow2(a + b)


def separation_threshold(a: float) -> float:
    """Minimum squared whitened center distance, ``1.5 log(2^a / (2^a - 1))``."""
    return -1.5 * math.log(_one_minus_pow2(a))


def _band_logs(i: int, a: float) -> tuple[float, float]:
    lower = -math.log(_one_minus_pow2(a + i))
    upper = -math.log(_one_minus_pow2(a + (i - 1)))
    return upper, lower


def calibrate_gamma(i: int, a: float, d: int) -> float:
    """Cluster scale with ``gamma^2 = (U(i) + L(i)) / (4 d)``."""
    _check_band(i)
    upper, lower = _band_logs(i, a)
    return math.sqrt((upper + lower) / (4.0 * d))


def required_samples(b: int, band_sizes, lam: float, delta: float, a: float) -> int:
    """Spectral sample count sufficient for every band's Chernoff bound.

    ``max_i ceil(32 b |k_i| / (lambda^2 2^{a+i}) * log(2 b |k_i| / delta))``.
    """
    if not (0 < delta < 1):
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if lam <= 0:
        raise InvalidLambda(f"lambda must be positive, got {lam}")
    best = 0.0
    for i, size in enumerate(band_sizes, start=1):
        if size <= 0:
            continue
        bound = 32.0 * b * size / (lam**2 * 2.0 ** (a + i)) * math.log(2.0 * b * size / delta)
        best = max(best, bound)
    return max(1, math.ceil(best))


def _simplex(b: int) -> np.ndarray:
    """``b`` vertices of a regular simplex in ``R^{b-1}`` with unit squared edge."""
    V = np.eye(b) - 1.0 / b
    if b == 1:
        return np.zeros((1, 0))
    # orthonormal basis of the (b-1)-dim subspace orthogonal to the ones vector
    basis = np.linalg.qr(V[:, : b - 1])[0]
    return (V @ basis) / math.sqrt(2.0)


def _rotation(d: int, seed: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal(seed, "center-rotation", 0, (d, d)))
    return Q * np.sign(np.diag(R))


def place_centers(b: int, d: int, a: float, lengthscales, seed: int) -> np.ndarray:
    """Cluster centers in data coordinates with a 10% separation margin."""
    if b < 1:
        raise InfeasibleDimension("need at least one cluster")
    if b - 1 > d:
        raise InfeasibleDimension(f"{b} simplex vertices do not fit in {d} dimensions")
    if b == 1:
        return np.zeros((1, d))
    edge2 = CENTER_MARGIN * separation_threshold(a)
    W = np.zeros((b, d))
    W[:, : b - 1] = _simplex(b) * math.sqrt(edge2)
    W = W @ _rotation(d, seed).T
    return W * np.asarray(lengthscales, dtype=float)


@dataclass(frozen=True, eq=False)
class ClusterSpec:
    b: int
    dim: int
    centers: np.ndarray
    gammas: np.ndarray
    weights: np.ndarray
    lengthscales: np.ndarray
    a: float
    lam: float
    scale: float = 1.0

    @property
    def sizes(self) -> list[int]:
        return cluster_sizes(self.b, self.scale)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray  # 1-based band/cluster index
    spec: ClusterSpec
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def hyperparams(self, noise_std: float = 1.0) -> HyperParams:
        return HyperParams.create(self.spec.lengthscales, noise_std)

    def to_csv(self, path) -> None:
        d = self.X.shape[1]
        lines = [",".join([f"x_{j + 1}" for j in range(d)] + ["label"])]
        for row, lab in zip(self.X, self.labels):
            lines.append(",".join([repr(float(v)) for v in row] + [str(int(lab))]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def sidecar(self) -> dict:
        s = self.spec
        return {
            "b": s.b,
            "a": s.a,
            "lambda": s.lam,
            "gammas": s.gammas.tolist(),
            "centers": s.centers.tolist(),
            "seed": self.seed,
            "lengthscales": s.lengthscales.tolist(),
            "scale": s.scale,
        }

    def save(self, csv_path) -> Path:
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2) + "\n", encoding="utf-8")
        return side

    @classmethod
    def load(cls, csv_path) -> "LabeledDataset":
        csv_path = Path(csv_path)
        raw = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
        X, labels = raw[:, :-1], raw[:, -1].astype(int)
        b = int(meta["b"])
        w = 2.0 ** (np.arange(1, b + 1) / 2.0)
        spec = ClusterSpec(
            b=b,
            dim=X.shape[1],
            centers=np.asarray(meta["centers"], dtype=float),
            gammas=np.asarray(meta["gammas"], dtype=float),
            weights=w / w.sum(),
            lengthscales=np.asarray(meta["lengthscales"], dtype=float),
            a=float(meta["a"]),
            lam=float(meta["lambda"]),
            scale=float(meta.get("scale", 1.0)),
        )
        return cls(X, labels, spec, int(meta["seed"]))


def generate(b: int, d: int, lam: float, lengthscales, seed: int, scale: float = 1.0) -> LabeledDataset:
    """Draw a dataset realizing the clustering conditions for ``lam``.

    Whitened points of cluster ``i`` are ``N(c_i, gamma_i^2 / 2 * I)``, so the
    difference of two in-cluster points is ``N(0, gamma_i^2 I)`` and its
    squared norm concentrates at the middle of band ``i``.
    """
    lengthscales = np.broadcast_to(np.asarray(lengthscales, dtype=float), (d,)).copy()
    sizes = cluster_sizes(b, scale)
    n = sum(sizes)
    a = compute_a(n, lam)
    gammas = np.array([calibrate_gamma(i, a, d) for i in range(1, b + 1)])
    centers = place_centers(b, d, a, lengthscales, seed)
    w = 2.0 ** (np.arange(1, b + 1) / 2.0)
    spec = ClusterSpec(b, d, centers, gammas, w / w.sum(), lengthscales, a, float(lam), float(scale))
    blocks, labels = [], []
    for i, size in enumerate(sizes, start=1):
        noise = rng.standard_normal(seed, "cluster-points", i, (size, d))
        white = centers[i - 1] / lengthscales + gammas[i - 1] / math.sqrt(2.0) * noise
        blocks.append(white * lengthscales)
        labels.extend([i] * size)
    return LabeledDataset(np.vstack(blocks), np.asarray(labels), spec, int(seed))


@dataclass(frozen=True, eq=False)
class BandPartition:
    a: float
    bounds: np.ndarray  # thresholds on K^4: 1 - 2^{-(a+i)}, i = 0..b
    membership: np.ndarray  # per entry: band 1..b, 0 for the diagonal band, -1 off-cluster/below


def band_partition(K: np.ndarray, labels, a: float, b: int) -> BandPartition:
    bounds = np.array([_one_minus_pow2(a + i) for i in range(b + 1)])
    K4 = K**4
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    # band i holds bounds[i-1] <= K^4 < bounds[i]; K^4 >= bounds[b] is band 0
    idx = np.searchsorted(bounds, K4, side="right")
    member = np.where(idx > b, 0, idx)
    member = np.where(idx == 0, -1, member)
    member = np.where(same, member, -1)
    return BandPartition(a, bounds, member)


@dataclass
class ConditionReport:
    separation: list = field(default_factory=list)  # (i, j, whitened sq distance, threshold, passed)
    band_fraction: dict = field(default_factory=dict)  # cluster -> fraction of off-diagonal pairs in band
    populations: list = field(default_factory=list)  # (cluster, observed, expected, passed)
    a: float = 0.0

    @property
    def separation_passed(self) -> bool:
        return all(s[-1] for s in self.separation)

    @property
    def population_passed(self) -> bool:
        return all(p[-1] for p in self.populations)

    @property
    def band_membership(self) -> float:
        """Fraction of all in-cluster off-diagonal pairs inside their band."""
        num = sum(v[0] for v in self.band_fraction.values())
        den = sum(v[1] for v in self.band_fraction.values())
        return num / den if den else 1.0

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "separation": [list(map(_jsonable, s)) for s in self.separation],
            "separation_passed": self.separation_passed,
            "band_membership": self.band_membership,
            "band_counts": {str(k): list(v) for k, v in self.band_fraction.items()},
            "populations": [list(map(_jsonable, p)) for p in self.populations],
            "population_passed": self.population_passed,
        }


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def check_conditions(ds: LabeledDataset, lam: float) -> ConditionReport:
    spec = ds.spec
    n = ds.n
    a = compute_a(n, lam)
    report = ConditionReport(a=a)
    thr = separation_threshold(a)
    white = spec.centers / spec.lengthscales
    for i in range(spec.b):
        for j in range(i + 1, spec.b):
            dist = float(np.sum((white[i] - white[j]) ** 2))
            report.separation.append((i + 1, j + 1, dist, thr, dist > thr))
    hp = HyperParams.create(spec.lengthscales, 1.0)
    K = gram(ds.X, hp)
    for i in range(1, spec.b + 1):
        idx = np.flatnonzero(ds.labels == i)
        lo, hi = band_bounds(i, a)
        sub = K[np.ix_(idx, idx)][~np.eye(idx.size, dtype=bool)]
        inside = int(np.sum((sub >= lo) & (sub < hi)))
        report.band_fraction[i] = (inside, int(sub.size))
    expected = cluster_sizes(spec.b)
    for i in range(1, spec.b + 1):
        obs = int(np.sum(ds.labels == i))
        report.populations.append((i, obs, expected[i - 1], obs == expected[i - 1]))
    return report
