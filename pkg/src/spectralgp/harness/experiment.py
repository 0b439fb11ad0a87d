"""Full GP vs vanilla SSGP vs revised SSGP on a grid of sample counts."""

from __future__ import annotations

import enum
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import rng
from ..embed import EmbedConfig, encode, nearest_prior_center, train_embedding
from ..gp import Posterior, TrainConfig, gp_train
from ..kernel import CosineKernel, HyperParams, SpectralKind, sample_spectral
from ..ssgp import fit_ssgp
from .data import Dataset, load_csv, split, synthetic_regression
from .io import atomic_write_text, dumps

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    FULL_GP = "FullGP"
    VANILLA_SSGP = "VanillaSSGP"
    REVISED_SSGP = "RevisedSSGP"


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    target_column: str | int = -1
    drop_columns: list = field(default_factory=list)
    synthetic: dict = field(default_factory=lambda: {"b": 6, "d": 8, "a": 1.0, "scale": 8.0, "noise_std": 0.1})
    split: float = 0.8
    p_list: list = field(default_factory=lambda: [16, 32, 64])
    runs: int = 5
    seed: int = 0
    seeds: list | None = None
    init_lengthscale: float = 1.0
    init_noise_std: float = 0.3
    full_gp_cap: int = 2000
    gp: dict = field(default_factory=dict)
    ssgp: dict = field(default_factory=dict)
    embed: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: [m.value for m in Method])
    record_timing: bool = False
    out_dir: str = "out"

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(int(p) < 1 for p in self.p_list):
            raise ValueError("every p must be >= 1")
        self.methods = [Method(m).value for m in self.methods]

    def run_seeds(self) -> list[int]:
        if self.seeds:
            return [int(s) for s in self.seeds][: self.runs]
        return [self.seed + r for r in range(self.runs)]


@dataclass
class MetricsRecord:
    method: str
    p: int | None
    seed: int
    rmse: float
    train_nll: float
    wall_time_ms: int = 0

    @property
    def key(self) -> tuple:
        return (self.method, self.p, self.seed)


def rmse(pred, target) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


def _init_hp(cfg: ExperimentConfig, d: int) -> HyperParams:
    return HyperParams.create(np.full(d, cfg.init_lengthscale), cfg.init_noise_std)


def fit_full_gp(train: Dataset, test: Dataset, cfg: ExperimentConfig) -> tuple[float, float]:
    trace = gp_train(train.X, train.y, _init_hp(cfg, train.d), TrainConfig(**cfg.gp))
    mean, _ = Posterior(train.X, train.y, trace.final).predict(test.X)
    return rmse(mean, test.y), trace.final_nll


def fit_vanilla(train: Dataset, test: Dataset, p: int, seed: int, cfg: ExperimentConfig) -> tuple[float, float]:
    """Hyperparameters by the cosine-kernel NLL, prediction by the weight-space form.

    Both use the same ``p`` standard-normal draws, so the two views describe
    one model.
    """
    init = _init_hp(cfg, train.d)
    draw = sample_spectral(p, init, SpectralKind.STANDARD_NORMAL, seed)
    trace = gp_train(train.X, train.y, init, TrainConfig(**cfg.ssgp), kernel=CosineKernel(draw.vectors))
    model = fit_ssgp(train.X, train.y, trace.final, p, seed)
    return rmse(model.predict_mean(test.X), test.y), trace.final_nll


def fit_revised(train_z, test_z, train: Dataset, test: Dataset, prior_centers, p: int, seed: int, cfg: ExperimentConfig):
    """Cosine-kernel GP on encoded inputs with cross-cluster entries zeroed."""
    lab_tr = nearest_prior_center(train_z, prior_centers)
    lab_te = nearest_prior_center(test_z, prior_centers)
    init = _init_hp(cfg, train_z.shape[1])
    draw = sample_spectral(p, init, SpectralKind.STANDARD_NORMAL, seed)
    kernel = CosineKernel(draw.vectors, lab_tr)
    trace = gp_train(train_z, train.y, init, TrainConfig(**cfg.ssgp), kernel=kernel)
    mean, _ = Posterior(train_z, train.y, trace.final, kernel=kernel).predict(test_z, test_labels=lab_te)
    return rmse(mean, test.y), trace.final_nll


def load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    if cfg.dataset:
        return load_csv(cfg.dataset, cfg.target_column, cfg.drop_columns)
    return synthetic_regression(seed=seed, **cfg.synthetic)


def _timed(fn, record_timing: bool):
    t0 = time.perf_counter()
    out = fn()
    ms = int(round((time.perf_counter() - t0) * 1000)) if record_timing else 0
    return out, ms


def series(records: list[MetricsRecord], p_list) -> dict[str, list[tuple]]:
    """Per method rows ``(p, mean_rmse, std_rmse)``; the full GP repeats across ``p``."""
    out = {}
    for method in dict.fromkeys(r.method for r in records):
        rows = []
        for p in p_list:
            vals = [r.rmse for r in records if r.method == method and (r.p == p or r.p is None)]
            if vals:
                rows.append((int(p), float(np.mean(vals)), float(np.std(vals))))
        out[method] = rows
    return out


def write_outputs(records: list[MetricsRecord], p_list, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "metrics.json", dumps([asdict(r) for r in records]))
    for method, rows in series(records, p_list).items():
        lines = ["p,mean_rmse,std_rmse"] + [f"{p},{m!r},{s!r}" for p, m, s in rows]
        atomic_write_text(out / f"series_{method}.csv", "\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> list[MetricsRecord]:
    """Run every (seed, method, p) cell; metrics are flushed after each cell."""
    records: list[MetricsRecord] = []
    methods = set(cfg.methods)

    def add(rec: MetricsRecord) -> None:
        records.append(rec)
        if write:
            write_outputs(records, cfg.p_list, cfg.out_dir)

    for seed in cfg.run_seeds():
        ds = load_dataset(cfg, seed)
        train, test = split(ds, cfg.split, rng.derive_seed(seed, "experiment-split"))
        if Method.FULL_GP.value in methods:
            if train.n <= cfg.full_gp_cap:
                (err, nll), ms = _timed(lambda: fit_full_gp(train, test, cfg), cfg.record_timing)
                add(MetricsRecord(Method.FULL_GP.value, None, seed, err, nll, ms))
            else:
                log.info("skipping full GP: %d training rows exceed cap %d", train.n, cfg.full_gp_cap)
        for p in cfg.p_list:
            if Method.VANILLA_SSGP.value in methods:
                cell = rng.derive_seed(seed, "vanilla", int(p))
                (err, nll), ms = _timed(lambda: fit_vanilla(train, test, int(p), cell, cfg), cfg.record_timing)
                add(MetricsRecord(Method.VANILLA_SSGP.value, int(p), seed, err, nll, ms))
        if Method.REVISED_SSGP.value in methods:
            ecfg = EmbedConfig(**{**cfg.embed, "seed": rng.derive_seed(seed, "embed") % 2**31})
            (model, _), embed_ms = _timed(lambda: train_embedding(train.X, ecfg), cfg.record_timing)
            z_tr, z_te = encode(train.X, model), encode(test.X, model)
            centers = model.prior.centers.detach().numpy()
            for p in cfg.p_list:
                cell = rng.derive_seed(seed, "revised", int(p))
                (err, nll), ms = _timed(
                    lambda: fit_revised(z_tr, z_te, train, test, centers, int(p), cell, cfg), cfg.record_timing
                )
                add(MetricsRecord(Method.REVISED_SSGP.value, int(p), seed, err, nll, ms + embed_ms))
    if write:
        write_outputs(records, cfg.p_list, cfg.out_dir)
    return records


def median_rmse(records, method: str, p: int | None = None) -> float:
    vals = [r.rmse for r in records if r.method == method and (p is None or r.p == p)]
    return float(np.median(vals)) if vals else math.nan


def config_from_json(text: str) -> ExperimentConfig:
    return ExperimentConfig(**json.loads(text))
