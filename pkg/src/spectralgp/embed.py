"""Mixture-prior auto-encoder that pulls inputs apart into separated clusters.

The latent prior is a mixture of ``k`` isotropic Gaussians whose centers sit
at fixed unit directions scaled by one learnable radius. Encoder and decoder
are each a mixture of ``k`` Gaussian nets. Training minimizes

    -ELBO + alpha * KL(q(z) || p(z)) - beta * sum_{i != j} KL(p_i || p_j)

where ``q(z)`` is the aggregate posterior, estimated by the minibatch mixture.

All tensors are float64. Randomness comes from keyed streams in
:mod:`spectralgp.rng`, never from torch's global generator, so a run is fixed
by its seed.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from . import rng
from .errors import EmptyDataset, ModeInvalid, NonFiniteLoss

log = logging.getLogger(__name__)

DTYPE = torch.float64
VAR_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class EmbedConfig:
    alpha: float = 8.0
    beta: float = 1.2
    separation_sign: float = 1.0  # +1 adds beta * separation to the maximized bound
    k: int = 8
    latent_dim: int = 4
    hidden: int = 10
    prior_gamma: float = 0.5
    init_radius: float = 1.0
    batch_size: int = 100
    steps: int = 1000
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        self.betas = tuple(self.betas)


def unit_directions(k: int, dim: int) -> np.ndarray:
    """``k`` fixed unit vectors spread evenly over the sphere.

    Up to ``2 * dim`` directions use the cross-polytope ``+-e_j``; beyond
    that a deterministic golden-ratio sweep is appended.
    """
    dirs = []
    for j in range(min(k, 2 * dim)):
        v = np.zeros(dim)
        v[j // 2] = 1.0 if j % 2 == 0 else -1.0
        dirs.append(v)
    for j in range(len(dirs), k):
        v = np.cos(2.0 * np.pi * (j + 1) * ((1 + 5**0.5) / 2) * np.arange(1, dim + 1))
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs).reshape(k, dim)


def mixture_weights(k: int) -> np.ndarray:
    w = 2.0 ** (np.arange(1, k + 1) / 2.0)
    return w / w.sum()


def _diag_gauss_logpdf(z, mean, var):
    """Log density of ``N(mean, diag(var))`` summed over the last axis."""
    return -0.5 * (((z - mean) ** 2) / var + torch.log(var) + LOG_2PI).sum(-1)


class MixturePrior(nn.Module):
    def __init__(self, k: int = 8, latent_dim: int = 4, gamma: float = 0.5, radius: float = 1.0):
        super().__init__()
        self.k, self.latent_dim = k, latent_dim
        self.register_buffer("unit_directions", torch.tensor(unit_directions(k, latent_dim), dtype=DTYPE))
        self.register_buffer("gammas", torch.full((k,), float(gamma), dtype=DTYPE))
        self.register_buffer("log_weights", torch.tensor(np.log(mixture_weights(k)), dtype=DTYPE))
        self.log_radius = nn.Parameter(torch.tensor(math.log(radius), dtype=DTYPE))

    @property
    def radius(self) -> torch.Tensor:
        return self.log_radius.exp()

    @property
    def centers(self) -> torch.Tensor:
        return self.radius * self.unit_directions

    def log_prob(self, z: torch.Tensor) -> torch.Tensor:
        var = (self.gammas**2)[:, None].expand(self.k, self.latent_dim)
        comp = _diag_gauss_logpdf(z[..., None, :], self.centers, var)
        return torch.logsumexp(self.log_weights + comp, dim=-1)


class GaussianNet(nn.Module):
    """Linear -> batch-norm -> ReLU trunk feeding a mean head and a variance head."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int = 10):
        super().__init__()
        self.trunk = nn.Linear(in_dim, hidden, dtype=DTYPE)
        self.norm = nn.BatchNorm1d(hidden, dtype=DTYPE)
        self.mean_head = nn.Sequential(nn.Linear(hidden, hidden, dtype=DTYPE), nn.ReLU(), nn.Linear(hidden, out_dim, dtype=DTYPE))
        self.var_head = nn.Sequential(nn.Linear(hidden, hidden, dtype=DTYPE), nn.ReLU(), nn.Linear(hidden, out_dim, dtype=DTYPE))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.relu(self.norm(self.trunk(x)))
        return self.mean_head(h), nn.functional.softplus(self.var_head(h)) + VAR_FLOOR


class GaussianMixtureNet(nn.Module):
    """``k`` Gaussian nets combined by softmax mixing weights from a linear layer."""

    def __init__(self, in_dim: int, out_dim: int, k: int, hidden: int):
        super().__init__()
        self.components = nn.ModuleList([GaussianNet(in_dim, out_dim, hidden) for _ in range(k)])
        self.mixing = nn.Linear(in_dim, k, dtype=DTYPE)

    def forward(self, x):
        """Log mixing weights (B, k), means (B, k, out), variances (B, k, out)."""
        outs = [c(x) for c in self.components]
        means = torch.stack([o[0] for o in outs], dim=1)
        var = torch.stack([o[1] for o in outs], dim=1)
        return torch.log_softmax(self.mixing(x), dim=-1), means, var


class MixtureParams(NamedTuple):
    log_w: torch.Tensor
    means: torch.Tensor
    var: torch.Tensor

    def log_prob(self, z: torch.Tensor) -> torch.Tensor:
        """Row-wise log density of ``z[b]`` under mixture ``b``."""
        return torch.logsumexp(self.log_w + _diag_gauss_logpdf(z[:, None, :], self.means, self.var), dim=-1)

    def cross_log_prob(self, z: torch.Tensor) -> torch.Tensor:
        """``[a, b] = log q(z_a | x_b)``."""
        comp = _diag_gauss_logpdf(z[:, None, None, :], self.means[None], self.var[None])
        return torch.logsumexp(self.log_w[None] + comp, dim=-1)

    def mean(self) -> torch.Tensor:
        return (self.log_w.exp()[..., None] * self.means).sum(1)


class EncoderDecoder(nn.Module):
    def __init__(self, data_dim: int, cfg: EmbedConfig):
        super().__init__()
        self.data_dim = data_dim
        self.encoder = GaussianMixtureNet(data_dim, cfg.latent_dim, cfg.k, cfg.hidden)
        self.decoder = GaussianMixtureNet(cfg.latent_dim, data_dim, cfg.k, cfg.hidden)
        self.prior = MixturePrior(cfg.k, cfg.latent_dim, cfg.prior_gamma, cfg.init_radius)
        self.step = 0

    def posterior(self, x) -> MixtureParams:
        return MixtureParams(*self.encoder(x))

    def likelihood(self, z) -> MixtureParams:
        return MixtureParams(*self.decoder(z))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` init of every linear layer."""
    idx = 0
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, nn.Linear):
                bound = 1.0 / math.sqrt(mod.in_features)
                for t in (mod.weight, mod.bias):
                    u = rng.uniform(seed, "embed-init", idx, t.numel())
                    t.copy_(torch.tensor((2.0 * u - 1.0) * bound, dtype=DTYPE).reshape(t.shape))
                    idx += 1


class NoiseDraw(NamedTuple):
    """Fixed randomness for one loss evaluation: component picks and Gaussian noise."""

    u: torch.Tensor  # (B,) uniforms for hard component selection
    eps: torch.Tensor  # (B, latent_dim)


def noise_draw(seed: int, index: int, batch: int, latent_dim: int) -> NoiseDraw:
    u = torch.tensor(rng.uniform(seed, "embed-pick", index, batch), dtype=DTYPE)
    eps = torch.tensor(rng.standard_normal(seed, "embed-eps", index, (batch, latent_dim)), dtype=DTYPE)
    return NoiseDraw(u, eps)


def sample_mixture(q: MixtureParams, draw: NoiseDraw) -> torch.Tensor:
    """Reparameterized draw with a hard component choice from the mixing weights.

    The choice itself carries no gradient; the sample is differentiable in
    the selected component's mean and variance.
    """
    cdf = torch.cumsum(q.log_w.exp(), dim=-1).detach()
    pick = torch.searchsorted(cdf, draw.u[:, None]).clamp(max=q.log_w.shape[-1] - 1).squeeze(-1)
    rows = torch.arange(q.means.shape[0])
    return q.means[rows, pick] + q.var[rows, pick].sqrt() * draw.eps[: q.means.shape[0]]


class LossTerms(NamedTuple):
    loss: torch.Tensor
    reconstruction: torch.Tensor
    kl: torch.Tensor
    aggregate_kl: torch.Tensor
    separation: torch.Tensor

    @property
    def elbo(self) -> torch.Tensor:
        return self.reconstruction - self.kl


def _check_loss(value: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise NonFiniteLoss(f"{name} is not finite")
    return value


def _terms(x, model: EncoderDecoder, draw: NoiseDraw):
    q = model.posterior(x)
    z = sample_mixture(q, draw)
    log_q = q.log_prob(z)
    log_p = model.prior.log_prob(z)
    recon = model.likelihood(z).log_prob(x)
    return q, z, log_q, log_p, recon


def elbo(x, model: EncoderDecoder, draw: NoiseDraw) -> torch.Tensor:
    """Single-sample ELBO averaged over the batch; KL by Monte Carlo on that sample."""
    if x.shape[0] == 0:
        raise EmptyDataset("empty batch")
    _, _, log_q, log_p, recon = _terms(x, model, draw)
    return _check_loss((recon - (log_q - log_p)).mean(), "ELBO")


def aggregate_kl_from(q: MixtureParams, z: torch.Tensor, log_p: torch.Tensor) -> torch.Tensor:
    """``mean_a [log (1/B sum_b q(z_a | x_b)) - log p(z_a)]``.

    Each ``z_a ~ q(. | x_a)``, so the set is a draw from the minibatch mixture.
    """
    B = z.shape[0]
    log_agg = torch.logsumexp(q.cross_log_prob(z), dim=1) - math.log(B)
    return (log_agg - log_p).mean()


def aggregate_kl_penalty(x, model: EncoderDecoder, draw: NoiseDraw) -> torch.Tensor:
    if x.shape[0] < 2:
        raise ValueError("aggregate posterior needs a batch of at least 2")
    q, z, _, log_p, _ = _terms(x, model, draw)
    return _check_loss(aggregate_kl_from(q, z, log_p), "aggregate KL")


def gaussian_kl(mu1, var1, mu2, var2) -> torch.Tensor:
    """``KL(N(mu1, var1 I) || N(mu2, var2 I))`` for isotropic variances."""
    dim = mu1.shape[-1]
    return 0.5 * (dim * var1 / var2 + ((mu1 - mu2) ** 2).sum(-1) / var2 - dim + dim * torch.log(var2 / var1))


def separation_penalty(prior: MixturePrior) -> torch.Tensor:
    """Closed-form KL summed over ordered pairs of distinct prior components."""
    c, v = prior.centers, prior.gammas**2
    kl = gaussian_kl(c[:, None, :], v[:, None], c[None, :, :], v[None, :])
    return kl.sum() - torch.diagonal(kl).sum()


def loss_terms(x, model: EncoderDecoder, cfg: EmbedConfig, draw: NoiseDraw) -> LossTerms:
    q, z, log_q, log_p, recon = _terms(x, model, draw)
    rec = recon.mean()
    kl = (log_q - log_p).mean()
    agg = aggregate_kl_from(q, z, log_p) if x.shape[0] >= 2 else torch.zeros((), dtype=DTYPE)
    sep = separation_penalty(model.prior)
    # same reduction as elbo() so alpha = beta = 0 reproduces it bit for bit
    loss = -(recon - (log_q - log_p)).mean() + cfg.alpha * agg - cfg.separation_sign * cfg.beta * sep
    return LossTerms(_check_loss(loss, "augmented loss"), rec, kl, agg, sep)


def augmented_loss(x, model: EncoderDecoder, cfg: EmbedConfig, draw: NoiseDraw) -> torch.Tensor:
    """``-elbo + alpha * aggregate KL - beta * separation``, to be minimized."""
    return loss_terms(x, model, cfg, draw).loss


@dataclass
class EmbedTrace:
    losses: list = field(default_factory=list)  # per-step minibatch loss
    radius: list = field(default_factory=list)
    aborted: bool = False

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


class EmbedResult(NamedTuple):
    model: EncoderDecoder
    trace: EmbedTrace


def _as_tensor(data) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(data, dtype=float), dtype=DTYPE)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise EmptyDataset("no rows to embed")
    return x


def build_model(data_dim: int, cfg: EmbedConfig) -> EncoderDecoder:
    model = EncoderDecoder(data_dim, cfg)
    init_parameters(model, cfg.seed)
    log.debug("embedding model with %d parameters", model.parameter_count())
    return model


def full_data_loss(data, model: EncoderDecoder, cfg: EmbedConfig, index: int = 0) -> float:
    """Augmented loss on the whole dataset under a fixed noise draw (train-mode batch-norm)."""
    x = _as_tensor(data)
    was_training = model.training
    model.train()
    snapshot = {k: v.clone() for k, v in model.state_dict().items() if "running" in k or "num_batches" in k}
    with torch.no_grad():
        value = float(augmented_loss(x, model, cfg, noise_draw(cfg.seed, index, x.shape[0], cfg.latent_dim)))
    model.load_state_dict({**model.state_dict(), **snapshot})
    model.train(was_training)
    return value


def train_embedding(data, cfg: EmbedConfig | None = None, model: EncoderDecoder | None = None) -> EmbedResult:
    """Adam on minibatches; inputs are expected standardized per column."""
    cfg = cfg or EmbedConfig()
    x = _as_tensor(data)
    n = x.shape[0]
    model = model or build_model(x.shape[1], cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.adam_eps)
    trace = EmbedTrace()
    bs = min(cfg.batch_size, n)
    if bs < 2 and cfg.steps > 0:
        raise ValueError("training needs at least 2 rows per batch")
    order, cursor, epoch = np.arange(n), n, 0
    model.train()
    for step in range(cfg.steps):
        if cursor + bs > n:
            order = rng.generator(cfg.seed, "embed-batches", epoch).permutation(n)
            cursor, epoch = 0, epoch + 1
        batch = x[order[cursor : cursor + bs]]
        cursor += bs
        opt.zero_grad()
        try:
            loss = augmented_loss(batch, model, cfg, noise_draw(cfg.seed, step + 1, bs, cfg.latent_dim))
        except NonFiniteLoss as exc:
            trace.aborted = True
            raise NonFiniteLoss(f"step {step}: {exc}", trace) from exc
        loss.backward()
        opt.step()
        model.step += 1
        trace.losses.append(float(loss.detach()))
        trace.radius.append(float(model.prior.radius.detach()))
    model.eval()
    return EmbedResult(model, trace)


class EncodeMode(str, enum.Enum):
    POSTERIOR_MEAN = "PosteriorMean"
    POSTERIOR_SAMPLE = "PosteriorSample"
    DECODER_RECONFIGURED = "DecoderReconfigured"


def encode(x, model: EncoderDecoder, mode: EncodeMode | str = EncodeMode.POSTERIOR_MEAN, seed: int = 0) -> np.ndarray:
    """Latent coordinates with eval-mode batch-norm (running statistics)."""
    try:
        mode = EncodeMode(mode)
    except ValueError:
        raise ModeInvalid(f"unknown encode mode {mode!r}") from None
    xt = _as_tensor(x)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            q = model.posterior(xt)
            if mode is EncodeMode.POSTERIOR_SAMPLE:
                out = sample_mixture(q, noise_draw(seed, 0, xt.shape[0], q.means.shape[-1]))
            elif mode is EncodeMode.DECODER_RECONFIGURED:
                out = model.likelihood(q.mean()).mean()
            else:
                out = q.mean()
    finally:
        model.train(was_training)
    return out.numpy().copy()


def nearest_prior_center(latent, centers) -> np.ndarray:
    """Cluster labels for encoded points: index of the closest prior center.

    ``centers`` is a ``(k, latent_dim)`` array or a model carrying the prior.
    """
    c = centers.prior.centers.detach().numpy() if isinstance(centers, EncoderDecoder) else np.asarray(centers)
    d2 = ((np.asarray(latent)[:, None, :] - c[None]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def flat_parameters(model: nn.Module) -> np.ndarray:
    return nn.utils.parameters_to_vector(model.parameters()).detach().numpy().copy()


def set_flat_parameters(model: nn.Module, vec) -> None:
    with torch.no_grad():
        nn.utils.vector_to_parameters(torch.as_tensor(np.asarray(vec), dtype=DTYPE), model.parameters())


def save_checkpoint(model: EncoderDecoder, cfg: EmbedConfig, path=None) -> str:
    state = {k: v.tolist() for k, v in model.state_dict().items()}
    text = json.dumps(
        {"config": asdict(cfg), "data_dim": model.data_dim, "step": model.step, "state": state},
        sort_keys=True,
    )
    if path is not None:
        from pathlib import Path

        Path(path).write_text(text, encoding="utf-8")
    return text


def load_checkpoint(text: str) -> tuple[EncoderDecoder, EmbedConfig]:
    obj = json.loads(text)
    cfg = EmbedConfig(**obj["config"])
    model = EncoderDecoder(int(obj["data_dim"]), cfg)
    ref = model.state_dict()
    state = {k: torch.tensor(v, dtype=ref[k].dtype).reshape(ref[k].shape) for k, v in obj["state"].items()}
    model.load_state_dict(state)
    model.step = int(obj["step"])
    model.eval()
    return model, cfg
