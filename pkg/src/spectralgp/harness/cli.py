"""Command-line entry point.

Subcommands: gen-data, fit-gp, fit-ssgp, embed, verify-bounds, experiment.
Global flags ``--seed``, ``--config`` (JSON) and ``--out`` precede the
subcommand. Seed precedence: ``--seed`` > ``SPECTRALGP_SEED`` > config.
Exit codes: 0 success, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .. import rng
from ..clustergen import cluster_sizes, generate, lambda_for_a
from ..embed import EmbedConfig, EncodeMode, encode, nearest_prior_center, save_checkpoint, train_embedding
from ..errors import SpectralGPError
from ..gp import Posterior, TrainConfig, gp_train
from ..kernel import HyperParams
from .data import load_csv, split, synthetic_regression
from .experiment import ExperimentConfig, fit_vanilla, rmse, run_experiment
from .io import atomic_write_text, dumps
from .verify import VerifyConfig, verify_bounds_cmd

log = logging.getLogger("spectralgp")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spectralgp", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--config", type=Path, default=None, help="JSON document; keys are the subcommand's options")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default: out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a cluster-compliant dataset (CSV + JSON sidecar)")
    g.add_argument("--b", type=_positive_int)
    g.add_argument("--d", type=_positive_int)
    g.add_argument("--a", type=float, help="band offset; lambda is derived from it")
    g.add_argument("--lambda", dest="lam", type=float, help="overrides --a")
    g.add_argument("--lengthscale", type=float)
    g.add_argument("--scale", type=float, help="population multiplier")
    g.add_argument("--targets", action="store_true", help="append a GP-prior target column y")
    g.add_argument("--noise-std", type=float)

    for name, helptext in (("fit-gp", "train a full GP and report test RMSE"), ("fit-ssgp", "train a sparse-spectrum GP")):
        f = sub.add_parser(name, help=helptext)
        f.add_argument("--data", type=Path, required=False)
        f.add_argument("--target", default=None)
        f.add_argument("--drop", action="append", default=None)
        f.add_argument("--split", type=float)
        f.add_argument("--steps", type=int)
        if name == "fit-ssgp":
            f.add_argument("--p", type=_positive_int)

    e = sub.add_parser("embed", help="train the mixture-prior auto-encoder and write latents")
    e.add_argument("--data", type=Path)
    e.add_argument("--target", default=None)
    e.add_argument("--drop", action="append", default=None)
    e.add_argument("--steps", type=int)
    e.add_argument("--mode", choices=[m.value for m in EncodeMode])

    v = sub.add_parser("verify-bounds", help="check every bound on generated data")
    v.add_argument("--b", type=_positive_int)
    v.add_argument("--d", type=_positive_int)
    v.add_argument("--a", type=float)
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--delta", type=float)
    v.add_argument("--p", type=_positive_int)
    v.add_argument("--trials", type=_positive_int)
    v.add_argument("--noise-std", type=float)

    x = sub.add_parser("experiment", help="full GP vs vanilla vs revised SSGP")
    x.add_argument("--data", type=Path)
    x.add_argument("--target", default=None)
    x.add_argument("--runs", type=_positive_int)
    x.add_argument("--p", type=_positive_int, action="append", dest="p_list")
    return ap


def _options(args, config: dict) -> dict:
    """Config values overlaid with explicitly given flags."""
    skip = {"seed", "config", "out", "verbose", "command"}
    opts = dict(config)
    for k, v in vars(args).items():
        if k not in skip and v is not None and v is not False:
            opts[k] = v
    return opts


def _resolve_seed(args, config: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SPECTRALGP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SPECTRALGP_SEED must be an integer, got {env!r}") from None
    return int(config.get("seed", 0))


def _dataset(opts: dict, seed: int):
    if opts.get("data"):
        target = opts.get("target") if opts.get("target") is not None else -1
        return load_csv(opts["data"], target, opts.get("drop") or ())
    syn = {"b": 6, "d": 8, "a": 1.0, "scale": 8.0, "noise_std": 0.1, **opts.get("synthetic", {})}
    return synthetic_regression(seed=seed, **syn)


def cmd_gen_data(opts: dict, seed: int, out: Path) -> int:
    b, d = int(opts.get("b", 5)), int(opts.get("d", 64))
    scale = float(opts.get("scale", 1.0))
    n = sum(cluster_sizes(b, scale))
    lam = float(opts["lam"]) if opts.get("lam") is not None else lambda_for_a(n, float(opts.get("a", 1.0)))
    ds = generate(b, d, lam, float(opts.get("lengthscale", 1.0)), seed, scale)
    ds.save(out / "data.csv")
    if opts.get("targets"):
        syn = synthetic_regression(b, d, ds.spec.a, scale, float(opts.get("lengthscale", 1.0)), float(opts.get("noise_std", 0.1)), seed)
        y = syn.y + syn.y_mean
        lines = [",".join([f"x_{j + 1}" for j in range(d)] + ["y", "label"])]
        lines += [",".join([repr(float(v)) for v in row] + [repr(float(t)), str(int(lab))]) for row, t, lab in zip(ds.X, y, ds.labels)]
        atomic_write_text(out / "data.csv", "\n".join(lines) + "\n")
    print(f"wrote {ds.n} points to {out / 'data.csv'}")
    return EXIT_OK


def _fit(opts: dict, seed: int, out: Path, ssgp: bool) -> int:
    ds = _dataset(opts, seed)
    train, test = split(ds, float(opts.get("split", 0.8)), rng.derive_seed(seed, "experiment-split"))
    tcfg = TrainConfig(steps=int(opts.get("steps", 200)))
    init = HyperParams.create(np.full(ds.d, float(opts.get("init_lengthscale", 1.0))), float(opts.get("init_noise_std", 0.3)))
    cfg = ExperimentConfig(init_lengthscale=init.lengthscales[0], init_noise_std=init.noise_std, gp=vars(tcfg), ssgp=vars(tcfg))
    if ssgp:
        p = int(opts.get("p", 16))
        err, nll = fit_vanilla(train, test, p, rng.derive_seed(seed, "vanilla", p), cfg)
        result = {"method": "VanillaSSGP", "p": p, "seed": seed, "rmse": err, "train_nll": nll}
        name = "fit_ssgp.json"
    else:
        trace = gp_train(train.X, train.y, init, tcfg)
        mean, _ = Posterior(train.X, train.y, trace.final).predict(test.X)
        result = {"method": "FullGP", "seed": seed, "rmse": rmse(mean, test.y), "train_nll": trace.final_nll, "hyperparams": trace.final.to_dict()}
        name = "fit_gp.json"
    atomic_write_text(out / name, dumps(result))
    print(f"{result['method']}: test RMSE {result['rmse']:.6g}")
    return EXIT_OK


def cmd_embed(opts: dict, seed: int, out: Path) -> int:
    ds = _dataset(opts, seed)
    ecfg = EmbedConfig(**{**opts.get("embed", {}), "seed": seed, **({"steps": int(opts["steps"])} if "steps" in opts else {})})
    model, trace = train_embedding(ds.X, ecfg)
    z = encode(ds.X, model, opts.get("mode", EncodeMode.POSTERIOR_MEAN.value), seed=seed)
    labels = nearest_prior_center(z if z.shape[1] == ecfg.latent_dim else encode(ds.X, model), model)
    atomic_write_text(out / "embed_model.json", save_checkpoint(model, ecfg) + "\n")
    rows = ["z_1,z_2,component"] + [f"{r[0]!r},{r[1] if r.size > 1 else 0.0!r},{int(c)}" for r, c in zip(z, labels)]
    atomic_write_text(out / "latent.csv", "\n".join(rows) + "\n")
    atomic_write_text(out / "embed_trace.csv", "step,loss,radius\n" + "".join(f"{i},{l!r},{r!r}\n" for i, (l, r) in enumerate(zip(trace.losses, trace.radius))))
    print(f"embedding trained for {ecfg.steps} steps; final loss {trace.losses[-1] if trace.losses else float('nan'):.6g}")
    return EXIT_OK


def cmd_verify(opts: dict, seed: int, out: Path) -> int:
    fields = VerifyConfig.__dataclass_fields__
    vcfg = VerifyConfig(**{k: v for k, v in opts.items() if k in fields and k not in ("seed", "out_dir")}, seed=seed, out_dir=str(out))
    outcome = verify_bounds_cmd(vcfg)
    agg = outcome.aggregate
    t2 = agg["theorem2"]
    print(
        f"theorem2: rate {t2['success_rate']:.3f}, lower bound {t2['lower_bound']:.3f} vs {t2['target']:.3f}; "
        f"deterministic violations {agg['deterministic_violations']} "
        f"({agg['deterministic_skipped_trials']} trials skipped: lambda >= sigma^2)"
    )
    return outcome.exit_code


def cmd_experiment(opts: dict, seed: int, out: Path) -> int:
    fields = ExperimentConfig.__dataclass_fields__
    kw = {k: v for k, v in opts.items() if k in fields}
    if opts.get("data"):
        kw["dataset"] = str(opts["data"])
    if opts.get("target") is not None:
        kw["target_column"] = opts["target"]
    kw.update(seed=seed, out_dir=str(out))
    records = run_experiment(ExperimentConfig(**kw))
    print(f"wrote {len(records)} records to {out / 'metrics.json'}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit-gp": lambda o, s, d: _fit(o, s, d, ssgp=False),
    "fit-ssgp": lambda o, s, d: _fit(o, s, d, ssgp=True),
    "embed": cmd_embed,
    "verify-bounds": cmd_verify,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = {}
        if args.config is not None:
            try:
                config = json.loads(args.config.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(config, dict):
                raise UsageError("config must be a JSON object")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        seed = _resolve_seed(args, config)
        out = args.out or Path(config.get("out", "out"))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](_options(args, config), seed, out)
    except UsageError as exc:
        print(f"spectralgp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as exc:
        print(f"spectralgp: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpectralGPError as exc:
        print(f"spectralgp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
