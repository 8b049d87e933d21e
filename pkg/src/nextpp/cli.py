"""Command-line interface.

Subcommands: generate, train, evaluate, sample, gof, inspect.  Exit
codes: 0 success, 1 usage error, 2 validation/contract error, 3 numeric
or sampling failure.  Every command writes its fully resolved config
next to its outputs; outputs are byte-for-byte reproducible for a fixed
config and seed.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import attention, baselines, evaluation, events, sampling, training
from .config import RunConfig, load_config, resolve_horizon, save_config
from .errors import (
    CheckpointError,
    ContractError,
    NextppError,
    NumericError,
    ParseError,
    PredictionError,
    SamplingError,
    ShapeError,
    ValidationError,
)
from .rng import Rng

USAGE_EXIT = 1
VALIDATION_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _build_parser():
    parser = _Parser(prog="nextpp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", help="output directory (or file for sample)")

    p = sub.add_parser("generate", help="write a synthetic train/dev/test benchmark")
    common(p)
    p.add_argument("--kind", choices=["poisson", "hawkes"])

    p = sub.add_parser("train", help="fit the model by maximum likelihood")
    common(p)
    p.add_argument("--data", help="training JSONL file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float, help="block granularity ratio in (0, 1]")
    p.add_argument("--disable-neural-evolution", action="store_true", default=None)
    p.add_argument("--disable-cross-attention", action="store_true", default=None)

    p = sub.add_parser("evaluate", help="metrics + predictions for a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="test JSONL file")
    p.add_argument("--limit", type=int, help="cap on prediction count")

    p = sub.add_parser("sample", help="continue sequences by thinning")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--prefix", help="JSONL file of prefix sequences")
    p.add_argument("--count", type=int, help="events to generate per prefix")

    p = sub.add_parser("gof", help="time-rescaling goodness-of-fit")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", choices=["poisson", "hawkes"], help="use analytic intensity instead")
    p.add_argument("--data")

    p = sub.add_parser("inspect", help="dataset statistics")
    common(p)
    p.add_argument("--data")
    return parser


def _resolve(args):
    """defaults < config file < command-line flags."""
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {
        "seed": getattr(args, "seed", None),
        "out": getattr(args, "out", None),
        "kind": getattr(args, "kind", None),
        "data": getattr(args, "data", None),
        "checkpoint": getattr(args, "checkpoint", None),
        "prefix": getattr(args, "prefix", None),
        "oracle": getattr(args, "oracle", None),
        "count": getattr(args, "count", None),
        "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None),
        "alpha": getattr(args, "alpha", None),
        "disable_neural_evolution": getattr(args, "disable_neural_evolution", None),
        "disable_cross_attention": getattr(args, "disable_cross_attention", None),
        "max_predictions": getattr(args, "limit", None),
    }
    for key, value in overrides.items():
        if value is not None:
            cfg.set(key, value)
    cfg.set("command", args.command)
    return cfg


def _out_dir(cfg, required=True):
    if not cfg.out:
        if required:
            raise ValidationError("--out is required")
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(cfg, key):
    if not cfg[key]:
        raise ValidationError(f"--{key} is required for this command")
    return cfg[key]


def _train_config(cfg):
    return training.TrainConfig(
        learning_rate=cfg.lr,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        mc_samples=cfg.mc_samples,
        seed=cfg.seed,
        integrator=cfg.integrator,
        latent_noise=cfg.latent_noise,
        model_dim=cfg.model_dim,
        latent_dim=cfg.latent_dim,
        layer_count=cfg.layer_count,
        head_count=cfg.head_count,
        step_count=cfg.step_count,
        block_ratio=cfg.alpha,
        dropout=cfg.dropout,
        disable_neural_evolution=cfg.disable_neural_evolution,
        disable_cross_attention=cfg.disable_cross_attention,
    )


def _thinning_config(cfg, dataset):
    return sampling.ThinningConfig(
        horizon=resolve_horizon(cfg, dataset),
        bound_margin=cfg.bound_margin,
        bound_grid_points=cfg.bound_grid_points,
        max_rejections=cfg.max_rejections,
        bound_safety=cfg.bound_safety,
    )


def cmd_generate(cfg):
    out = _out_dir(cfg)
    rng = Rng(cfg.seed)
    if cfg.kind == "poisson":
        params = baselines.PoissonParams(rates=np.array(cfg.poisson_rates))
        gen = lambda n, split: baselines.generate_poisson(params, cfg.horizon_T, n, rng, split)
    elif cfg.kind == "hawkes":
        params = baselines.HawkesParams(mu=np.array(cfg.hawkes_mu), a=np.array(cfg.hawkes_a), b=cfg.hawkes_b)
        gen = lambda n, split: baselines.generate_hawkes(params, cfg.horizon_T, n, rng, split)
    else:
        raise ValidationError(f"unknown generator kind {cfg.kind!r}")

    all_stats = {}
    for split, n in (("train", cfg.n_train), ("dev", cfg.n_dev), ("test", cfg.n_test)):
        data = gen(n, split)
        events.save_jsonl(data, out / f"{split}.jsonl")
        all_stats[split] = events.stats(data).as_dict()
    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(all_stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_config(cfg, out / "resolved.cfg")
    print(f"wrote {cfg.kind} benchmark to {out}")
    return 0


def cmd_train(cfg):
    out = _out_dir(cfg)
    dataset = events.load_jsonl(_require(cfg, "data"), split="train")
    run = training.train(dataset, _train_config(cfg), out_dir=out)
    save_config(cfg, out / "resolved.cfg")
    last = run.trace[-1]
    print(f"trained {cfg.epochs} epochs; final loss total={last.total:.4f} "
          f"(mle={last.mle:.4f} kl={last.kl:.4f} cont={last.cont:.4f})")
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    return 0


def cmd_evaluate(cfg):
    out = _out_dir(cfg)
    dataset = events.load_jsonl(_require(cfg, "data"), split="test")
    model = training.load_model(_require(cfg, "checkpoint"))
    thin = _thinning_config(cfg, dataset)
    cfg.set("horizon", thin.horizon)

    rows = []
    report = evaluation.evaluate_model(model, dataset, thin, max_predictions=cfg.max_predictions, record=rows)
    evaluation.write_metrics_json(report, out / "metrics.json")
    evaluation.write_predictions_csv(rows, out / "predictions.csv")

    first = dataset.sequences[0]
    fwd = model.forward(first, training=False)
    if fwd.self_weights:
        attention.export_attention(fwd.self_weights, out / "attention_self.csv")
    if fwd.cross_weights:
        attention.export_attention(fwd.cross_weights, out / "attention_cross.csv")
    save_config(cfg, out / "resolved.cfg")
    print(report.table())
    return 0


def cmd_sample(cfg):
    out = Path(_require(cfg, "out"))
    prefix_data = events.load_jsonl(_require(cfg, "prefix"))
    model = training.load_model(_require(cfg, "checkpoint"))
    if prefix_data.mark_count != model.config.mark_count:
        raise ValidationError("prefix mark_count differs from the checkpoint's")
    thin = _thinning_config(cfg, prefix_data)
    cfg.set("horizon", thin.horizon)
    rng = Rng(cfg.seed)

    out.parent.mkdir(parents=True, exist_ok=True)
    generated = []
    for seq in prefix_data.sequences:
        sample = sampling.simulate(model, seq.times, seq.marks, cfg.count, thin, rng)
        times = np.concatenate([seq.times, sample.times])
        marks = np.concatenate([seq.marks, sample.marks])
        generated.append(events.EventSequence.make(times, marks, prefix_data.mark_count))
    events.save_jsonl(events.Dataset(prefix_data.mark_count, generated, split="sampled"), out)
    save_config(cfg, out.with_suffix(out.suffix + ".resolved.cfg"))
    print(f"wrote {len(generated)} continued sequence(s) to {out}")
    return 0


def cmd_gof(cfg):
    out = _out_dir(cfg)
    dataset = events.load_jsonl(_require(cfg, "data"))
    if cfg.oracle:
        if cfg.oracle == "poisson":
            oracle = baselines.PoissonOracle(baselines.PoissonParams(rates=np.array(cfg.poisson_rates)))
        else:
            oracle = baselines.HawkesOracle(
                baselines.HawkesParams(mu=np.array(cfg.hawkes_mu), a=np.array(cfg.hawkes_a), b=cfg.hawkes_b)
            )
        compensator = evaluation.oracle_gap_compensator(oracle)
        source = f"oracle:{cfg.oracle}"
    else:
        model = training.load_model(_require(cfg, "checkpoint"))
        compensator = evaluation.model_gap_compensator(model)
        source = cfg.checkpoint
    gof = evaluation.time_rescaling_gof(dataset, compensator)
    payload = {
        "source": source,
        "ks_stat": gof.ks_stat,
        "p_value": gof.p_value,
        "n_gaps": gof.n_gaps,
        "uninformative": gof.uninformative,
    }
    with open(out / "gof.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_config(cfg, out / "resolved.cfg")
    print(f"KS statistic {gof.ks_stat:.4f}, p-value {gof.p_value:.4g} over {gof.n_gaps} gaps")
    return 0


def cmd_inspect(cfg):
    dataset = events.load_jsonl(_require(cfg, "data"))
    st = events.stats(dataset)
    rows = [
        ("mark count", st.mark_count),
        ("sequences", st.sequence_count),
        ("event tokens", st.event_tokens),
        ("length min", st.length_min),
        ("length mean", f"{st.length_mean:g}"),
        ("length max", st.length_max),
    ]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sample": cmd_sample,
    "gof": cmd_gof,
    "inspect": cmd_inspect,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except (ValidationError, ParseError, ContractError, ShapeError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return VALIDATION_EXIT
    except (NumericError, SamplingError, PredictionError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return NUMERIC_EXIT
    except NextppError as err:
        print(f"error: {err}", file=sys.stderr)
        return VALIDATION_EXIT
    except OSError as err:
        print(f"file error: {err}", file=sys.stderr)
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
