"""``liveness`` command line: synth, train, eval, cross-eval.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numeric failure. Summaries go to stdout, diagnostics to stderr. Every
output file is written atomically.
"""

import argparse
import json
import os
import sys

from . import crossdb, metrics
from ._binio import atomic_write_text
from .attacknet import ModelConfig, init_weights, load_weights, save_weights
from .crossdb import bonafide_scores
from .data_io import SynthSpec, generate_synthetic, load_packed_dataset, save_packed_dataset, split_dataset
from .errors import ConfigError, InputError, LivenessError, NumericError, ShapeError, SplitError
from .training import TrainConfig, train_model

SEED_ENV = "LIVENESS_SEED"

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _info(msg):
    print(msg, file=sys.stderr)


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def cmd_synth(args):
    try:
        spec = SynthSpec(per_class=args.per_class, height=args.size, width=args.size,
                         noise_sigma=args.noise_sigma, stripe_period=args.stripe_period,
                         seed=args.seed)
    except (InputError, ShapeError) as exc:
        raise UsageError(str(exc)) from exc
    ds = generate_synthetic(spec, name=_stem(args.out))
    save_packed_dataset(ds, args.out)
    counts = ds.manifest["counts"]
    print(f"synth: wrote {args.out} ({len(ds)} samples: {counts['bonafide']} bonafide, "
          f"{counts['attacker']} attacker, {args.size}x{args.size})")


def _model_config_for(dataset):
    h, w, c = dataset.image_shape
    return ModelConfig(input_height=h, input_width=w, input_channels=c)


def cmd_train(args):
    data = load_packed_dataset(args.data)
    holdout = None
    train_set = data
    if args.val_split > 0:
        train_set, holdout = split_dataset(data, args.val_split, args.seed)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                         learning_rate=args.lr, seed=args.seed)
    if len(train_set) % config.batch_size == 1:
        _info("note: the final batch holds a single sample and is skipped every epoch")

    def report(rec):
        line = f"epoch {rec.epoch}: loss {rec.train_loss:.6f} acc {rec.train_accuracy:.4f}"
        if rec.holdout_loss is not None:
            line += f" holdout_loss {rec.holdout_loss:.6f} holdout_acc {rec.holdout_accuracy:.4f}"
        _info(line)

    weights, history = train_model(init_weights(_model_config_for(data), args.seed),
                                   train_set, holdout, config, on_epoch=report)
    save_weights(weights, args.out)
    if args.history:
        atomic_write_text(args.history, json.dumps(history.to_dict(), indent=2) + "\n")
    final = f"{history.epochs[-1].train_loss:.6f}" if history.epochs else "n/a"
    print(f"train: {len(train_set)} training samples"
          + (f", {len(holdout)} holdout" if holdout is not None else "")
          + f", {args.epochs} epochs, final loss {final}, wrote {args.out}")


def cmd_eval(args):
    weights = load_weights(args.model)
    data = load_packed_dataset(args.data)
    expected = (weights.config.input_height, weights.config.input_width,
                weights.config.input_channels)
    if tuple(data.image_shape) != expected:
        raise LivenessError(f"dataset images are {data.image_shape}, model expects {expected}")
    report = metrics.build_report(data.name, bonafide_scores(weights, data), data.labels,
                                  args.threshold)
    text = metrics.render_reports([report], args.format)
    if args.report:
        atomic_write_text(args.report, text)
    else:
        sys.stdout.write(text)
    r = report.rates
    print(f"eval: {data.name} n={len(data)} FAR {r.far:.4f} FRR {r.frr:.4f} HTER {r.hter:.4f}")


def cmd_cross_eval(args):
    paths = [p for p in args.data.split(",") if p]
    if len(paths) < 2:
        raise UsageError("--data needs at least two comma-separated dataset files")
    datasets = [load_packed_dataset(p) for p in paths]
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                         learning_rate=args.lr, seed=args.seed)
    for d in datasets:
        _info(f"loaded {d.name}: {d.manifest['counts']}")
    matrix, _ = crossdb.run_cross_matrix(datasets, None, config, args.include_diagonal)
    atomic_write_text(args.out, crossdb.render_matrix(matrix, args.format))
    worst = max(matrix.rows(), key=lambda c: c.rates.hter)
    print(f"cross-eval: {len(datasets)} datasets, {len(matrix.cells)} cells, worst HTER "
          f"{worst.rates.hter:.4f} ({worst.trained_on} -> {worst.tested_on}), wrote {args.out}")


def build_parser():
    parser = _Parser(prog="liveness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic packed dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=256)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--stripe-period", type=int, default=8)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train AttackNet on a packed dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--val-split", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a weights file on a packed dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--report")
    p.add_argument("--format", choices=("json", "md", "csv"), default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cross-eval", help="train on each dataset, test on the others")
    p.add_argument("--data", required=True, help="comma-separated packed dataset files")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int)
    p.add_argument("--include-diagonal", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json", "md"), default="csv")
    p.set_defaults(func=cmd_cross_eval)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        args.func(args)
    except UsageError as exc:
        _info(f"usage error: {exc}")
        return EXIT_USAGE
    except (ConfigError, SplitError) as exc:
        _info(f"usage error: {exc}")
        return EXIT_USAGE
    except NumericError as exc:
        _info(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except (LivenessError, OSError) as exc:
        _info(f"error: {exc}")
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run_cli())
