"""Command-line entry points.

Subcommands: train, eval, sweep-k, synth-data, preprocess.  Every command
takes a config file plus optional seed/output overrides and exits 0 on
success; failures exit with a category code (2 configuration, 3 bad
input/contract, 4 training divergence, 1 unexpected).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigurationError, ContractViolation, TrainingDiverged


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcsnn",
                                     description="multi-compartment spiking network experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config file (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output-dir", default=None, help="run directory for outputs")
        p.add_argument("--verbose", action="store_true")

    p_train = sub.add_parser("train", help="train a model and checkpoint the best/final parameters")
    common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_sweep = sub.add_parser("sweep-k", help="train/evaluate across compartment counts")
    common(p_sweep)
    p_sweep.add_argument("--k-values", required=True,
                         help="comma-separated compartment counts, e.g. 1,2,5")

    p_synth = sub.add_parser("synth-data", help="generate the synthetic dataset to disk")
    common(p_synth)

    p_prep = sub.add_parser("preprocess", help="bin event files into a spike-tensor dataset")
    p_prep.add_argument("--events-dir", required=True, help="directory of .evt/.evb event files")
    p_prep.add_argument("--crop", required=True, nargs=4, type=int,
                        metavar=("X0", "Y0", "W", "H"))
    p_prep.add_argument("--time-steps", required=True, type=int)
    p_prep.add_argument("--num-classes", required=True, type=int)
    p_prep.add_argument("--test-fraction", type=float, default=0.1)
    p_prep.add_argument("--seed", type=int, default=0)
    p_prep.add_argument("--output-dir", required=True)
    p_prep.add_argument("--verbose", action="store_true")
    return parser


def _load_config(args) -> dict:
    from .experiment import load_experiment_config
    tree = load_experiment_config(args.config)
    if args.seed is not None:
        tree["seed"] = args.seed
    return tree


def cmd_train(args) -> int:
    from .experiment import run_training
    tree = _load_config(args)
    out = args.output_dir or "run"
    result = run_training(tree, out, base_dir=Path(args.config).parent,
                          quiet=not args.verbose)
    summary = result.summary
    print(f"trained {result.total_steps} steps; test accuracy {summary['accuracy']:.4f}, "
          f"ECE {summary['ece']:.4f}, log-likelihood {summary['mean_log_likelihood']:.4f}")
    print(f"outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    from .experiment import run_evaluation
    tree = _load_config(args)
    out = args.output_dir or "eval"
    _, summary = run_evaluation(tree, args.checkpoint, out,
                                base_dir=Path(args.config).parent)
    print(f"evaluated {summary['num_examples']} examples: "
          f"accuracy {summary['accuracy']:.4f}, ECE {summary['ece']:.4f}, "
          f"log-likelihood {summary['mean_log_likelihood']:.4f}")
    print(f"outputs in {out}")
    return 0


def cmd_sweep_k(args) -> int:
    from .experiment import run_sweep
    tree = _load_config(args)
    try:
        k_values = [int(v) for v in args.k_values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --k-values: {exc}") from exc
    out = args.output_dir or "sweep"
    rows = run_sweep(tree, k_values, out, base_dir=Path(args.config).parent,
                     quiet=not args.verbose)
    header = f"{'K':>4} {'log-lik':>10} {'accuracy':>9} {'ECE':>7} {'bcast/step':>11}"
    print(header)
    for row in rows:
        print(f"{row['k']:>4} {row['mean_log_likelihood']:>10.4f} {row['accuracy']:>9.4f} "
              f"{row['ece']:>7.4f} {row['broadcast_per_step']:>11.1f}")
    print(f"outputs in {out}")
    return 0


def cmd_synth_data(args) -> int:
    from .data import write_dataset
    from .experiment import load_dataset
    tree = _load_config(args)
    if tree["data"]["kind"] != "synth":
        raise ConfigurationError("synth-data needs a config with data.kind = 'synth'")
    train, test, num_classes = load_dataset(tree)
    out = args.output_dir or "data"
    manifest = write_dataset(train, test, out, num_classes)
    print(f"wrote {len(train)} train / {len(test)} test examples; manifest {manifest}")
    return 0


def cmd_preprocess(args) -> int:
    from .data import preprocess, read_events, write_dataset
    from .rng import SHUF_STREAM, stream as rng_stream
    events_dir = Path(args.events_dir)
    files = sorted(events_dir.glob("*.evt")) + sorted(events_dir.glob("*.evb"))
    if not files:
        raise ConfigurationError(f"no .evt/.evb event files in {events_dir}")
    crop = tuple(args.crop)
    tensors = [preprocess(read_events(path), crop, args.time_steps) for path in files]
    for path, tensor in zip(files, tensors):
        if tensor.label >= args.num_classes:
            raise ConfigurationError(f"{path}: label {tensor.label} "
                                     f">= --num-classes {args.num_classes}")
    order = rng_stream(args.seed, SHUF_STREAM).permutation(len(tensors))
    num_test = int(round(args.test_fraction * len(tensors)))
    test_idx = set(int(i) for i in order[:num_test])
    train = [tensors[i] for i in range(len(tensors)) if i not in test_idx]
    test = [tensors[i] for i in range(len(tensors)) if i in test_idx]
    manifest = write_dataset(train, test, args.output_dir, args.num_classes)
    print(f"binned {len(files)} recordings into {crop[2] * crop[3]} channels x "
          f"{args.time_steps} steps; manifest {manifest}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-k": cmd_sweep_k,
    "synth-data": cmd_synth_data,
    "preprocess": cmd_preprocess,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
