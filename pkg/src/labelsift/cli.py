"""Command-line interface.

Subcommands: train, bench-avgsim, kappa-mse, sweep, gen-data.  Every run
echoes its effective configuration into the output directory and writes CSV
logs plus (unless disabled with --set figures=false) rendered figures.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .datagen import (
    SyntheticSpec,
    apply_small_cluster_noise,
    apply_symmetric_noise,
    gen_dataset,
    write_dataset,
)
from . import harness


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single config key (repeatable)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="labelsift",
        description="Label-noise-filtered metric learning on synthetic benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the filtered training loop")
    _add_common(train)

    bench = sub.add_parser("bench-avgsim", help="time the two mean-similarity filter paths")
    _add_common(bench)

    kmse = sub.add_parser("kappa-mse", help="concentration-estimation error vs sample count")
    _add_common(kmse)

    swp = sub.add_parser("sweep", help="independent runs across values of one config key")
    _add_common(swp)
    swp.add_argument("--parameter", required=True, help="config key to sweep")
    swp.add_argument(
        "--values", required=True, help="comma-separated values for the swept key"
    )

    gen = sub.add_parser("gen-data", help="write a synthetic noisy dataset to disk")
    _add_common(gen)

    return parser


def _cmd_train(config, args):
    record = harness.run_training(config, args.out)
    summary = record.summary
    if summary:
        print(
            f"final P@1 {summary['final_p_at_1']:.4f} "
            f"(best {summary['best_p_at_1']:.4f} at iter {summary['best_iter']})"
        )
    if record.skipped_iters:
        print(f"skipped {len(record.skipped_iters)} iterations with empty clean subsets")
    print(f"outputs written to {args.out}")


def _cmd_bench(config, args):
    report = harness.bench_avgsim(config, args.out)
    for row in report["rows"]:
        per_iter = row["seconds"] / row["iterations"] * 1e3
        print(
            f"{row['variant']}: {row['seconds']:.3f} s "
            f"({per_iter:.3f} ms/iter, {row['sims_per_iter']} sims/iter)"
        )
    print(f"centers speedup: {report['ratio']:.2f}x")


def _cmd_kappa(config, args):
    rows = harness.run_kappa_experiment(config, args.out)
    for row in rows:
        print(f"n={row['n']:6d}  mse={row['mse']:.4f}")


def _cmd_sweep(config, args):
    from .config import _coerce  # sweep values share the config grammar

    values = [_coerce(args.parameter, v) for v in args.values.split(",")]
    results = harness.sweep(config, args.parameter, values, args.out)
    for value, record in results:
        print(
            f"{args.parameter}={value} seed={record.config.seed} "
            f"final P@1 {record.summary.get('final_p_at_1', float('nan')):.4f}"
        )


def _cmd_gen_data(config, args):
    spec = SyntheticSpec(
        num_classes=config.num_classes,
        samples_per_class=config.samples_per_class,
        input_dim=config.input_dim,
        concentration=config.concentration,
        seed=config.seed,
    )
    ds = gen_dataset(spec)
    rng = np.random.default_rng((config.seed, 1))
    if config.noise_model == "symmetric" and config.noise_rate > 0:
        ds = apply_symmetric_noise(ds, config.noise_rate, rng)
    elif config.noise_model == "small_cluster" and config.noise_rate > 0:
        ds = apply_small_cluster_noise(ds, config.noise_rate, rng, config.cluster_size)
    write_dataset(ds, args.out)
    if ds.note:
        print(ds.note)
    print(
        f"wrote {len(ds)} samples ({ds.achieved_noise_rate:.4f} noisy) to {args.out}"
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides, args.seed)
        if args.command == "train":
            _cmd_train(config, args)
        elif args.command == "bench-avgsim":
            _cmd_bench(config, args)
        elif args.command == "kappa-mse":
            _cmd_kappa(config, args)
        elif args.command == "sweep":
            _cmd_sweep(config, args)
        elif args.command == "gen-data":
            _cmd_gen_data(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
