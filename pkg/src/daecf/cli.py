"""Command-line entry points.

Subcommands: ``train``, ``eval``, ``compare``, ``synth``, ``tune``.
Exit codes: 0 on success, 2 on input validation failures, 3 on
numerical failures.  Given identical inputs and seeds, every report
file is byte-identical between runs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import compare as compare_mod
from . import synth, training, tuning
from .baselines import ALGORITHMS
from .data import PLACEMENTS, load_directory, save_recording
from .errors import NumericalError, ValidationError
from .gainnet import RESIDUAL_MODES, GainNet

__all__ = ["main"]


def _load_recordings(data_dir, placement=None):
    recs = load_directory(data_dir)
    if placement:
        recs = [r for r in recs if r.placement == placement]
    if not recs:
        raise ValidationError(
            f"no recordings found under {data_dir}"
            + (f" with placement {placement}" if placement else "")
        )
    return recs


def _cmd_train(args) -> int:
    recs = _load_recordings(args.data_dir, args.placement)
    config = training.TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        segment_length=args.segment_length,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        ic_error_deg=args.ic_error_deg,
        shuffle=not args.no_shuffle,
        ic_perturb=not args.no_ic_perturb,
        augmented=not args.no_augment,
        residual_mode=args.residual_mode,
    )
    result = training.train(recs, config, out_dir=args.checkpoint_dir)
    result.net.save(args.out_params)
    last = result.history[-1] if result.history else None
    print(f"trained {config.epochs} epochs on {len(recs)} recordings")
    if last is not None:
        print(f"final train loss {np.degrees(last.train_jf):.4f} deg, "
              f"best epoch {result.best_epoch}")
    print(f"parameters written to {args.out_params}")
    return 0


def _cmd_eval(args) -> int:
    net = GainNet.load(args.params)
    recs = _load_recordings(args.data_dir, args.placement)
    losses, mean = training.evaluate(net, recs)
    lines = ["rec_id,placement,jf_rad,jf_deg"]
    for rec, j in zip(recs, losses):
        lines.append(f"{rec.rec_id},{rec.placement},{j:.9g},"
                     f"{np.degrees(j):.9g}")
    lines.append(f"mean,,{mean:.9g},{np.degrees(mean):.9g}")
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w", newline="") as fh:
            fh.write(text)
        print(f"report written to {args.report}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_compare(args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {a!r}; "
                                  f"choose from {', '.join(ALGORITHMS)}")
    train_recs = _load_recordings(args.train_dir)
    test_recs = _load_recordings(args.test_dir)
    dae_net = GainNet.load(args.dae_params) if args.dae_params else None
    train_config = None
    if dae_net is None and "dae" in algorithms:
        train_config = training.TrainConfig(
            epochs=args.epochs, seed=args.seed,
            segment_length=args.segment_length,
        )
    rows, results = compare_mod.compare(
        algorithms, train_recs, test_recs,
        dae_net=dae_net, train_config=train_config,
    )
    compare_mod.write_report(rows, args.report)
    print(f"report written to {args.report}")
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        from .baselines import run_filter
        for algorithm in algorithms:
            config = results[algorithm].config
            for rec in test_recs:
                est = run_filter(algorithm, config, rec)
                path = compare_mod.trace_path(args.trace_dir, algorithm,
                                              rec.rec_id)
                compare_mod.write_trace(rec, est, path)
        print(f"traces written to {args.trace_dir}")
    return 0


def _cmd_synth(args) -> int:
    if args.profile not in synth.PROFILES:
        raise ValidationError(f"unknown profile {args.profile!r}; choose "
                              f"from {', '.join(sorted(synth.PROFILES))}")
    rec = synth.generate_synthetic(args.profile, args.duration, args.rate,
                                   args.seed)
    save_recording(rec, args.out)
    print(f"wrote {len(rec)} samples to {args.out}")
    return 0


def _cmd_tune(args) -> int:
    recs = _load_recordings(args.data_dir)
    grid = None
    if args.grid:
        values = [float(v) for v in args.grid.split(",")]
        grid = [(v, 0.0) for v in values] if args.algorithm == "mahony" \
            else values
    result = tuning.tune_baseline(args.algorithm, grid, recs)
    print(f"algorithm: {result.algorithm}")
    print(f"best: {result.best}")
    print(f"loss: {result.best_loss:.9g} rad "
          f"({np.degrees(result.best_loss):.6f} deg)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daecf",
        description="Attitude estimation with learned accelerometer gains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train gain networks on recordings")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--placement", choices=PLACEMENTS)
    p.add_argument("--segment-length", type=int, default=8000)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--ic-error-deg", type=float, default=0.1)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-params", required=True)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--no-ic-perturb", action="store_true")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--residual-mode", choices=RESIDUAL_MODES,
                   default="signed-clamp")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate trained parameters")
    p.add_argument("--params", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--placement", choices=PLACEMENTS)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="tune baselines and compare")
    p.add_argument("--algorithms", default=",".join(ALGORITHMS))
    p.add_argument("--train-dir", required=True)
    p.add_argument("--test-dir", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--dae-params")
    p.add_argument("--trace-dir")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--segment-length", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("synth", help="generate a synthetic recording")
    p.add_argument("--profile", default="smooth")
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--rate", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("tune", help="grid-search a baseline")
    p.add_argument("--algorithm", required=True,
                   choices=[a for a in ALGORITHMS if a != "dae"])
    p.add_argument("--grid", help="comma-separated parameter values")
    p.add_argument("--data-dir", required=True)
    p.set_defaults(func=_cmd_tune)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
