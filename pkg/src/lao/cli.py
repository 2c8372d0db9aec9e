"""``lao`` command-line interface.

Settings are layered: built-in defaults, then ``--config file.json``, then
any flag given explicitly on the command line.

Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import ConfigurationError, DataFormatError, InvalidInputError
from .data import (
    CERT_L2,
    CERT_LINF,
    digits_surrogate,
    save_csv,
    synth_linear,
    synth_lower_bound,
    write_idx,
)
from .harness import ALGORITHMS, ExperimentConfig, cmd_cv, cmd_experiment, cmd_train, cmd_verify
from .verify import SUITES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


def _eta(text):
    try:
        return float(text)
    except ValueError:
        return text


def _add_common(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", help="JSON config; explicit flags override it")
    p.add_argument("--algo", dest="algorithm", choices=ALGORITHMS, default=s)
    p.add_argument("--k", type=int, default=s, help="attributes sampled per example")
    p.add_argument("--B", type=float, default=s, help="norm bound (default max(1, max|y|))")
    p.add_argument("--eta", type=_eta, default=s, help="step size, 'auto' or 'c*auto'")
    p.add_argument("--delta", type=float, default=s)
    p.add_argument("--epsilon", type=float, default=s)
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--trials", type=int, default=s)
    p.add_argument("--data", default=s, help="CSV file, or IDX image file")
    p.add_argument("--labels", default=s, help="IDX label file")
    p.add_argument("--format", choices=("idx", "csv"), default=s)
    p.add_argument("--task", choices=("3vs5",), default=s)
    p.add_argument("--budget", type=int, default=s, help="global attribute budget")
    p.add_argument("--out", default=s, help="output CSV path")
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=s)
    p.add_argument("--passes", type=int, default=s, help="reshuffled passes over the training split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lao", description="Attribute-efficient linear regression")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit one algorithm and write its trace CSV")
    _add_common(train)

    exp = sub.add_parser("experiment", help="compare algorithms under a shared attribute budget")
    _add_common(exp)
    exp.add_argument("--algos", dest="algorithms", type=lambda s: s.split(","), default=argparse.SUPPRESS,
                     help="comma-separated algorithms to compare")
    exp.add_argument("--plot", default=argparse.SUPPRESS, help="also write a gnuplot script here")

    cv = sub.add_parser("cv", help="k-fold grid search over eta / B / k")
    _add_common(cv)
    cv.add_argument("--folds", type=int, default=argparse.SUPPRESS)
    cv.add_argument("--grid-eta", dest="grid_eta", type=lambda s: [_eta(v) for v in s.split(",")])
    cv.add_argument("--grid-B", dest="grid_B", type=lambda s: [float(v) for v in s.split(",")])
    cv.add_argument("--grid-k", dest="grid_k", type=lambda s: [int(v) for v in s.split(",")])

    ver = sub.add_parser("verify", help="run verification suites")
    ver.add_argument("suites", nargs="*", default=["all"], help=f"any of {', '.join(SUITES)} or all")

    syn = sub.add_parser("synth", help="write a synthetic dataset")
    syn.add_argument("--kind", choices=("linear", "lower-bound", "digits"), default="linear")
    syn.add_argument("--d", type=int, default=10)
    syn.add_argument("--m", type=int, default=1000)
    syn.add_argument("--sparsity", type=int)
    syn.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.0)
    syn.add_argument("--norm", choices=(CERT_L2, CERT_LINF), default=CERT_L2)
    syn.add_argument("--epsilon", type=float, default=0.5)
    syn.add_argument("--B", type=float, default=1.0)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True,
                     help="CSV path; for digits, a prefix for <out>-images.idx and <out>-labels.idx")
    return parser


_NOT_CONFIG = {"command", "config", "grid_eta", "grid_B", "grid_k"}


def make_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config JSON must be an object")
    raw.update({k: v for k, v in vars(args).items() if k not in _NOT_CONFIG})
    return ExperimentConfig.from_dict(raw)


def _run_train(args) -> int:
    config = make_config(args)
    outcome = cmd_train(config)
    for trial, res in enumerate(outcome.results):
        final = res.trace[-1].test_error
        print(f"trial {trial}: {res.n_examples} examples, {res.ledger_total} attributes, "
              f"eta={res.eta:.4g}, final test MSE {final:.6g}")
    for path in outcome.paths:
        print(f"wrote {path}")
    return EXIT_OK


def _run_experiment(args) -> int:
    config = make_config(args)
    outcome = cmd_experiment(config)
    for algo in config.algorithms:
        finals = outcome.final_mse(algo)
        examples = np.mean([f["examples"] for f in outcome.finals[algo]])
        print(f"{algo}: mean final test MSE {finals.mean():.6g} over {config.trials} trial(s), "
              f"{examples:.0f} examples on average")
    for path in outcome.paths:
        print(f"wrote {path}")
    return EXIT_OK


def _run_cv(args) -> int:
    config = make_config(args)
    grid = {key: vals for key, vals in (("eta", args.grid_eta), ("B", args.grid_B), ("k", args.grid_k)) if vals}
    outcome = cmd_cv(config, grid or None)
    for row in outcome.table:
        print(f"eta={row['eta']!s:>10} B={row['B']:<6g} k={row['k']:<3} val MSE {row['mean_val_mse']:.6g}")
    best = outcome.best
    print(f"best: eta={best['eta']} B={best['B']:g} k={best['k']} (val MSE {best['mean_val_mse']:.6g})")
    if outcome.path:
        print(f"wrote {outcome.path}")
    return EXIT_OK


def _run_verify(args) -> int:
    ok, checks = cmd_verify(args.suites)
    for check in checks:
        print(check.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if ok else EXIT_VERIFY


def _run_synth(args) -> int:
    if args.kind == "linear":
        ds, _ = synth_linear(args.d, args.m, args.sparsity, args.noise_sd, args.norm, args.seed, args.B)
        save_csv(ds, args.out)
    elif args.kind == "lower-bound":
        ds = synth_lower_bound(args.d, args.epsilon, args.seed).sample(args.m, args.seed)
        save_csv(ds, args.out)
    else:
        ds = digits_surrogate(args.m, seed=args.seed)
        write_idx(f"{args.out}-images.idx", f"{args.out}-labels.idx",
                  ds.X.reshape(-1, 28, 28), ds.raw_labels)
    print(f"wrote {len(ds)} instances (d = {ds.d}) to {args.out}")
    return EXIT_OK


COMMANDS = {
    "train": _run_train,
    "experiment": _run_experiment,
    "cv": _run_cv,
    "verify": _run_verify,
    "synth": _run_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DataFormatError as exc:
        print(f"lao: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"lao: data error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"lao: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
