"""
Command-line entry point.

Subcommands:

- ``certify``     fuzz the divergence inequalities
- ``gradcheck``   finite-difference check of the pair-loss gradients
- ``experiment``  baseline versus Pairwise Confusion over several seeds
- ``sweep``       accuracy and Δ across a list of λ values
- ``generate``    write a synthetic train/eval CSV pair

Exit codes: 0 success, 1 failed check or experiment, 2 usage or config error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pairconf import __version__
from pairconf.certification import run_certification
from pairconf.config import ConfigError, ExperimentConfig, load_config
from pairconf.context_manager import config_context, merge_configs
from pairconf.datasets import SYNTH_PRESETS, DatasetError
from pairconf.experiment import run_experiment, run_sweep, write_generated
from pairconf.gradcheck import run_gradcheck

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _lambda_list(text: str) -> list[float]:
    return [_non_negative_float(part.strip()) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairconf",
        description="Pairwise Confusion training, divergence certification and experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging verbosity (default: WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", help="fuzz the divergence inequalities")
    certify.add_argument("--seed", type=int, default=0)
    certify.add_argument("--trials", type=_positive_int, default=100_000)
    certify.add_argument("--workers", type=_positive_int, default=1)

    gradcheck = sub.add_parser("gradcheck", help="check analytic gradients numerically")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--cases", "--trials", dest="cases", type=_positive_int, default=50)

    # config-driven commands share the override flags; None keeps the file value
    overrides = argparse.ArgumentParser(add_help=False)
    overrides.add_argument("--config", type=Path, help="key = value experiment file")
    overrides.add_argument("--seed", type=int)
    overrides.add_argument("--seeds", type=_positive_int, help="number of trials")
    overrides.add_argument("--epochs", type=_positive_int)
    overrides.add_argument("--batch-size", type=_positive_int)
    overrides.add_argument("--lr", type=_non_negative_float)
    overrides.add_argument("--metric", choices=["ec", "jeffreys"])
    overrides.add_argument("--preset", choices=sorted(SYNTH_PRESETS))
    overrides.add_argument("--workers", type=_positive_int)
    overrides.add_argument("--out-dir", type=Path)

    experiment = sub.add_parser(
        "experiment", parents=[overrides], help="baseline versus Pairwise Confusion"
    )
    experiment.add_argument("--lambda", dest="lam", type=_non_negative_float)

    sweep = sub.add_parser("sweep", parents=[overrides], help="accuracy across lambda values")
    sweep.add_argument("--lambdas", type=_lambda_list, required=True, help="comma-separated")

    sub.add_parser("generate", parents=[overrides], help="write a synthetic CSV pair")
    return parser


def _flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "seed": args.seed,
        "seeds": args.seeds,
        "lam": getattr(args, "lam", None),
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.lr_initial": args.lr,
        "train.metric": args.metric,
        "preset": args.preset,
        "workers": args.workers,
        "out_dir": args.out_dir,
    }


def _print(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


def cmd_certify(args: argparse.Namespace) -> int:
    report = run_certification(args.seed, args.trials, args.workers)
    _print(report.lines())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck(args.seed, args.cases)
    _print(report.lines())
    return EXIT_OK if report.passed else EXIT_FAILED


def _run_configured(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    if args.command == "experiment":
        outcome = run_experiment(cfg)
        _print(outcome.lines())
        return outcome.exit_code
    if args.command == "sweep":
        points = run_sweep(cfg, args.lambdas)
        for point in points:
            row = point.row()
            print(
                f"lambda={row['lambda']:g} eval={row['eval_mean']} +- {row['eval_std']} "
                f"gap={row['gap_mean']} +- {row['gap_std']} aborted={row['aborted']}"
            )
        return EXIT_FAILED if any(point.aborted for point in points) else EXIT_OK
    for path in write_generated(cfg):
        print(path)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "certify":
        return cmd_certify(args)
    if args.command == "gradcheck":
        return cmd_gradcheck(args)

    overrides = _flag_overrides(args)
    try:
        base = load_config(args.config) if args.config is not None else ExperimentConfig()
        merge_configs(base, overrides)
    except ValueError as exc:
        print(f"pairconf: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    with config_context(overrides, base=base) as cfg:
        logger.debug(f"Effective config:\n{cfg.to_text()}")
        try:
            return _run_configured(args, cfg)
        except DatasetError as exc:
            print(f"pairconf: dataset error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except ConfigError as exc:
            print(f"pairconf: config error: {exc}", file=sys.stderr)
            return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
