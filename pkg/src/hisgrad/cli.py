"""
Command line interface.

Exit codes: ``0`` on success, ``1`` on runtime or verification failures and
``2`` on usage and configuration errors.
"""
import argparse
import json
import os
import sys
from typing import *

from . import coopgame
from .config import (ABLATIONS, ConfigError, dumps_config, load_config,
                     parse_override)
from .experiments import (RunExistsError, ablate, parse_grid, run_experiment,
                          sweep)
from .verify import suites

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def out_root() -> str:
    return os.environ.get("HIS_OUT_DIR", "runs")


def _csv(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v.strip()]

    return parse


def _tracking_uri(args, out_dir):
    if args.no_mlflow:
        return None
    return f"file:{os.path.abspath(out_dir)}/mlruns"


def _load(args, **extra):
    overrides = dict(parse_override(s) for s in args.set)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "ablation", None) is not None:
        overrides["ablation"] = args.ablation
    if getattr(args, "verbose", False):
        overrides["verbose"] = True
    return load_config(args.config, **{**overrides, **extra})


def cmd_run(args) -> int:
    config = _load(args)
    if args.print_config:
        print(dumps_config(config), end="")
        return EXIT_OK
    out_dir = args.out or os.path.join(
        out_root(), f"{config.env}-{config.ablation}-seed{config.seed}")
    try:
        summary = run_experiment(config,
                                 out_dir,
                                 force=args.force,
                                 tracking_uri=_tracking_uri(args, out_dir))
    except RunExistsError as e:
        print(f"Error: {e} (use --force to overwrite)", file=sys.stderr)
        return EXIT_USAGE
    final = summary["final"]
    print(f"Finished {summary['steps']} steps; mean return "
          f"{final.get('ret_mean')}; artefacts in {out_dir}")
    return EXIT_OK


def _format(values) -> str:
    return " ".join(f"{x:.10g}" for x in values)


def _bool(b) -> str:
    return "true" if b else "false"


def cmd_game(args) -> int:
    game = coopgame.load_game(args.game)
    if args.action == "shapley":
        print(_format(coopgame.shapley_values(game).payoffs))
    elif args.action == "hybrid":
        x = coopgame.hybrid_allocation(game)
        print(_format(x.payoffs))
        print(f"efficient={_bool(coopgame.is_efficient(game, x))}")
        print(f"core={_bool(coopgame.is_in_core(game, x))}")
    elif args.action == "convex":
        violation = coopgame.find_convexity_violation(game)
        print(_bool(violation is None))
        if violation is not None:
            C, D = violation
            print(f"C={{{C.key()}}} D={{{D.key()}}}")
    elif args.action == "core":
        if args.allocation is None:
            x = coopgame.shapley_values(game)
        else:
            x = coopgame.Allocation(args.allocation)
        blocking = coopgame.find_core_violation(game, x)
        print(_bool(blocking is None))
        if blocking is not None:
            print(f"blocking={{{blocking.key()}}}")
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {"seed": args.seed}
    if args.suite == "theorems":
        kwargs["count"] = args.count
    elif args.suite == "distributions" and args.draws is not None:
        kwargs["draws"] = args.draws
    report = suites[args.suite](**kwargs)
    text = json.dumps(report, indent=2)
    print(text)
    if args.report is not None:
        with open(args.report, "w") as f:
            f.write(text + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAILURE


def cmd_ablate(args) -> int:
    config = _load(args)
    out_dir = args.out or os.path.join(out_root(), "ablation")
    report = ablate(config,
                    args.modes,
                    args.seeds,
                    out_dir,
                    force=args.force,
                    tracking_uri=_tracking_uri(args, out_dir),
                    n_jobs=args.jobs)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    grid = parse_grid(args.grid)
    out_dir = args.out or os.path.join(out_root(), "sweep")
    medians = sweep(config,
                    grid,
                    args.seeds,
                    out_dir,
                    force=args.force,
                    tracking_uri=_tracking_uri(args, out_dir),
                    n_jobs=args.jobs)
    print(medians.to_string(index=False))
    return EXIT_OK


def _training_options(p, seed=True):
    p.add_argument("--config", default=None, help="TOML configuration file")
    if seed:
        p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set",
                   action="append",
                   default=[],
                   metavar="KEY=VALUE",
                   help="override a configuration value (repeatable)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--force",
                   action="store_true",
                   help="overwrite completed runs")
    p.add_argument("--no-mlflow",
                   action="store_true",
                   help="disable MLflow tracking")
    p.add_argument("--verbose", action="store_true")


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hisgrad",
        description="Multi-agent soft actor-critic with Shapley credit "
        "assignment from historical action likelihoods")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    _training_options(run)
    run.add_argument("--ablation", choices=ABLATIONS, default=None)
    run.add_argument("--print-config",
                     action="store_true",
                     help="print the effective configuration and exit")
    run.set_defaults(func=cmd_run)

    ablation = sub.add_parser("ablate", help="compare ablation modes")
    _training_options(ablation, seed=False)
    ablation.add_argument("--modes",
                          type=_csv(str),
                          default=["full", "share"])
    ablation.add_argument("--seeds", type=_csv(int), default=[0, 1, 2, 3, 4])
    ablation.add_argument("--jobs", type=int, default=1)
    ablation.set_defaults(func=cmd_ablate)

    game = sub.add_parser("game", help="cooperative game utilities")
    game.add_argument("action", choices=["shapley", "core", "convex", "hybrid"])
    game.add_argument("game", help="game JSON file")
    game.add_argument("--allocation",
                      type=_csv(float),
                      default=None,
                      help="allocation to check with 'core' (default: the "
                      "Shapley values)")
    game.set_defaults(func=cmd_game)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("suite", choices=sorted(suites))
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--count", type=int, default=200)
    verify.add_argument("--draws", type=int, default=None)
    verify.add_argument("--report", default=None, help="also write JSON here")
    verify.set_defaults(func=cmd_verify)

    grid = sub.add_parser("sweep", help="hyperparameter grid sweep")
    _training_options(grid, seed=False)
    grid.add_argument("--grid",
                      action="append",
                      required=True,
                      metavar="KEY=V1,V2,...")
    grid.add_argument("--seeds", type=_csv(int), default=[0, 1, 2])
    grid.add_argument("--jobs", type=int, default=1)
    grid.set_defaults(func=cmd_sweep)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, RunExistsError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, FloatingPointError, RuntimeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        # Malformed game files and invalid suite arguments are usage errors.
        usage = (isinstance(e, ValueError)
                 and args.command in ("game", "ablate", "sweep")) or (
                     isinstance(e, OSError) and args.command == "game")
        return EXIT_USAGE if usage else EXIT_FAILURE
