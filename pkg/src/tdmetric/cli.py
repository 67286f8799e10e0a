"""Command-line interface.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 internal error. The default output directory comes from the
``TDMETRIC_OUT`` environment variable; a config's ``outputs.directory``
overrides it and ``--out`` overrides both.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .errors import ConfigError, ParseError, ValidationError
from .library import list_scenarios, resolve_config
from .runner import STAGES, default_output_dir, run_scenario
from .verify import DEFAULT_DIMS, DEFAULT_STEPS, DEFAULT_TRIALS, verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

logger = logging.getLogger("tdmetric")

STAGE_COMMANDS = {
    "evolve": ("evolve",),
    "metric": ("evolve", "metric"),
    "phases": ("evolve", "metric", "phases"),
    "covariance": ("evolve", "metric", "covariance"),
    "lindblad": ("evolve", "lindblad"),
    "run": STAGES,
}


def _common(p: argparse.ArgumentParser, config=True):
    if config:
        p.add_argument(
            "--config", action="append", required=True, metavar="PATH|NAME",
            help="scenario file or builtin name; repeat to run several",
        )
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--steps", type=int, help="override the number of time steps")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p.add_argument("--format", choices=("csv", "json"), action="append", help="restrict output formats")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true", help="print only failures and the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdmetric", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_COMMANDS:
        _common(sub.add_parser(name, help=f"run the {name} stage" if name != "run" else "run the full pipeline"))
    v = sub.add_parser("verify", help="randomized invariant suite")
    _common(v, config=False)
    v.add_argument("--dims", type=int, nargs="+", default=list(DEFAULT_DIMS))
    v.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    v.add_argument("--corrupt-eta", action="store_true", help="inject a metric error (self-test)")
    sub.add_parser("list", help="list builtin scenarios")
    return parser


def _apply_overrides(cfg, args):
    changes = {}
    if args.steps is not None:
        if args.steps < 2:
            raise ValidationError("--steps", "must be >= 2")
        changes["steps"] = args.steps
        if cfg.period_steps is not None and cfg.period_steps == cfg.steps:
            changes["period_steps"] = args.steps
        elif cfg.period_steps is not None and cfg.period_steps > args.steps:
            raise ValidationError("--steps", "smaller than phases.period_steps")
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed", "must be non-negative")
        changes["seed"] = args.seed
    if args.format:
        changes["formats"] = tuple(dict.fromkeys(args.format))
    return cfg.replace(**changes) if changes else cfg


def _output_root(args, cfg=None) -> Path:
    if args.out is not None:
        return args.out
    if cfg is not None and cfg.output_directory:
        return Path(cfg.output_directory)
    return default_output_dir()


def _run_one(job):
    cfg, out_dir, stages = job
    return run_scenario(cfg, out_dir, stages)


def _emit(report, quiet):
    for c in report.checks:
        if not quiet or c.status != "pass":
            print(c.line())
    n_fail = len(report.failures)
    print(f"{report.scenario}: {len(report.checks)} checks, {n_fail} failed")


def _cmd_scenarios(args) -> int:
    cfgs = [_apply_overrides(resolve_config(ref), args) for ref in args.config]
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ValidationError("--config", "scenario names must be unique within one invocation")
    stages = STAGE_COMMANDS[args.command]
    jobs = [(c, _output_root(args, c) / c.name, stages) for c in cfgs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    for r in sorted(reports, key=lambda r: r.scenario):
        _emit(r, args.quiet)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAIL


def _cmd_verify(args) -> int:
    if args.trials < 1:
        raise ValidationError("--trials", "must be >= 1")
    if any(d < 2 for d in args.dims):
        raise ValidationError("--dims", "dimensions must be >= 2")
    steps = DEFAULT_STEPS if args.steps is None else args.steps
    if steps < 2 or steps % 2:
        raise ValidationError("--steps", "must be an even number >= 2")
    seed = 42 if args.seed is None else args.seed
    out = _output_root(args) / "verify"
    report = verify(seed, args.dims, args.trials, steps, args.jobs, args.corrupt_eta, out)
    _emit(report, args.quiet)
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK if report.ok else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        print("\n".join(list_scenarios()))
        return EXIT_OK
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_scenarios(args)
    except ParseError as exc:
        print(f"configuration parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
