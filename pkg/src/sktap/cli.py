"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 a pass flag is false and ``--assert`` was given.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, NumericalError, SkTapError
from .harness import EXPERIMENTS, ExperimentConfig, load_config, parse_seeds, run_experiment, write_output

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ASSERT = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise _UsageError(f"{self.prog}: {message}")


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--beta", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--n", help="comma-separated system sizes")
    sp.add_argument("--seeds", help="'0,1,2' or 'base:count'")
    sp.add_argument("--k-max", type=int, dest="k_max")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.add_argument("--format", choices=("csv", "json"))
    sp.add_argument("--config", help="key=value configuration file; flags override it")
    sp.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    sp.add_argument("--n-points", type=int, dest="n_points")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE",
                    help="override a named tolerance (repeatable)")
    sp.add_argument("--assert", action="store_true", dest="check", help="exit 3 if any clause fails")
    sp.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sktap", description="SK model TAP/high-temperature numerical laboratory")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in list(EXPERIMENTS) + ["sweep"]:
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "sweep":
            sp.add_argument("--axis", choices=("beta", "h"))
            sp.add_argument("--values", help="comma-separated values (may be empty)")
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    kw = load_config(args.config) if args.config else {}
    kw.pop("command", None)
    for key in ("beta", "h", "k_max", "format", "threads", "n_points", "eps", "restarts"):
        v = getattr(args, key, None)
        if v is not None:
            kw[key] = v
    if args.out is not None:
        kw["output_path"] = args.out
    if args.n is not None:
        try:
            kw["n_values"] = tuple(int(s) for s in args.n.split(",") if s.strip())
        except ValueError as exc:
            raise ConfigError(f"n: cannot parse {args.n!r}") from exc
    if args.seeds is not None:
        kw["seeds"] = parse_seeds(args.seeds)
    if args.tol:
        tols = dict(kw.get("tolerances", ()))
        for item in args.tol:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"tol: expected KEY=VALUE, got {item!r}")
            try:
                tols[key.strip()] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{key.strip()}: cannot parse {value!r}") from exc
        kw["tolerances"] = tuple(sorted(tols.items()))
    if getattr(args, "axis", None) is not None:
        kw["axis"] = args.axis
    if getattr(args, "values", None) is not None:
        kw["values"] = tuple(float(s) for s in args.values.split(",") if s.strip())
    return ExperimentConfig(command=args.command, **kw)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise _UsageError("sktap: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config_from_args(args)
        rec = run_experiment(cfg)
        write_output(rec, cfg.format, cfg.output_path)
    except (_UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SkTapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.check and not rec.passed:
        print("acceptance failure: at least one pass flag is false", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
