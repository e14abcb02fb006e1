"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 failed check.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from dataclasses import replace

from .config import ConfigError, RunConfig, load_config, parse_grid
from .estimator import TableMissError
from .keyrate import correlation_summary, sweep, write_csv
from .partition import PartitionScheme, RoundLog, restrict_data
from .verify import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(["--seed must be an unsigned 64-bit integer"])
        changes["seed"] = args.seed
    if getattr(args, "grid", None):
        try:
            changes["att_grid"] = parse_grid(args.grid)
        except ValueError as exc:
            raise ConfigError([f"--grid: {exc}"]) from None
    return replace(cfg, **changes) if changes else cfg


def cmd_keyrate(args) -> int:
    cfg = _load(args)
    with _output(args.out) as fh:
        write_csv(sweep(cfg), fh)
    return EXIT_OK


def cmd_corr(args) -> int:
    cfg = _load(args)
    with _output(args.out) as fh:
        json.dump(correlation_summary(cfg), fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    try:
        reports = [r.to_dict() for r in run_suite(cfg, args.suite)]
        ok = all(r["pass"] for r in reports)
    except (TableMissError, ValueError) as exc:
        reports = [{"check": args.suite, "pass": False, "error": str(exc).strip('"')}]
        ok = False
    with _output(args.out) as fh:
        json.dump(reports, fh, indent=2)
        fh.write("\n")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_partition(args) -> int:
    cfg = _load(args)
    log = RoundLog.from_csv(args.log) if args.log else None
    N = args.N if args.N is not None else len(log) if log is not None else cfg.protocol.N
    l_c = args.l_c if args.l_c is not None else 0
    scheme = PartitionScheme(N, l_c)
    out: dict = {"N": N, "l_c": l_c, "sizes": scheme.sizes}
    if N <= 1000:
        out["sets"] = [s.tolist() for s in scheme.sets]
    if log is not None:
        data = restrict_data(log, scheme)
        out["tallies"] = [t.as_dict() for t in data.partitions]
    with _output(args.out) as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("--seed", type=int, metavar="U64", help="override the configured seed")

    p = argparse.ArgumentParser(prog="corrqkd", description="Finite-key BB84 key rates with correlated sources.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keyrate", parents=[common], help="key rate versus attenuation as CSV")
    k.add_argument("--grid", metavar="START:STOP:STEP", help="attenuation grid in dB, stop inclusive")
    k.set_defaults(func=cmd_keyrate)

    c = sub.add_parser("corr", parents=[common], help="correlation strengths and truncation length as JSON")
    c.set_defaults(func=cmd_corr)

    v = sub.add_parser("verify", parents=[common], help="run numerical checks of the bounds")
    v.add_argument("suite", choices=("fidelity", "truncation", "union", "peep", "all"))
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("partition", parents=[common], help="dump the round partition")
    d.add_argument("--N", type=int, help="number of rounds (default: log length, else protocol.N)")
    d.add_argument("--l-c", dest="l_c", type=int, help="correlation length (default 0)")
    d.add_argument("--log", metavar="PATH", help="per-round CSV log to tally per partition")
    d.set_defaults(func=cmd_partition)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        if args.command != "partition":
            raise
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
