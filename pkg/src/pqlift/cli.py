"""Command line entry point: ``pqlift <subcommand> [--config FILE] [--seed N] ...``.

Each subcommand runs one experiment suite and writes ``records.jsonl``,
``summary.json`` and ``summary.txt`` to ``--out``. Exit status is 0 when every
check passes, 1 when a check fails and 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, UnsupportedAssumptionError
from .suites import DEFAULTS, human_summary, resolve, run_suite, write_report

CLI_KEYS = ("subcommand", "seed", "trials", "threads", "out")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pqlift", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True
    helps = {"persist-demo": "ValEst unbiasedness, almost-projectivity, repair and persistence",
             "memless-sim": "flood-and-plant simulation against the ideal memoryless solver",
             "stateless-sim": "shuffle simulation and the stateless collapse check",
             "lift-run": "lifted reduction: one-shot headline and durable stream",
             "plugin-verify": "exact plug-in bound checks on instance files"}
    for name in DEFAULTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="JSON object of suite parameters")
        p.add_argument("--seed", type=_u64, help="master seed (default 0)")
        p.add_argument("--trials", type=_positive, help="main trial count of the suite")
        p.add_argument("--out", type=Path, help="report directory (default reports/<subcommand>)")
        p.add_argument("--threads", type=_positive, help="worker threads (default 1)")
        if name == "plugin-verify":
            p.add_argument("instances", nargs="*", type=Path,
                           help="instance files; when given, only these are checked")
    return ap


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        if doc.get("subcommand", args.subcommand) != args.subcommand:
            raise ConfigurationError(
                f"config is for {doc['subcommand']!r}, not {args.subcommand!r}")
        overrides = {k: v for k, v in doc.items() if k not in CLI_KEYS}
        if args.subcommand == "plugin-verify" and args.instances:
            overrides.update(instances=[str(p) for p in args.instances], bundled=False,
                             sweep=False, random_instances=0)
        seed = args.seed if args.seed is not None else _u64(str(doc.get("seed", 0)))
        trials = args.trials if args.trials is not None else doc.get("trials")
        threads = args.threads or int(doc.get("threads", 1))
        out = args.out or Path(doc.get("out", Path("reports") / args.subcommand))
        cfg = resolve(args.subcommand, overrides, seed=seed, trials=trials)
        records, summary = run_suite(cfg, threads=threads)
    except (ConfigurationError, UnsupportedAssumptionError, argparse.ArgumentTypeError) as err:
        print(f"pqlift {args.subcommand}: error: {err}", file=sys.stderr)
        return 2
    write_report(out, records, summary)
    sys.stdout.write(human_summary(summary))
    print(f"reports written to {out}")
    return 0 if summary["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
