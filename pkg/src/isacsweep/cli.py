"""Command-line entry point: ``isacsweep <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration error, 2 every point infeasible,
3 oracle failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, Infeasible
from .harness import experiments
from .harness.config import load_config
from .harness.records import write_csv, write_manifest

log = logging.getLogger("isacsweep")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ORACLE = 0, 1, 2, 3


def _flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser.
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="key = value scenario file (defaults if omitted)")
    g.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    g.add_argument("--seed", type=int, metavar="U64")
    g.add_argument("--trials", type=int, metavar="N", help="Monte Carlo trials for every experiment")
    g.add_argument("--precoder", choices=("proposed", "noncoord"))
    g.add_argument("--dl-mask", choices=("on", "off"))
    g.add_argument("--rcs", choices=("sw2", "weibull"))
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    flags = _flags()
    parser = argparse.ArgumentParser(prog="isacsweep", parents=[flags],
                                     description="Coordinated SSB beam sweeping sensing simulator.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in (
        ("sweep-power", "sensing SINR versus P_max"),
        ("sweep-altitude", "sensing SINR versus P_max at each volume altitude"),
        ("cdf", "instantaneous SINR distribution, Swerling-2 and Weibull targets"),
        ("roc", "Monte Carlo and closed-form ROC per P_max"),
        ("solve", "solve one voxel and print the precoder residuals"),
        ("validate", "oracle cross-checks"),
    ):
        sub.add_parser(name, parents=[flags], help=text, description=text)
    return parser


def resolve_config(args):
    cfg = load_config(getattr(args, "config", None))
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        n = args.trials
        changes.update(trials=n, cdf_trials=n, roc_trials=n)
    if getattr(args, "precoder", None):
        changes["precoder"] = args.precoder
    if getattr(args, "dl_mask", None):
        changes["dl_mask"] = args.dl_mask
    if getattr(args, "rcs", None):
        changes["rcs_model"] = "swerling2" if args.rcs == "sw2" else "weibull"
    return cfg.replace(**changes) if changes else cfg


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _all_infeasible(records) -> bool:
    flags = [r.linear for r in records if r.metric == "feasible"]
    return bool(flags) and not any(flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(getattr(args, "out", "out"))
    command = args.command
    try:
        if command == "solve":
            report = experiments.solve_single(cfg)
            print(json.dumps(report, indent=2, default=_json_default))
            return EXIT_OK
        if command == "validate":
            checks = experiments.run_validate(cfg)
            failed = False
            for c in checks:
                status = "PASS" if c.passed else ("INFO" if c.informational else "FAIL")
                failed |= not c.passed and not c.informational
                print(f"{status:4s} {c.name}: {c.detail}")
            write_manifest(out, cfg, command, {"checks": {c.name: bool(c.passed) for c in checks}})
            return EXIT_ORACLE if failed else EXIT_OK
        runner = {
            "sweep-power": experiments.run_power_sweep,
            "sweep-altitude": experiments.run_altitude_sweep,
            "cdf": experiments.run_cdf,
            "roc": experiments.run_roc,
        }[command]
        records = runner(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    path = write_csv(records, out / f"{command}.csv")
    write_manifest(out, cfg, command, {"csv": path.name, "rows": len(records)})
    log.info("wrote %d rows to %s", len(records), path)
    print(path)
    return EXIT_INFEASIBLE if _all_infeasible(records) else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
