"""Command-line entry point: compare, rho-sweep, negotiate, synth, validate.

Exit codes: 0 ok, 2 configuration error, 3 non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from drcap.config import ConfigError, load_config
from drcap.ingest import TraceParseError
from drcap import experiments

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="key=value config file with dotted keys")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--annualize", type=float, metavar="SLOTS",
                        help="report costs scaled by this many slots per year")
    parser.add_argument("--no-plot", action="store_true",
                        help="write CSVs only, skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcap",
        description="Joint reserve-capacity and linear demand-response "
                    "policy planning: benchmarks, sweeps, and the "
                    "distributed price negotiation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("compare", "social cost of OPT/LIN/SEQ across capacity prices"),
            ("rho-sweep", "opt-out commitment sweep per cost-spread value"),
            ("negotiate", "run the distributed LIN negotiation"),
            ("synth", "generate and save synthetic scenarios"),
            ("validate", "validate the configured scenario source")):
        _add_common(sub.add_parser(name, help=text))
    return parser


def _config_from_args(args) -> "experiments.ExperimentConfig":
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.annualize is not None:
        cfg.annualize = args.annualize
    if args.no_plot:
        cfg.plot = False
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "compare":
            rows = experiments.run_compare(cfg)
            for row in rows:
                cells = "  ".join(f"{k}={v:.6g}" for k, v in row.items())
                print(cells)
        elif args.command == "rho-sweep":
            results = experiments.run_rho_sweep(cfg)
            for rsd, rows in results.items():
                best = min(rows, key=lambda r: r[1])
                print(f"a_rsd={rsd:g}: best rho={best[0]:g} "
                      f"cost={best[1]:.6g} (full-commitment {rows[-1][1]:.6g})")
        elif args.command == "negotiate":
            res = experiments.run_negotiation(cfg)
            print(f"rounds={res.rounds} converged={res.converged} "
                  f"objective={res.solution.expected_cost:.6g} "
                  f"kappa={res.solution.kappa:.6g}")
            if not res.converged:
                print("negotiation did not converge within "
                      f"{cfg.neg_max_rounds} rounds", file=sys.stderr)
                return EXIT_NONCONVERGENCE
        elif args.command == "synth":
            path = experiments.run_synth(cfg)
            print(f"wrote {path}")
        elif args.command == "validate":
            rep = experiments.run_validate(cfg)
            if rep.ok:
                print("scenarios ok")
            else:
                for failure in rep.failures:
                    print(f"invalid: {failure}", file=sys.stderr)
                return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
