"""Command-line entry point.

Subcommands mirror the run models: simulate (rlrw / rllerw / saw /
ising), exact (exact-rlrw), verify, analyze, collapse.  A JSON config file
provides the base settings; most keys can be overridden by flags.  Exit
codes: 0 ok, 1 config error, 2 verification/numerical failure, 3 resource
limit.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, ResourceLimit, VerificationFailure
from .runner import MODELS, RunConfig, run


def _add_common(p):
    p.add_argument("--config", help="JSON config file with base settings")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--L", help="comma-separated side lengths, e.g. 5,7,9")
    p.add_argument("--steps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="torwalk", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo runs (rlrw, rllerw, saw, ising)")
    _add_common(sim)
    sim.add_argument("--model", choices=("rlrw", "rllerw", "saw", "ising"))
    sim.add_argument("--z", type=float, help="fugacity / tanh(1/T)")
    sim.add_argument("--z-c", dest="z_c", type=float, help="critical point for the approach schedule")
    sim.add_argument("--a", type=float, help="approach amplitude")
    sim.add_argument("--lambda", dest="lam", type=float, help="approach exponent")
    sim.add_argument("--law", help='length law as JSON, e.g. \'{"variant":"geometric","mu":2.5}\'')
    sim.add_argument("--walks", type=int, help="walks per replica (rlrw)")
    sim.add_argument("--samples", type=int, help="samples per replica (rllerw)")

    ex = sub.add_parser("exact", help="exact torus evaluation of the walk two-point function")
    _add_common(ex)
    ex.add_argument("--law", help="length law as JSON")
    ex.add_argument("--tail-cut", dest="tail_cut", type=float)

    ver = sub.add_parser("verify", help="bound checkers and closed-form cross-checks")
    _add_common(ver)
    ver.add_argument("--full", action="store_true", help="full grids instead of the quick suite")

    ana = sub.add_parser("analyze", help="power-law fit of scalars CSVs")
    _add_common(ana)
    ana.add_argument("--inputs", nargs="+", required=True, help="scalars CSV files or globs")
    ana.add_argument("--y-column", dest="y_column", choices=("chi", "meanN"))
    ana.add_argument("--fix-c", dest="fix_c", action="store_true")

    col = sub.add_parser("collapse", help="profile collapse transform and quality metric")
    _add_common(col)
    col.add_argument("--inputs", nargs="+", required=True, help="profile CSV files or globs")
    col.add_argument("--mu", type=float, required=True, help="mean-length exponent")
    col.add_argument("--r-min", dest="r_min", type=float)

    return ap


def config_from_args(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            base = json.load(f)
        if not isinstance(base, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")

    if args.command == "simulate":
        if getattr(args, "model", None):
            base["model"] = args.model
        if "model" not in base:
            raise ConfigError("simulate needs --model or a config with 'model'")
        if getattr(args, "z", None) is not None:
            base["z"] = args.z
            base.pop("pseudocritical", None)
        if getattr(args, "z_c", None) is not None:
            base["pseudocritical"] = {
                "z_c": args.z_c,
                "a": args.a if args.a is not None else 0.1,
                "lambda": args.lam if args.lam is not None else 1.0,
            }
            base.pop("z", None)
    elif args.command == "exact":
        base["model"] = "exact-rlrw"
    elif args.command == "verify":
        base["model"] = "verify"
        if getattr(args, "full", False):
            base["quick_verify"] = False
    elif args.command == "analyze":
        base["model"] = "analyze"
    elif args.command == "collapse":
        base["model"] = "collapse"

    for key in ("out_dir", "seed", "replicas", "d", "steps", "burn_in", "walks",
                "samples", "tail_cut", "y_column", "fix_c", "inputs", "mu", "r_min"):
        val = getattr(args, key, None)
        if val is not None and val is not False:
            base[key] = val
    if getattr(args, "L", None):
        base["L"] = [int(x) for x in str(args.L).split(",") if x]
    if getattr(args, "law", None):
        try:
            base["law"] = json.loads(args.law)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--law is not valid JSON: {e}") from None
    return RunConfig(base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        manifest = run(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except VerificationFailure as e:
        print(f"verification failure: {e}", file=sys.stderr)
        return 2
    except ResourceLimit as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return 3
    n = len(manifest["files"])
    print(f"wrote {n} files to {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
