"""Command line entry point: ``locfell <subcommand>``.

All artifacts go under ``--out DIR``; ``LOCFELL_THREADS`` caps simulation
workers and never changes results.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

__all__ = ["main"]

_TYPES = {
    "testmg": ("martingale", "generator", "pmp", "semigroup", "quasi_continuity", "markov",
               "feller_tail"),
    "converge": ("operator_convergence", "law_convergence", "localisation", "timechange_demo"),
    "tightness": ("tightness",),
}


def _cmd_run(args) -> int:
    from .harness import run_config
    return run_config(args.config, args.out, gnuplot=args.gnuplot, figures=not args.no_figures)


def _cmd_subset(args) -> int:
    from .harness import run_config
    return run_config(args.config, args.out, types=_TYPES[args.command], gnuplot=args.gnuplot,
                      figures=not args.no_figures)


def _cmd_simulate(args) -> int:
    from .config import ConfigError, build_config, load_config
    from .plotting import plot_paths
    from .simulators import ensemble
    try:
        cfg = build_config(load_config(args.config))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    name = args.family or ("family" if "family" in cfg.families else next(iter(cfg.families), None))
    if name not in cfg.families:
        print(f"{args.config}:1: unknown family {name!r}", file=sys.stderr)
        return 2
    fam = cfg.families[name]
    init = json.loads(args.init) if args.init is not None else 0.0
    ens = ensemble(fam, init, args.N, args.seed if args.seed is not None else cfg.seed)
    out = Path(args.out)
    ens.dump(out / "paths")
    plot_paths(ens.paths, out / "paths.png", horizon=fam.T, title=fam.family_id)
    print(f"wrote {len(ens)} paths of {fam.family_id} to {out / 'paths'}")
    return 0


def _cmd_distance(args) -> int:
    from .harness import write_csv
    from .paths import read_path_csv
    from .skorokhod import global_distance, local_distance
    from .state_space import StateSpace
    space = StateSpace.from_config(json.loads(args.space)) if args.space else StateSpace()
    x, y = read_path_csv(args.a), read_path_csv(args.b)
    row = {"a": args.a, "b": args.b}
    if args.horizon is not None:
        row["horizon"] = args.horizon
        row["global_distance"] = global_distance(x, y, args.horizon, space)
    row["local_distance"] = local_distance(x, y, space)
    for k, v in row.items():
        if k not in ("a", "b"):
            print(f"{k}={v!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv([row], out / "distance.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locfell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def outputs(q, default="locfell-out"):
        q.add_argument("--out", default=default, help="output directory")
        q.add_argument("--gnuplot", action="store_true", help="also emit gnuplot script stubs")
        q.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    q = sub.add_parser("run", help="run every experiment of a config file")
    q.add_argument("config")
    outputs(q)
    q.set_defaults(fn=_cmd_run)

    for name, help_ in (("testmg", "martingale-problem and generator checks"),
                        ("converge", "operator/law convergence and localisation"),
                        ("tightness", "Aldous tightness tables")):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--config", required=True)
        outputs(q)
        q.set_defaults(fn=_cmd_subset)

    q = sub.add_parser("simulate", help="simulate and dump an ensemble")
    q.add_argument("--config", required=True)
    q.add_argument("--family", help="family name in the config (default: the only one)")
    q.add_argument("--N", type=int, default=100)
    q.add_argument("--seed", type=int)
    q.add_argument("--init", help="JSON initial law, e.g. 0.5 or {\"points\":[0,1],\"weights\":[0.5,0.5]}")
    q.add_argument("--out", default="locfell-out")
    q.set_defaults(fn=_cmd_simulate)

    q = sub.add_parser("distance", help="Skorokhod distances between two path CSV files")
    q.add_argument("--a", required=True)
    q.add_argument("--b", required=True)
    q.add_argument("--horizon", type=float, help="also compute the global distance on [0, T)")
    q.add_argument("--space", help="JSON state space block")
    q.add_argument("--out")
    q.set_defaults(fn=_cmd_distance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
