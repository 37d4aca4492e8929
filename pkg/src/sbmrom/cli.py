"""Command line entry point: ``sbmrom {offline,online,report,convergence} --config run.json``."""
from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import RunConfig, convergence, load_artifacts, offline, online, report


def _modes(text: str) -> tuple[int, ...]:
    try:
        modes = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"mode list must be comma separated integers, got {text!r}")
    if not modes:
        raise argparse.ArgumentTypeError("mode list is empty")
    return modes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbmrom",
        description="Shifted boundary finite elements with a POD-Galerkin reduced model.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "offline": "sample training parameters, solve, build the POD basis",
        "online": "evaluate the reduced model on the test parameters",
        "report": "write errors.csv, eigdecay.csv, timing.csv and VTK fields",
        "convergence": "manufactured-solution convergence study",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
        p.add_argument("--modes", type=_modes, default=None, help="override mode counts, e.g. 2,5,10")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.from_json(args.config).override(seed=args.seed, modes=args.modes, out=args.out)
    except (OSError, ValueError) as exc:
        print(f"sbmrom: invalid configuration: {exc}", file=sys.stderr)
        return 2

    if args.command == "offline":
        art = offline(config)
        print(f"{art.train_mu.size} snapshots, basis rank {art.basis.n_modes} -> {config.out_dir}")
    elif args.command == "online":
        result = online(config)
        print(f"{'modes':>6} {'proj_err':>12} {'rom_err':>12} {'speedup':>9}  status")
        for r in result.rows:
            print(f"{r.modes:>6d} {r.projection_error:>12.4e} {r.rom_error:>12.4e} {r.speedup:>9.2f}  {r.status}")
    elif args.command == "report":
        for path in report(config, load_artifacts(config)):
            print(path)
    else:
        rows = convergence(config)
        print(f"{'h':>8} {'dofs':>7} {'L2 error':>12} {'rate':>6}")
        for r in rows:
            print(f"{r.h:>8.4f} {r.n_dofs:>7d} {r.error:>12.4e} {r.rate:>6.2f}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
