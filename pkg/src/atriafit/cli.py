"""Command-line entry point.

Every subcommand accepts the common flags; stage subcommands run exactly
one stage (``hm`` also pins C first), ``run`` executes a list of stages in
pipeline order.  Exit status: 0 success, 2 configuration error, 3 stage
failure, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np
import tomli

from .errors import AtriaFitError, ConfigError
from .pipeline.config import SeedConfig, dump_config, load_config, paper_scale
from .pipeline.stages import STAGES, Pipeline, classify_failure, verify_synthetic

log = logging.getLogger("atriafit")

STAGE_COMMANDS = {
    "mesh": ["mesh"],
    "design": ["design"],
    "simulate": ["simulate"],
    "train": ["train"],
    "gsa": ["gsa"],
    "fix-C": ["fix-C"],
    "hm": ["fix-C", "hm"],
    "mcmc": ["mcmc"],
    "report": ["report"],
}


def derive_seeds(seed: int) -> SeedConfig:
    """Independent per-stage seeds from one master seed."""
    design, train, gsa, hm, mcmc = (int(v) for v in np.random.SeedSequence(seed).generate_state(5))
    return SeedConfig(design=design, train=train, gsa=gsa, hm=hm, mcmc=mcmc)


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", metavar="PATH", help="TOML configuration file", **d)
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)", **d)
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed; derives every stage seed", **d)
    parser.add_argument("--stages", metavar="LIST", help="comma-separated stages for 'run'", **d)
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", dest="overrides",
                        help="dotted config override, e.g. mesh.refinement=1 (repeatable)", **d)
    parser.add_argument("--paper-scale", action="store_true",
                        help="n_test=100000, steps=100000, burn-in=10000", **d)
    parser.add_argument("--allow-out-of-range", action="store_true",
                        help="accept parameter ranges outside the defaults", **d)
    parser.add_argument("--force", action="store_true", help="overwrite artifacts from another config", **d)
    parser.add_argument("--print-effective-config", action="store_true",
                        help="print the resolved configuration as TOML", **d)
    parser.add_argument("-v", "--verbose", action="count", help="more logging", **d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atriafit", description="Regional atrial stiffness calibration pipeline")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "mesh": "build the hemispherical mesh",
        "design": "wave-1 design over the 14-input space",
        "simulate": "run the forward model on the design (resumable)",
        "train": "fit emulators and cross-validate",
        "gsa": "Sobol indices and parameter ranking",
        "fix-C": "pin C and write the 9-input space",
        "hm": "pin C, then history matching in the 9-input space",
        "mcmc": "ensemble MCMC on the final NROY region",
        "report": "collect results into report.json",
        "run": "run --stages (default: all) in pipeline order",
        "verify": "synthetic-truth recovery at baseline and high noise",
        "stats": "mixed model and paired tests on a cohort table",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p, suppress=True)
        if name == "stats":
            p.add_argument("--cohort", metavar="CSV", required=True, help="cohort table")
    return parser


def resolve_config(args):
    overrides = {}
    for item in args.overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = _parse_value(v.strip())
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.allow_out_of_range:
        overrides["allow_out_of_range"] = True
    cfg = load_config(args.config, overrides)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = replace(cfg, seeds=derive_seeds(args.seed))
    if args.paper_scale:
        cfg = paper_scale(cfg)
    return cfg


def _stage_list(text) -> list[str]:
    if not text:
        return list(STAGES)
    stages = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s) {unknown}; choose from {', '.join(STAGES)}")
    return stages


def run_pipeline(cfg, stages, force: bool = False) -> int:
    """Run stages in pipeline order; returns the exit status."""
    try:
        Pipeline(cfg, force).run(stages)
    except AtriaFitError as exc:
        log.error("%s", exc)
        return classify_failure(exc)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_effective_config:
            sys.stdout.write(dump_config(cfg))
            if args.command is None:
                return 0
        if args.command is None:
            parser.print_help()
            return 2
        if args.command == "verify":
            report = verify_synthetic(cfg, args.force)
            print(f"verification written to {cfg.out_dir}/verification.csv; "
                  f"mean CI width baseline {report['mean_ci_width']['baseline']:.4g}, "
                  f"high {report['mean_ci_width']['high']:.4g}")
            return 0
        if args.command == "stats":
            Pipeline(cfg, args.force).stats(args.cohort)
            print(f"statistics written to {cfg.out_dir}/stats_report.json")
            return 0
        stages = _stage_list(args.stages) if args.command == "run" else STAGE_COMMANDS[args.command]
        Pipeline(cfg, args.force).run(stages)
        return 0
    except (AtriaFitError, ValueError) as exc:
        log.error("%s", exc)
        if isinstance(exc, AtriaFitError):
            return classify_failure(exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
