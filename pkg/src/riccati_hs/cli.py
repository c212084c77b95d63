"""Command-line entry point ``riccati-hs``."""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction

from . import __version__
from .cli_io import (
    COMMANDS,
    EXIT_CONFIG,
    MODE_NAMES,
    ConfigError,
    bundled_configs,
    load_config,
    parse_config,
    run,
    serialize_config,
    with_overrides,
)

logger = logging.getLogger("riccati_hs")


def _taus(text):
    try:
        vals = [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid tau list {text!r}: {exc}") from exc
    if not vals or any(v <= 0.0 for v in vals):
        raise argparse.ArgumentTypeError("taus must be a non-empty list of positive numbers")
    return vals


def _seed(text):
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riccati-hs",
        description="Backward Euler solver and verification suite for operator Riccati equations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", metavar="PATH", action="append",
                        help="run configuration (repeatable for verify; default for verify: bundled configs)")
    parser.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir)")
    parser.add_argument("--seed", type=_seed, help="override the problem seed")
    parser.add_argument("--mode", choices=tuple(MODE_NAMES), help="ARE solver mode")
    parser.add_argument("--taus", type=_taus, help="comma-separated step sizes for converge, e.g. 1/8,1/16,1/32")
    parser.add_argument("--dump-every", type=int, metavar="K", help="write every K-th iterate as CSV")
    parser.add_argument("--strict", action="store_true", help="promote warnings to errors")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    paths = args.config
    if not paths:
        if args.command != "verify":
            print("error: --config is required for this command", file=sys.stderr)
            return EXIT_CONFIG
        paths = [str(p) for p in bundled_configs()]
    cfgs = []
    errors = []
    for path in paths:
        try:
            cfg = load_config(path)
        except ConfigError as exc:
            errors.extend(f"{path}: {e}" for e in exc.errors)
            continue
        cfg = with_overrides(cfg, seed=args.seed, mode=args.mode, taus=args.taus,
                             dump_every=args.dump_every)
        if args.seed is not None or args.taus is not None:
            # overrides can change the problem or the grid; validate again
            try:
                parse_config(serialize_config(cfg))
            except ConfigError as exc:
                errors.extend(f"{path} (with overrides): {e}" for e in exc.errors)
                continue
        cfgs.append((path, cfg))
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or cfgs[0][1].out_dir
    code = run(args.command, cfgs, out_dir, strict=args.strict)
    logger.info("%s finished with exit code %d", args.command, code)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
