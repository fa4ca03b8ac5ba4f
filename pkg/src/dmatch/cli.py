"""``match`` command line: stereo, flow and bench subcommands.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError, ConvergenceError, DimensionError, ImageFormatError
from .minorants import MINORANT_KINDS
from .pipeline import BENCH_MINORANTS, RunConfig, run_bench, run_flow, run_stereo

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

_EXCLUDED = ("unary",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    g = p.add_argument_group("energy")
    g.add_argument("--eps", type=float, default=0.25, help="slope near zero")
    g.add_argument("--delta", type=float, default=2.0, help="end of the shallow segment")
    g.add_argument("--trunc", type=float, default=4.0, help="truncation C")
    g.add_argument("--reg-weight", type=float, default=4.0,
                   help="scale applied to the image edge weights")
    g.add_argument("--edge-a", type=float, default=5.0)
    g.add_argument("--edge-b", type=float, default=1.0)
    g.add_argument("--w-min", type=float, default=0.05)
    g.add_argument("--window", type=int, default=5, help="census window (odd)")
    g = p.add_argument_group("solver")
    kinds = [k for k in MINORANT_KINDS if k not in _EXCLUDED]
    g.add_argument("--method", choices=("dmm", "trws", "pmm"), default="dmm")
    g.add_argument("--minorant", choices=kinds, default="hierarchical")
    g.add_argument("--dmm-iters", type=int, default=4)
    g.add_argument("--warps", type=int, default=5)
    g.add_argument("--pd-iters", type=int, default=40)
    g.add_argument("--h", type=float, default=0.5, help="trust radius")
    g = p.add_argument_group("output")
    g.add_argument("--out", required=True)
    g.add_argument("--color", help="colorized preview (.png or .ppm)")
    g.add_argument("--log", help="convergence CSV")
    g.add_argument("--no-plot", dest="plot", action="store_false",
                   help="skip matplotlib figures")
    g.add_argument("--timing", action="store_true",
                   help="record wall-clock millis (output is then not reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="match", description="Discrete-continuous dense matching.")
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    s = sub.add_parser("stereo", help="disparity from a rectified pair")
    s.add_argument("--left", required=True)
    s.add_argument("--right", required=True)
    s.add_argument("--dmin", type=int, default=0)
    s.add_argument("--dmax", type=int, default=63)
    s.add_argument("--lr-check", action="store_true")
    s.add_argument("--lr-threshold", type=float, default=1.0)
    _common(s)

    f = sub.add_parser("flow", help="optical flow between two frames")
    f.add_argument("--first", dest="left", required=True)
    f.add_argument("--second", dest="right", required=True)
    for name in ("umin", "vmin"):
        f.add_argument(f"--{name}", type=int, default=-4)
    for name in ("umax", "vmax"):
        f.add_argument(f"--{name}", type=int, default=4)
    _common(f)

    b = sub.add_parser("bench", help="bound and energy traces on a small crop")
    b.add_argument("--left")
    b.add_argument("--right")
    b.add_argument("--crop", type=int, nargs=2, metavar=("X", "Y"))
    b.add_argument("--size", type=int, default=40)
    b.add_argument("--labels", type=int, default=16)
    b.add_argument("--seed", type=int, default=3)
    b.add_argument("--iters", dest="bench_iters", type=int, default=20)
    b.add_argument("--minorants", nargs="+", choices=MINORANT_KINDS,
                   default=list(BENCH_MINORANTS))
    _common(b)
    b.set_defaults(eps=1.0, delta=0.0)
    return parser


def _config(ns) -> RunConfig:
    d = dict(vars(ns))
    d.pop("verbose", None)
    for key in ("minorants", "crop"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return RunConfig(**d)


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(ns)
        run = {"stereo": run_stereo, "flow": run_flow, "bench": run_bench}[cfg.mode]
        return run(cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, ValueError) as exc:
        if isinstance(exc, (ImageFormatError, DimensionError)):
            print(f"match: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"match: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"match: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"match: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
