"""Command-line interface.

Exit codes: 0 success, 1 invalid input (config, trace, arguments),
2 simulation fault or a protocol that could not measure anything.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import compute_metrics
from .config import ConfigError, load_config
from .control import JOINTS
from .experiments import (
    ExperimentError,
    metrics_for,
    run_drop_test,
    run_natural_frequency,
    run_spring_calibration,
    run_sweep,
)
from .io import TraceFormatError, read_trace, write_text_atomic, write_trace
from .sea import SimulationFault, SpringMode

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _spring_mode(text: str) -> tuple[str, SpringMode]:
    joint, sep, mode = text.partition("=")
    if not sep or joint not in JOINTS or mode not in ("active", "locked"):
        raise argparse.ArgumentTypeError(
            f"expected joint=active|locked with joint in {', '.join(JOINTS)}, got {text!r}")
    return joint, SpringMode(mode)


def _window(text: str) -> tuple[float, float]:
    a, sep, b = text.partition(":")
    try:
        t0, t1 = float(a), float(b)
    except ValueError:
        t0 = t1 = None
    if not sep or t0 is None or t1 < t0:
        raise argparse.ArgumentTypeError(f"expected T0:T1 with T0 <= T1, got {text!r}")
    return t0, t1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sealeg", description="Series-elastic single-leg drop-test simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log applied defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--version", action="version", version=f"sealeg {__version__}")
        return p

    p = add("calibrate-spring", "Quasi-static spring calibration; writes the load/deflection table.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = add("natural-freq", "Flick one joint and report its dominant frequency.")
    p.add_argument("--config", required=True)
    p.add_argument("--joint", required=True, choices=JOINTS)
    p.add_argument("--out", required=True)

    p = add("drop-test", "Drop the leg and write the trace.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spring-mode", action="append", type=_spring_mode, default=[],
                   metavar="JOINT=MODE", help="override a joint's spring (active or locked)")

    p = add("sweep", "Run every cell of the configured grid.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = add("metrics", "Compute landing/hopping metrics from a trace file.")
    p.add_argument("--trace", required=True)
    p.add_argument("--window", type=_window, metavar="T0:T1")
    p.add_argument("--csv", action="store_true", help="print a CSV header and row")
    return parser


def _calibrate(args) -> int:
    cfg = load_config(args.config)
    rec = run_spring_calibration(cfg)
    rows = ["step,load_nm,deflection_deg,loading"]
    for i, (t, d, up) in enumerate(zip(rec.load_steps, rec.deflections, rec.loading)):
        rows.append(f"{i},{t!r},{d!r},{int(up)}")
    write_text_atomic(args.out, "\n".join(rows) + "\n")
    print(f"fitted_k_loading_nm_per_deg = {rec.fitted_k_loading!r}")
    print(f"fitted_k_unloading_nm_per_deg = {rec.fitted_k_unloading!r}")
    print(f"loop_area_nm_deg = {rec.loop_area!r}")
    print(f"r_squared = {rec.r_squared!r}")
    return EXIT_OK


def _natural_freq(args) -> int:
    cfg = load_config(args.config)
    trace, freq = run_natural_frequency(cfg, args.joint)
    if trace is not None:
        write_trace(trace, args.out)
    else:
        write_text_atomic(args.out, f"joint,frequency_hz\n{args.joint},{freq!r}\n")
    print(f"{args.joint}.frequency_hz = {freq!r}")
    return EXIT_OK


def _drop(args) -> int:
    cfg = load_config(args.config)
    res = run_drop_test(cfg, dict(args.spring_mode))
    write_trace(res.trace, args.out)
    sys.stdout.write(metrics_for(res.trace, cfg).to_text())
    return EXIT_OK


def _sweep(args) -> int:
    cfg = load_config(args.config)
    cells = run_sweep(cfg, args.out)
    failed = sum(c.error is not None for c in cells)
    print(f"{len(cells)} cells, {failed} failed; summary in {Path(args.out) / 'summary.csv'}")
    return EXIT_OK


def _metrics(args) -> int:
    trace = read_trace(args.trace)
    rep = compute_metrics(trace, args.window)
    if args.csv:
        print(rep.csv_header())
        print(rep.csv_row())
    else:
        sys.stdout.write(rep.to_text())
    return EXIT_OK


_COMMANDS = {"calibrate-spring": _calibrate, "natural-freq": _natural_freq, "drop-test": _drop,
             "sweep": _sweep, "metrics": _metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, TraceFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationFault, ExperimentError) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
