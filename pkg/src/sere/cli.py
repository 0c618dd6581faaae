"""Command-line entry point: ``sere <subcommand> --config path [...]``."""
from __future__ import annotations

import argparse
import dataclasses
import io
import logging
import os
import sys

from .config import AVERAGING_KINDS, DIFFUSION_KINDS, load_config
from .errors import ConfigError, SereError
from .harness import emit_report, run_ensemble, simulate_trajectory

log = logging.getLogger("sere")

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
LOG_LEVELS = {"off": logging.CRITICAL + 10, "info": logging.INFO, "debug": logging.DEBUG}

# subcommand -> allowed config kinds
SUBCOMMAND_KINDS = {
    "verify-lln": ("lln",),
    "verify-averaging": AVERAGING_KINDS,
    "verify-diffusion": DIFFUSION_KINDS,
    "ruin": ("ruin",),
}


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sere", description="Self-exciting random evolution experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("simulate", *SUBCOMMAND_KINDS):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat TOML experiment file")
        p.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="output file (default: config output_path)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=_positive, default=1)
    return parser


def _setup_logging():
    level = os.environ.get("SERE_LOG", "off").lower()
    if level not in LOG_LEVELS:
        level = "off"
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _write_trajectory(traj, fmt: str, path):
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("time,value,state\n")
        states = traj.states
        for i, (t, v) in enumerate(zip(traj.times, traj.values)):
            s = "" if states is None else str(int(states[i]))
            buf.write(f"{float(t)!r},{float(v)!r},{s}\n")
        text = buf.getvalue()
    else:
        import json

        rows = [
            {"time": float(t), "value": float(v), "state": None if traj.states is None else int(traj.states[i])}
            for i, (t, v) in enumerate(zip(traj.times, traj.values))
        ]
        text = json.dumps(rows, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        out = args.out or cfg.output_path
        if args.command == "simulate":
            traj = simulate_trajectory(cfg, cfg.seed)
            _write_trajectory(traj, args.format, out)
            return EXIT_PASS
        allowed = SUBCOMMAND_KINDS[args.command]
        if cfg.kind not in allowed:
            raise ConfigError(f"{args.command} needs kind in {allowed}, config has {cfg.kind!r}")
        report = run_ensemble(cfg, jobs=args.jobs)
        emit_report(report, args.format, out)
    except (SereError, OSError) as exc:
        print(f"sere: error: {args.config}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for name, ok in report.criteria.items():
        log.info("%s: %s", name, "pass" if ok else "fail")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
