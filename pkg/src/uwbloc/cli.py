"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation
failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Sequence, TextIO

from . import anchors as anchor_store
from .anchors import AnchorTable, apply_command, format_line
from .config import ScenarioConfig, load_config, parse_point
from .ekf import RangeLocalizer
from .errors import ConfigurationError, DomainError, RankDeficiencyError, UwbError
from .evaluation import GridSpec, ellipses_for, emit_reports, run_grid
from .geometry import format_anchor_id
from .scheduler import run_session

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _writer(out: TextIO):
    return csv.writer(out, lineterminator="\n")


def cmd_range(config: ScenarioConfig, out: TextIO) -> int:
    """One CSV row per (round, anchor) range measurement."""
    _, schedule, scenario = config.resolve()
    w = _writer(out)
    w.writerow(["round", "sim_time_ps", "anchor", "distance_m", "valid"])
    for result in run_session(schedule, scenario, config.rounds):
        for m in result.measurements:
            w.writerow([result.round_index, m.sim_time, format_anchor_id(m.anchor), _fmt(m.distance), int(m.valid)])
    return EXIT_OK


def cmd_localize(config: ScenarioConfig, out: TextIO) -> int:
    """One CSV row per round with the filter estimate.

    Rounds before the filter has been seeded have empty estimate columns.
    """
    table, schedule, scenario = config.resolve(need_fix=True)
    localizer = RangeLocalizer(dict(table.entries), config.ekf_params(), batch=config.batch, gate=config.gate)
    w = _writer(out)
    w.writerow(
        ["round", "sim_time_ps", "x", "y", "z", "var_x", "var_y", "var_z", "accepted", "rejected", "max_abs_innovation_m"]
    )
    for result in run_session(schedule, scenario, config.rounds):
        fix = localizer.process_round(result.round_index, result.measurements, result.t_round_end)
        if fix is None:
            w.writerow([result.round_index, result.t_round_end] + [""] * 6 + [0, len(result.measurements), ""])
            continue
        innovations = [abs(r.innovation) for r in fix.report if r.accepted]
        var = fix.covariance.diagonal()[:3]
        w.writerow(
            [
                result.round_index,
                fix.sim_time,
                *(_fmt(v) for v in fix.position),
                *(_fmt(float(v)) for v in var),
                fix.accepted,
                fix.rejected,
                _fmt(max(innovations)) if innovations else "",
            ]
        )
    return EXIT_OK


def cmd_grid(config: ScenarioConfig, out_dir: Path, out: TextIO, workers: int = 1) -> int:
    """Run the grid sweep and write cells.csv, fixes.csv and ellipses.csv."""
    table, _, _ = config.resolve(need_fix=True)
    stats = run_grid(config.grid, config.cell_setup(table), workers=workers)
    ellipses = ellipses_for(stats)
    try:
        emit_reports(stats, ellipses, out_dir)
    except OSError as exc:
        raise CliError(f"I/O error: {exc}", EXIT_RUNTIME) from None
    w = _writer(out)
    w.writerow(["x", "y", "mu_cm", "sigma_cm", "n"])
    for c in stats:
        w.writerow([_fmt(c.true_pos.x), _fmt(c.true_pos.y), f"{c.mean_error:.2f}", f"{c.error_std:.2f}", c.n])
    return EXIT_OK


def cmd_config(anchor_file: Path, commands: Sequence[str], out: TextIO) -> int:
    """Apply text commands to an anchor file and persist the result.

    A missing file starts as an empty table, so anchors can be provisioned
    from scratch. The file is only rewritten when a command changed it.
    """
    try:
        table = anchor_store.load(anchor_file)
    except FileNotFoundError:
        table = AnchorTable()
    original = table
    failed = False
    for line in commands:
        if not line.strip():
            continue
        table, reply = apply_command(table, line)
        failed |= reply.startswith("ERR")
        if line.split()[0].upper() == "LIST" and reply.startswith("OK") and len(table):
            for anchor_id, pos in table.items():
                out.write(format_line(anchor_id, pos) + "\n")
        else:
            out.write(reply + "\n")
    if table != original:
        try:
            anchor_store.store(table, anchor_file)
        except OSError as exc:
            raise CliError(f"I/O error: cannot write {anchor_file}: {exc}", EXIT_RUNTIME) from None
    return EXIT_RUNTIME if failed else EXIT_OK


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="scenario INI file")
    parser.add_argument("--anchors", type=Path, help="anchor file (overrides the config)")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--rounds", type=int, help="number of ranging rounds")
    parser.add_argument("--slot-ms", type=float, help="ranging slot length in ms")
    parser.add_argument("--tag", help="true tag position as x,y,z (m)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwbloc", description="Simulated UWB ranging and localization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("range", help="print simulated range measurements as CSV")
    _common(p)
    p = sub.add_parser("localize", help="print per-round filter estimates as CSV")
    _common(p)
    p = sub.add_parser("grid-eval", help="run the static grid evaluation")
    _common(p)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--step", type=float, help="grid step in m (both axes)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")

    p = sub.add_parser("config", help="view or edit an anchor file")
    p.add_argument("--config", type=Path, help="scenario INI file naming the anchor file")
    p.add_argument("--anchors", type=Path, help="anchor file")
    p.add_argument("words", nargs="*", help="one command, e.g. SET 0x06 2.77 0.07 0.91; read from stdin if omitted")
    return parser


def _scenario_config(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {
        "anchor_file": args.anchors,
        "seed": getattr(args, "seed", None),
        "rounds": getattr(args, "rounds", None),
        "slot_ms": getattr(args, "slot_ms", None),
    }
    if getattr(args, "tag", None):
        overrides["tag"] = parse_point(args.tag)
    config = config.with_overrides(**overrides)
    if config.rounds < 1:
        raise ConfigurationError("--rounds must be at least 1")
    if not 0 <= config.seed < 2**64:
        raise ConfigurationError("--seed must be a 64-bit unsigned integer")
    step = getattr(args, "step", None)
    if step is not None:
        g = config.grid
        config = config.with_overrides(
            grid=GridSpec(g.x_min, g.x_max, step, g.y_min, g.y_max, step, g.z_tag, g.rounds_per_cell)
        )
    if args.command == "grid-eval" and getattr(args, "rounds", None) is not None:
        g = config.grid
        config = config.with_overrides(
            grid=GridSpec(g.x_min, g.x_max, g.x_step, g.y_min, g.y_max, g.y_step, g.z_tag, args.rounds)
        )
    return config


def run(argv: Sequence[str] | None = None, stdout: TextIO | None = None, stdin: TextIO | None = None) -> int:
    out = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config":
            anchor_file = args.anchors
            if anchor_file is None and args.config:
                anchor_file = load_config(args.config).anchor_file
            if anchor_file is None:
                raise ConfigurationError("no anchor file given (use --anchors)")
            commands = [" ".join(args.words)] if args.words else list(stdin or sys.stdin)
            return cmd_config(anchor_file, commands, out)

        config = _scenario_config(args)
        if args.command == "range":
            return cmd_range(config, out)
        if args.command == "localize":
            return cmd_localize(config, out)
        return cmd_grid(config, args.out, out, workers=max(1, args.jobs))
    except CliError as exc:
        print(f"uwbloc: {exc}", file=sys.stderr)
        return exc.code
    except RankDeficiencyError as exc:
        print(f"uwbloc: geometry error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, DomainError) as exc:
        print(f"uwbloc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UwbError, OSError) as exc:
        print(f"uwbloc: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
