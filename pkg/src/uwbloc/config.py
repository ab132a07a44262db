"""Scenario configuration files.

A scenario is one INI file; every section and key is optional::

    [scenario]
    anchor_file = room_anchors.txt   ; relative to this file
    anchor_order = 0x02 0x03 0x04 0x05 0x06
    slot_ms = 50
    reply_time_ms = 1
    seed = 0
    rounds = 500
    tag = 4, 5, 1

    [channel]
    noise_sigma = 0.05
    loss_prob = 0.01
    nlos_bias = 0.4
    nlos_anchors = 0x04 0x05
    outlier_prob = 0
    outlier_extra = 0
    asymmetric = false

    [clock]
    tag_drift_ppm = 0
    anchor_drift_ppm = 0
    coarse = false

    [ekf]
    q_accel = 0.5
    r_range = 0.05
    p0_pos = 1
    p0_vel = 0.5
    dt = 0.05          ; defaults to the slot length
    mode = sequential  ; or batch
    gate = 5

    [grid]
    x_min = 2
    x_max = 6
    x_step = 1
    y_min = 2
    y_max = 8
    y_step = 1
    z_tag = 1.0
    rounds_per_cell = 500
    error = 2d         ; or 3d
    mu = mean-of-norms ; or norm-of-mean
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import anchors as anchor_store
from .anchors import AnchorTable
from .channel import ChannelProfile
from .ekf import EkfParams, check_geometry
from .errors import ConfigurationError
from .evaluation import MEAN_OF_NORMS, NORM_OF_MEAN, CellSetup, GridSpec
from .geometry import PS_PER_SECOND, AnchorId, Point3, format_anchor_id, parse_anchor_id
from .scheduler import PS_PER_MS, Scenario, Schedule, validate
from .twr import COARSE_QUANTUM_PS, DeviceClock


def parse_point(text: str) -> Point3:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ConfigurationError(f"expected 'x,y,z', got {text!r}")
    try:
        return Point3(*(float(p) for p in parts))
    except ValueError as exc:
        raise ConfigurationError(f"bad point {text!r}: {exc}") from None


def parse_id_list(text: str) -> tuple[AnchorId, ...]:
    try:
        return tuple(parse_anchor_id(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigurationError(f"bad anchor list {text!r}: {exc}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    anchor_file: Path | None = None
    anchor_order: tuple[AnchorId, ...] | None = None
    slot_ms: float = 50.0
    reply_time_ms: float = 1.0
    seed: int = 0
    rounds: int = 500
    tag: Point3 = Point3(4.0, 5.0, 1.0)
    channel: ChannelProfile = field(default_factory=ChannelProfile.default_los)
    nlos_anchors: tuple[AnchorId, ...] = ()
    tag_drift_ppm: float = 0.0
    anchor_drift_ppm: float = 0.0
    coarse_clock: bool = False
    ekf: EkfParams | None = None  # None: dt follows the slot length
    batch: bool = False
    gate: float = 5.0
    grid: GridSpec = field(default_factory=GridSpec)
    error_dims: int = 2
    mu_mode: str = MEAN_OF_NORMS

    def with_overrides(self, **changes) -> ScenarioConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    # -- derived objects -------------------------------------------------

    def load_anchors(self) -> AnchorTable:
        if self.anchor_file is None:
            raise ConfigurationError("no anchor file configured (use --anchors)")
        return anchor_store.load(self.anchor_file)

    def schedule(self, table: AnchorTable) -> Schedule:
        order = self.anchor_order if self.anchor_order else tuple(table.ids())
        return Schedule(order, self.slot_ms)

    def ekf_params(self) -> EkfParams:
        if self.ekf is not None:
            return self.ekf
        return EkfParams(dt=self.slot_ms * PS_PER_MS / PS_PER_SECOND)

    def channels(self) -> dict[int, ChannelProfile]:
        return {a: self.channel.with_nlos(self.channel.nlos_bias) for a in self.nlos_anchors}

    def _clock(self, drift_ppm: float) -> DeviceClock:
        quantum = COARSE_QUANTUM_PS if self.coarse_clock else 1.0
        return DeviceClock(drift_ppm=drift_ppm, quantum_ps=quantum)

    def scenario(self, table: AnchorTable, tag: Point3 | None = None) -> Scenario:
        anchor_clock = self._clock(self.anchor_drift_ppm)
        return Scenario(
            anchors=dict(table.entries),
            tag=tag or self.tag,
            channels=self.channels(),
            default_channel=self.channel,
            tag_clock=self._clock(self.tag_drift_ppm),
            anchor_clocks={a: anchor_clock for a in table.ids()},
            reply_time_ps=int(round(self.reply_time_ms * PS_PER_MS)),
            seed=self.seed,
        )

    def cell_setup(self, table: AnchorTable) -> CellSetup:
        scenario = self.scenario(table)
        return CellSetup(
            anchors=scenario.anchors,
            schedule=self.schedule(table),
            channel=self.channel,
            channels=scenario.channels,
            ekf=self.ekf_params(),
            seed=self.seed,
            tag_clock=scenario.tag_clock,
            anchor_clocks=scenario.anchor_clocks,
            reply_time_ps=scenario.reply_time_ps,
            batch=self.batch,
            gate=self.gate,
            error_dims=self.error_dims,
            mu_mode=self.mu_mode,
        )

    def resolve(self, *, need_fix: bool = False) -> tuple[AnchorTable, Schedule, Scenario]:
        """Load anchors and validate everything; raises before any simulation runs."""
        table = self.load_anchors()
        if not len(table):
            raise ConfigurationError("anchor table is empty")
        schedule = self.schedule(table)
        scenario = self.scenario(table)
        validate(schedule, scenario)
        unknown = [a for a in self.nlos_anchors if a not in table]
        if unknown:
            raise ConfigurationError(
                "nlos_anchors references unknown anchor(s): " + ", ".join(map(format_anchor_id, unknown))
            )
        if need_fix:
            check_geometry([table[a] for a in schedule.anchors])
        return table, schedule, scenario


def _get(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigurationError(f"[{section.name}] {key}: {exc}") from None


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None

    sec = {name: parser[name] if parser.has_section(name) else None for name in ("scenario", "channel", "clock", "ekf", "grid")}
    base = ScenarioConfig()

    anchor_file = _get(sec["scenario"], "anchor_file", str, None)
    if anchor_file is not None:
        anchor_file = (path.parent / anchor_file) if not Path(anchor_file).is_absolute() else Path(anchor_file)

    ch = sec["channel"]
    try:
        channel = ChannelProfile(
            noise_sigma=_get(ch, "noise_sigma", _finite, base.channel.noise_sigma),
            nlos_bias=_get(ch, "nlos_bias", _finite, 0.0),
            outlier_prob=_get(ch, "outlier_prob", _finite, 0.0),
            outlier_extra=_get(ch, "outlier_extra", _finite, 0.0),
            loss_prob=_get(ch, "loss_prob", _finite, base.channel.loss_prob),
            asymmetric=_get(ch, "asymmetric", _bool, False),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"[channel] {exc}") from None

    ek = sec["ekf"]
    ekf = None
    if ek is not None and any(k in ek for k in ("q_accel", "r_range", "p0_pos", "p0_vel", "dt")):
        defaults = EkfParams()
        slot_ms = _get(sec["scenario"], "slot_ms", _finite, base.slot_ms)
        try:
            ekf = EkfParams(
                q_accel=_get(ek, "q_accel", _finite, defaults.q_accel),
                r_range=_get(ek, "r_range", _finite, defaults.r_range),
                p0_pos=_get(ek, "p0_pos", _finite, defaults.p0_pos),
                p0_vel=_get(ek, "p0_vel", _finite, defaults.p0_vel),
                dt=_get(ek, "dt", _finite, slot_ms / 1000.0),
            )
        except ValueError as exc:
            raise ConfigurationError(f"[ekf] {exc}") from None
    mode = _get(ek, "mode", str, "sequential")
    if mode not in ("sequential", "batch"):
        raise ConfigurationError(f"[ekf] mode must be 'sequential' or 'batch', got {mode!r}")

    gr = sec["grid"]
    grid = GridSpec(
        x_min=_get(gr, "x_min", _finite, base.grid.x_min),
        x_max=_get(gr, "x_max", _finite, base.grid.x_max),
        x_step=_get(gr, "x_step", _finite, base.grid.x_step),
        y_min=_get(gr, "y_min", _finite, base.grid.y_min),
        y_max=_get(gr, "y_max", _finite, base.grid.y_max),
        y_step=_get(gr, "y_step", _finite, base.grid.y_step),
        z_tag=_get(gr, "z_tag", _finite, base.grid.z_tag),
        rounds_per_cell=_get(gr, "rounds_per_cell", int, base.grid.rounds_per_cell),
    )
    error = _get(gr, "error", str.lower, "2d")
    if error not in ("2d", "3d"):
        raise ConfigurationError(f"[grid] error must be '2d' or '3d', got {error!r}")
    mu_mode = _get(gr, "mu", str.lower, MEAN_OF_NORMS)
    if mu_mode not in (MEAN_OF_NORMS, NORM_OF_MEAN):
        raise ConfigurationError(f"[grid] mu must be {MEAN_OF_NORMS!r} or {NORM_OF_MEAN!r}")

    seed = _get(sec["scenario"], "seed", int, base.seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError("[scenario] seed must be a 64-bit unsigned integer")

    return ScenarioConfig(
        anchor_file=anchor_file,
        anchor_order=_get(sec["scenario"], "anchor_order", parse_id_list, None),
        slot_ms=_get(sec["scenario"], "slot_ms", _finite, base.slot_ms),
        reply_time_ms=_get(sec["scenario"], "reply_time_ms", _finite, base.reply_time_ms),
        seed=seed,
        rounds=_get(sec["scenario"], "rounds", int, base.rounds),
        tag=_get(sec["scenario"], "tag", parse_point, base.tag),
        channel=channel,
        nlos_anchors=_get(ch, "nlos_anchors", parse_id_list, ()),
        tag_drift_ppm=_get(sec["clock"], "tag_drift_ppm", _finite, 0.0),
        anchor_drift_ppm=_get(sec["clock"], "anchor_drift_ppm", _finite, 0.0),
        coarse_clock=_get(sec["clock"], "coarse", _bool, False),
        ekf=ekf,
        batch=mode == "batch",
        gate=_get(ek, "gate", _finite, base.gate),
        grid=grid,
        error_dims=2 if error == "2d" else 3,
        mu_mode=mu_mode,
    )
