"""Round-robin ranging on a virtual clock.

The tag polls each anchor of an ordered list in its own fixed slot. Slot
``k`` of a round starting at ``t0`` opens at ``t0 + k * slot``; a round of
``n`` anchors therefore lasts exactly ``n * slot``. Time is integer
picoseconds, so these identities hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .channel import ChannelProfile
from .errors import ConfigurationError
from .geometry import PS_PER_SECOND, AnchorId, Point3, format_anchor_id, rng_stream
from .twr import DEFAULT_REPLY_TIME_PS, DeviceClock, RangeMeasurement, measure, run_exchange

PS_PER_MS = 10**9
MAX_REPLY_TIME_PS = 10 * PS_PER_MS


@dataclass(frozen=True)
class Schedule:
    anchors: tuple[AnchorId, ...]
    slot_duration_ms: float = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchors", tuple(AnchorId(int(a)) for a in self.anchors))
        if not self.anchors:
            raise ConfigurationError("schedule needs at least one anchor")
        if len(set(self.anchors)) != len(self.anchors):
            raise ConfigurationError("schedule lists an anchor more than once")
        if not self.slot_duration_ms > 0:
            raise ConfigurationError("slot duration must be positive")
        if self.slot_ps != self.slot_duration_ms * PS_PER_MS:
            raise ConfigurationError("slot duration must be a whole number of picoseconds")

    @property
    def slot_ps(self) -> int:
        return int(round(self.slot_duration_ms * PS_PER_MS))

    @property
    def round_trip_ps(self) -> int:
        return self.slot_ps * len(self.anchors)

    @property
    def round_trip_ms(self) -> float:
        return self.round_trip_ps / PS_PER_MS

    @property
    def slot_seconds(self) -> float:
        return self.slot_ps / PS_PER_SECOND

    def poll_offsets_ps(self) -> list[int]:
        return [k * self.slot_ps for k in range(len(self.anchors))]


@dataclass(frozen=True)
class RoundResult:
    round_index: int
    measurements: tuple[RangeMeasurement, ...]
    t_round_start: int
    t_round_end: int
    poll_times: tuple[int, ...] = ()


TagTrajectory = Callable[[int], Point3]


@dataclass
class Scenario:
    """Everything a ranging session needs besides the schedule.

    ``tag`` is either a fixed position or a function of global time (ps).
    Links without an entry in ``channels`` or ``anchor_clocks`` use
    ``default_channel`` and an ideal clock. Random streams are keyed by
    ``(seed, *stream_key, anchor_id)``.
    """

    anchors: Mapping[int, Point3]
    tag: Point3 | TagTrajectory
    channels: Mapping[int, ChannelProfile] = field(default_factory=dict)
    default_channel: ChannelProfile = field(default_factory=ChannelProfile)
    tag_clock: DeviceClock = field(default_factory=DeviceClock)
    anchor_clocks: Mapping[int, DeviceClock] = field(default_factory=dict)
    reply_time_ps: int = DEFAULT_REPLY_TIME_PS
    seed: int = 0
    stream_key: tuple[int, ...] = ()

    def channel(self, anchor_id: int) -> ChannelProfile:
        return self.channels.get(anchor_id, self.default_channel)

    def anchor_clock(self, anchor_id: int) -> DeviceClock:
        return self.anchor_clocks.get(anchor_id, DeviceClock())

    def tag_position(self, t_ps: int) -> Point3:
        if isinstance(self.tag, Point3):
            return self.tag
        return self.tag(t_ps)

    def streams(self, anchor_ids) -> dict[AnchorId, np.random.Generator]:
        return {a: rng_stream(self.seed, *self.stream_key, a) for a in anchor_ids}


def validate(schedule: Schedule, scenario: Scenario) -> None:
    """Check the schedule against the scenario before anything runs."""
    missing = [a for a in schedule.anchors if a not in scenario.anchors]
    if missing:
        names = ", ".join(format_anchor_id(a) for a in missing)
        raise ConfigurationError(f"schedule references unknown anchor(s): {names}")
    if not 0 < scenario.reply_time_ps <= MAX_REPLY_TIME_PS:
        raise ConfigurationError("reply time must be in (0, 10 ms]")
    if scenario.reply_time_ps * 1.001 >= schedule.slot_ps:
        raise ConfigurationError("reply time does not fit inside one slot")


def run_round(
    schedule: Schedule,
    scenario: Scenario,
    t_start: int = 0,
    round_index: int = 0,
    streams: Mapping[int, np.random.Generator] | None = None,
) -> RoundResult:
    """Poll every scheduled anchor once, one slot each.

    A lost or malformed exchange consumes its slot and yields an invalid
    measurement; there is no retry. So does an exchange that would overrun
    its slot.
    """
    validate(schedule, scenario)
    if streams is None:
        streams = scenario.streams(schedule.anchors)
    slot = schedule.slot_ps
    results: list[RangeMeasurement] = []
    polls: list[int] = []
    for k, anchor_id in enumerate(schedule.anchors):
        t_poll = t_start + k * slot
        t_slot_end = t_poll + slot
        polls.append(t_poll)
        ex = run_exchange(
            scenario.tag_position(t_poll),
            scenario.anchors[anchor_id],
            scenario.tag_clock,
            scenario.anchor_clock(anchor_id),
            scenario.reply_time_ps,
            scenario.channel(anchor_id),
            t_poll,
            streams[anchor_id],
            anchor=anchor_id,
        )
        if ex and not ex.completed_at < t_slot_end:
            results.append(RangeMeasurement(anchor_id, float("nan"), t_slot_end, False, "slot overrun"))
            continue
        sim_time = int(round(ex.completed_at)) if ex else t_slot_end
        results.append(measure(ex, anchor_id, sim_time))
    return RoundResult(round_index, tuple(results), t_start, t_start + schedule.round_trip_ps, tuple(polls))


def run_session(
    schedule: Schedule,
    scenario: Scenario,
    n_rounds: int,
    t_start: int = 0,
) -> Iterator[RoundResult]:
    """Yield ``n_rounds`` back-to-back rounds; deterministic for a fixed seed."""
    if n_rounds < 1:
        raise ConfigurationError("n_rounds must be at least 1")
    validate(schedule, scenario)
    streams = scenario.streams(schedule.anchors)
    t = t_start
    for index in range(n_rounds):
        result = run_round(schedule, scenario, t, index, streams)
        yield result
        t = result.t_round_end
