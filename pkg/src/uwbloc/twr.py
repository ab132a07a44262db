"""Single-sided two-way ranging.

The tag sends a poll, the anchor answers after a fixed reply delay, and the
tag recovers the one-way time of flight from four timestamps::

    tof = ((t_receive_response - t_send_poll) - (t_send_response - t_receive_poll)) / 2

Tag timestamps come from the tag clock and anchor timestamps from the anchor
clock, so constant clock offsets cancel. Frequency error does not cancel:
a tag running fast by ``e`` overestimates the time of flight by roughly
``e * reply_time / 2``, and a fast anchor underestimates it by the same
amount.

Timestamps are integer picoseconds. Global simulation time is kept as a
float in picoseconds and only quantized when a device reads its clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LOSS, ChannelProfile, perturb_path
from .errors import DomainError, ImplausibleExchangeError, MalformedExchangeError
from .geometry import PS_PER_SECOND, SPEED_OF_LIGHT, AnchorId, Point3, euclidean_distance

DEFAULT_REPLY_TIME_PS = 1_000_000_000  # 1 ms
COARSE_QUANTUM_PS = 15.65  # DW1000/DW3000 tick, 1 / (128 * 499.2 MHz)
IMPLAUSIBLE_TOF_PS = -1000.0


@dataclass(frozen=True)
class DeviceClock:
    """Free-running device clock.

    ``local = offset + t_global * (1 + drift_ppm * 1e-6)``, quantized to
    ``quantum_ps`` (round to nearest) when a timestamp is taken.
    """

    offset_ps: int = 0
    drift_ppm: float = 0.0
    quantum_ps: float = 1.0
    max_drift_ppm: float = 100.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.drift_ppm) or abs(self.drift_ppm) > self.max_drift_ppm:
            raise DomainError(
                f"drift {self.drift_ppm!r} ppm outside +/-{self.max_drift_ppm} ppm"
            )
        if not self.quantum_ps > 0:
            raise DomainError("clock quantum must be positive")

    @property
    def rate(self) -> float:
        return 1.0 + self.drift_ppm * 1e-6

    def local_time(self, t_global: float) -> float:
        """Unquantized local time; strictly increasing in ``t_global``."""
        return self.offset_ps + t_global * self.rate

    def read(self, t_global: float) -> int:
        """Timestamp (ps) taken at global instant ``t_global``."""
        local = self.local_time(t_global)
        if self.quantum_ps == 1.0:
            return int(round(local))
        return int(round(round(local / self.quantum_ps) * self.quantum_ps))

    def to_global(self, t_local: float) -> float:
        """Global instant at which this clock shows ``t_local``."""
        return (t_local - self.offset_ps) / self.rate


@dataclass(frozen=True)
class TwrExchange:
    """Timestamps of one poll/response handshake, in device picoseconds.

    ``completed_at`` is the global instant (ps) the response reached the tag;
    it is simulator bookkeeping and plays no part in the range computation.
    """

    t_send_poll: int
    t_receive_poll: int
    t_send_response: int
    t_receive_response: int
    anchor: AnchorId
    completed_at: float = float("nan")


@dataclass(frozen=True)
class RangeMeasurement:
    anchor: AnchorId
    distance: float  # m, NaN when lost
    sim_time: int  # ps, global
    valid: bool
    reason: str = ""

    def __post_init__(self) -> None:
        if self.valid and not (math.isfinite(self.distance) and self.distance >= 0):
            raise DomainError(f"valid measurement needs a finite distance >= 0, got {self.distance!r}")


def compute_tof(ex: TwrExchange, *, check_plausible: bool = True) -> float:
    """Time of flight in picoseconds.

    May be slightly negative when clock drift outweighs a very short path;
    anything below -1 ns raises :class:`ImplausibleExchangeError` unless
    ``check_plausible`` is false (useful when studying drift bias itself).
    """
    if not ex.t_receive_response > ex.t_send_poll:
        raise MalformedExchangeError("response received before poll was sent (tag clock)")
    if not ex.t_send_response > ex.t_receive_poll:
        raise MalformedExchangeError("response sent before poll was received (anchor clock)")
    round_trip = ex.t_receive_response - ex.t_send_poll
    reply = ex.t_send_response - ex.t_receive_poll
    tof = (round_trip - reply) / 2
    if check_plausible and tof < IMPLAUSIBLE_TOF_PS:
        raise ImplausibleExchangeError(tof)
    return tof


def tof_to_distance(tof_ps: float) -> float:
    if not math.isfinite(tof_ps):
        raise DomainError(f"time of flight is not finite: {tof_ps!r}")
    return tof_ps / PS_PER_SECOND * SPEED_OF_LIGHT


def distance_to_tof(distance: float) -> float:
    return distance / SPEED_OF_LIGHT * PS_PER_SECOND


def run_exchange(
    tag_pos: Point3,
    anchor_pos: Point3,
    tag_clock: DeviceClock,
    anchor_clock: DeviceClock,
    reply_time: int,
    channel: ChannelProfile,
    t_start: float,
    rng: np.random.Generator,
    anchor: AnchorId = AnchorId(0),
):
    """Forward-simulate one handshake starting at global instant ``t_start``.

    The anchor schedules its response ``reply_time`` ticks of its own clock
    after the poll arrives. Returns a :class:`TwrExchange`, or
    :data:`~uwbloc.channel.LOSS` when the channel drops a message.
    """
    if not reply_time > 0:
        raise DomainError("reply_time must be positive")
    true_distance = euclidean_distance(tag_pos, anchor_pos)

    poll_path = perturb_path(true_distance, channel, rng)
    if channel.asymmetric:
        response_path = perturb_path(true_distance, channel, rng)
    else:
        response_path = poll_path
    if poll_path is LOSS or response_path is LOSS:
        return LOSS

    t_send_poll = tag_clock.read(t_start)
    poll_arrival = t_start + distance_to_tof(poll_path)
    t_receive_poll = anchor_clock.read(poll_arrival)
    t_send_response = t_receive_poll + int(reply_time)
    response_departure = anchor_clock.to_global(t_send_response)
    response_arrival = response_departure + distance_to_tof(response_path)
    t_receive_response = tag_clock.read(response_arrival)
    return TwrExchange(
        t_send_poll=t_send_poll,
        t_receive_poll=t_receive_poll,
        t_send_response=t_send_response,
        t_receive_response=t_receive_response,
        anchor=anchor,
        completed_at=response_arrival,
    )


def measure(ex, anchor: AnchorId, sim_time: int) -> RangeMeasurement:
    """Turn an exchange outcome into a range, flagging losses and bad TOFs."""
    if ex is LOSS:
        return RangeMeasurement(anchor, float("nan"), sim_time, False, "lost")
    try:
        tof = compute_tof(ex)
    except (MalformedExchangeError, ImplausibleExchangeError) as exc:
        return RangeMeasurement(anchor, float("nan"), sim_time, False, str(exc))
    distance = tof_to_distance(tof)
    if distance < 0:
        # kept unclamped so the value is visible, but never fed to the filter
        return RangeMeasurement(anchor, distance, sim_time, False, "negative tof")
    return RangeMeasurement(anchor, distance, sim_time, True)
