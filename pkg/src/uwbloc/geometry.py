"""Coordinate types, physical constants and seeded random streams.

Everything in the package works in meters in a room frame whose origin is
a floor corner, with all room coordinates non-negative. Centimeters only
appear in evaluation reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NewType

import numpy as np

from .errors import DomainError

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact by definition
PS_PER_SECOND = 10**12

AnchorId = NewType("AnchorId", int)
MAX_ANCHOR_ID = 0xFFFF


def format_anchor_id(anchor_id: int) -> str:
    return f"0x{anchor_id:02x}"


def parse_anchor_id(token: str) -> AnchorId:
    """Parse a hex id such as ``0x02`` (the ``0x`` prefix is optional)."""
    value = int(token, 16)
    if not 0 <= value <= MAX_ANCHOR_ID:
        raise ValueError(f"anchor id {token!r} out of range")
    return AnchorId(value)


@dataclass(frozen=True)
class Point3:
    """A position in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} coordinate is not finite: {value!r}")
            # store plain floats so equality and hashing are well behaved
            object.__setattr__(self, name, float(value))

    def __iter__(self) -> Iterator[float]:
        return iter((self.x, self.y, self.z))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> Point3:
        x, y, z = values
        return cls(x, y, z)


def euclidean_distance(a: Point3, b: Point3) -> float:
    """Distance in meters between two points.

    Computed as ``sqrt(dx**2 + dy**2 + dz**2)`` with the squared terms
    summed in a fixed order, so the result is exactly symmetric.
    """
    if not isinstance(a, Point3):
        a = Point3.from_iterable(a)  # validates finiteness
    if not isinstance(b, Point3):
        b = Point3.from_iterable(b)
    ax, ay, az = a
    bx, by, bz = b
    return math.sqrt((ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2)


def _zigzag(value: int) -> int:
    # SeedSequence spawn keys must be non-negative
    return 2 * value if value >= 0 else -2 * value - 1


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based random stream for ``(seed, *key)``.

    The same seed and key always produce the same stream, and distinct keys
    give statistically independent streams (Philox with spawn keys).
    """
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_zigzag(int(k)) for k in key))
    return np.random.Generator(np.random.Philox(seq))
