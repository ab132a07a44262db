"""Parametric radio link model.

A link turns the true geometric path length into the path length seen by
the ranging exchange: zero-mean Gaussian noise, a constant excess for a
non-line-of-sight link, occasional multipath excess, and packet loss.
Excess terms are never negative, so a link can only lengthen a path on
average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigurationError


class _Loss:
    """Sentinel for a dropped message."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "LOSS"

    def __bool__(self) -> bool:
        return False


LOSS = _Loss()


@dataclass(frozen=True)
class ChannelProfile:
    """Noise, bias and loss parameters of one anchor-tag link.

    Attributes
    ----------
    noise_sigma : float
        Std (m) of the Gaussian added to the one-way path length.
    nlos_bias : float
        Constant excess (m) applied when ``nlos`` is set.
    nlos : bool
        Whether the link is non-line-of-sight.
    outlier_prob : float
        Probability of a multipath outlier on a draw.
    outlier_extra : float
        Excess length (m) of a multipath outlier.
    loss_prob : float
        Probability that a message is dropped.
    asymmetric : bool
        Perturb poll and response independently instead of once per exchange.
    """

    noise_sigma: float = 0.0
    nlos_bias: float = 0.0
    nlos: bool = False
    outlier_prob: float = 0.0
    outlier_extra: float = 0.0
    loss_prob: float = 0.0
    asymmetric: bool = False

    def __post_init__(self) -> None:
        for name in ("noise_sigma", "nlos_bias", "outlier_extra"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("outlier_prob", "loss_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")

    @classmethod
    def ideal(cls) -> ChannelProfile:
        return cls()

    @classmethod
    def default_los(cls) -> ChannelProfile:
        # tuning default, see README "Channel calibration"
        return cls(noise_sigma=0.05, loss_prob=0.01)

    def with_nlos(self, bias: float) -> ChannelProfile:
        return replace(self, nlos=True, nlos_bias=bias)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def perturb_path(true_distance: float, profile: ChannelProfile, rng: np.random.Generator):
    """Path length (m) seen by one message, or :data:`LOSS`.

    Every call consumes the same number of draws from ``rng`` whatever the
    outcome, so streams stay aligned across profiles that differ only in
    their parameter values.
    """
    if not true_distance >= 0:
        raise ValueError(f"true distance must be >= 0, got {true_distance!r}")
    u_loss, u_outlier = rng.random(2)
    noise = rng.standard_normal()
    if u_loss < profile.loss_prob:
        return LOSS
    path = true_distance + profile.noise_sigma * noise
    if profile.nlos:
        path += profile.nlos_bias
    if u_outlier < profile.outlier_prob:
        path += profile.outlier_extra
    return max(path, 0.0)
