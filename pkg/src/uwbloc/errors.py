"""Exception hierarchy shared by the ranging, filtering and evaluation code."""

from __future__ import annotations


class UwbError(Exception):
    """Base class for every error raised by uwbloc."""


class DomainError(UwbError, ValueError):
    """An input lies outside the domain of an operation (e.g. NaN coordinates)."""


class ConfigurationError(UwbError, ValueError):
    """Scenario, schedule or anchor configuration is invalid."""


class MalformedExchangeError(UwbError, ValueError):
    """A two-way-ranging exchange violates its timestamp ordering."""


class ImplausibleExchangeError(UwbError):
    """Computed time of flight is too negative to be clock drift alone."""

    def __init__(self, tof_ps: float) -> None:
        super().__init__(f"implausible time of flight {tof_ps:.1f} ps")
        self.tof_ps = tof_ps


class SingularGeometryError(UwbError):
    """The tag estimate coincides with an anchor, so the range gradient is undefined."""

    def __init__(self, index: int, distance: float) -> None:
        super().__init__(f"anchor #{index} is {distance:.3g} m from the tag estimate")
        self.index = index
        self.distance = distance


class RankDeficiencyError(UwbError):
    """Anchor geometry cannot determine a unique 3-D position."""


class NoFixError(UwbError):
    """An iterative position solve did not converge."""


class FilterDivergenceError(UwbError):
    """The filter covariance is no longer symmetric positive semi-definite."""


class NotProvisionedError(ConfigurationError, FileNotFoundError):
    """No anchor file exists at the requested location."""


class AnchorParseError(ConfigurationError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AnchorConflictError(ConfigurationError):
    def __init__(self, anchor_id: int) -> None:
        super().__init__(f"duplicate anchor id 0x{anchor_id:02x}")
        self.anchor_id = anchor_id


class InsufficientDataError(UwbError, ValueError):
    """Too few samples to compute a statistic."""


class DegenerateEllipseError(UwbError, ValueError):
    """Covariance is rank deficient, so the ellipse collapses."""
