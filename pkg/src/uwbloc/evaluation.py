"""Static grid evaluation.

A tag is placed at every intersection of a regular (x, y) grid. Each cell
gets a fresh filter and its own random streams, runs a fixed number of
ranging rounds, and is summarized by the mean and spread of its position
errors plus a k-sigma confidence ellipse of the (x, y) fixes.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelProfile
from .ekf import EkfParams, RangeLocalizer
from .errors import ConfigurationError, DegenerateEllipseError, InsufficientDataError
from .geometry import Point3
from .scheduler import Schedule, Scenario, run_session
from .twr import DEFAULT_REPLY_TIME_PS, DeviceClock

MEAN_OF_NORMS = "mean-of-norms"
NORM_OF_MEAN = "norm-of-mean"

CELL_COLUMNS = ("x", "y", "mu_cm", "sigma_cm", "mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy", "n")
FIX_COLUMNS = ("x", "y", "round", "sim_time_ps", "est_x", "est_y", "est_z")
ELLIPSE_COLUMNS = ("x", "y", "center_x", "center_y", "semi_major", "semi_minor", "orientation_rad", "k")


def _axis(lo: float, hi: float, step: float) -> list[float]:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


@dataclass(frozen=True)
class GridSpec:
    x_min: float = 2.0
    x_max: float = 6.0
    x_step: float = 1.0
    y_min: float = 2.0
    y_max: float = 8.0
    y_step: float = 1.0
    z_tag: float = 1.0
    rounds_per_cell: int = 500

    def __post_init__(self) -> None:
        if not (self.x_step > 0 and self.y_step > 0):
            raise ConfigurationError("grid steps must be positive")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ConfigurationError("grid ranges must satisfy min <= max")
        if self.rounds_per_cell < 2:
            raise ConfigurationError("rounds_per_cell must be at least 2")

    def points(self) -> list[Point3]:
        """Grid intersections, x-major (all y for the first x, then the next x)."""
        return [
            Point3(x, y, self.z_tag)
            for x in _axis(self.x_min, self.x_max, self.x_step)
            for y in _axis(self.y_min, self.y_max, self.y_step)
        ]


@dataclass(frozen=True)
class CellStats:
    true_pos: Point3
    mean_error: float  # cm
    error_std: float  # cm
    sample_mean: Point3 | None
    cov2d: np.ndarray
    n: int
    fixes: tuple[tuple[int, int, float, float, float], ...] = field(default=(), repr=False, compare=False)

    @property
    def empty(self) -> bool:
        """True for a cell in which no round produced a usable fix."""
        return self.n == 0


@dataclass(frozen=True)
class ConfidenceEllipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    orientation: float
    k: float = 3.0

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points (shape ``(n, 2)``) on or inside the ellipse."""
        pts = np.asarray(points, dtype=float) - np.asarray(self.center)
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        u = pts[:, 0] * c + pts[:, 1] * s
        v = -pts[:, 0] * s + pts[:, 1] * c
        a, b = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def gaussian_containment(k: float) -> float:
    """Probability mass of a bivariate normal inside its k-sigma ellipse.

    The squared Mahalanobis radius is chi-square with 2 degrees of freedom,
    whose CDF at ``k**2`` is ``1 - exp(-k**2 / 2)``; k = 3 gives 0.9889.
    """
    return 1.0 - math.exp(-k * k / 2.0)


def error_stats(fixes, truth, *, mode: str = MEAN_OF_NORMS) -> tuple[float, float]:
    """Mean and sample std (n - 1) of position errors, in centimeters.

    ``fixes`` is ``(n, d)`` and ``truth`` has length ``d``. With
    ``mode="norm-of-mean"`` the first value is instead the distance from
    the mean fix to the truth.
    """
    pts = np.asarray(fixes, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise InsufficientDataError("need at least two fixes")
    diff = pts - np.asarray(truth, dtype=float)
    errors = np.sqrt(np.sum(diff * diff, axis=1))
    sigma = float(np.std(errors, ddof=1))
    if mode == MEAN_OF_NORMS:
        mu = float(np.mean(errors))
    elif mode == NORM_OF_MEAN:
        mu = float(np.linalg.norm(diff.mean(axis=0)))
    else:
        raise ValueError(f"unknown error mode {mode!r}")
    return mu * 100.0, sigma * 100.0


def confidence_ellipse(cov2d, center, k: float = 3.0) -> ConfidenceEllipse:
    """k-sigma ellipse of a 2x2 covariance.

    Semi-axes are ``k * sqrt(eigenvalue)``, largest first; the orientation is
    the angle of the major axis from +x, in (-pi/2, pi/2].
    """
    if not k > 0:
        raise ValueError("k must be positive")
    cov = np.asarray(cov2d, dtype=float).reshape(2, 2)
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
        raise ValueError("covariance is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if not np.all(np.isfinite(vals)) or vals[0] <= 1e-12 * max(vals[1], 0.0) or vals[1] <= 0:
        raise DegenerateEllipseError("covariance is rank deficient")
    major = vecs[:, 1]
    angle = math.atan2(major[1], major[0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    return ConfidenceEllipse(
        center=(float(center[0]), float(center[1])),
        semi_axes=(k * math.sqrt(vals[1]), k * math.sqrt(vals[0])),
        orientation=angle,
        k=float(k),
    )


@dataclass(frozen=True)
class CellSetup:
    """Simulation settings shared by all cells of a sweep."""

    anchors: Mapping[int, Point3]
    schedule: Schedule
    channel: ChannelProfile = field(default_factory=ChannelProfile.default_los)
    channels: Mapping[int, ChannelProfile] = field(default_factory=dict)
    ekf: EkfParams = field(default_factory=EkfParams)
    seed: int = 0
    tag_clock: DeviceClock = field(default_factory=DeviceClock)
    anchor_clocks: Mapping[int, DeviceClock] = field(default_factory=dict)
    reply_time_ps: int = DEFAULT_REPLY_TIME_PS
    batch: bool = False
    gate: float = 5.0
    error_dims: int = 2
    mu_mode: str = MEAN_OF_NORMS


def cell_key(pos: Point3) -> tuple[int, int, int]:
    """Stream key of a cell: its position in whole millimeters."""
    return (round(pos.x * 1000), round(pos.y * 1000), round(pos.z * 1000))


def run_cell(true_pos: Point3, setup: CellSetup, rounds: int) -> CellStats:
    scenario = Scenario(
        anchors=setup.anchors,
        tag=true_pos,
        channels=setup.channels,
        default_channel=setup.channel,
        tag_clock=setup.tag_clock,
        anchor_clocks=setup.anchor_clocks,
        reply_time_ps=setup.reply_time_ps,
        seed=setup.seed,
        stream_key=cell_key(true_pos),
    )
    localizer = RangeLocalizer(setup.anchors, setup.ekf, batch=setup.batch, gate=setup.gate)
    fixes = []
    for result in run_session(setup.schedule, scenario, rounds):
        fix = localizer.process_round(result.round_index, result.measurements, result.t_round_end)
        if fix is not None and fix.usable:
            fixes.append((result.round_index, fix.sim_time, *fix.position))

    if len(fixes) < 2:
        nan = float("nan")
        return CellStats(true_pos, nan, nan, None, np.full((2, 2), nan), 0, tuple(fixes))
    pts = np.array([f[2:] for f in fixes])
    dims = setup.error_dims
    mu, sigma = error_stats(pts[:, :dims], tuple(true_pos)[:dims], mode=setup.mu_mode)
    return CellStats(
        true_pos=true_pos,
        mean_error=mu,
        error_std=sigma,
        sample_mean=Point3(*pts.mean(axis=0)),
        cov2d=np.cov(pts[:, :2], rowvar=False, ddof=1),
        n=len(fixes),
        fixes=tuple(fixes),
    )


def _run_cell_star(args) -> CellStats:
    return run_cell(*args)


def run_grid(grid: GridSpec, setup: CellSetup, *, workers: int = 1, points: Sequence[Point3] | None = None) -> list[CellStats]:
    """Evaluate every grid cell (or the given ``points``) with a fresh filter.

    Cells are independent, so ``workers > 1`` evaluates them in a process
    pool without changing any result.
    """
    if not setup.anchors:
        raise ConfigurationError("anchor table is empty")
    pts = list(points) if points is not None else grid.points()
    jobs = [(p, setup, grid.rounds_per_cell) for p in pts]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell_star, jobs))
    return [run_cell(*job) for job in jobs]


def ellipses_for(stats: Sequence[CellStats], k: float = 3.0) -> list[ConfidenceEllipse | None]:
    """Ellipse per cell; ``None`` where the scatter is degenerate or empty."""
    out: list[ConfidenceEllipse | None] = []
    for cell in stats:
        if cell.empty:
            out.append(None)
            continue
        try:
            out.append(confidence_ellipse(cell.cov2d, (cell.sample_mean.x, cell.sample_mean.y), k))
        except DegenerateEllipseError:
            out.append(None)
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _cell_rows(stats):
    for c in stats:
        mean_x = c.sample_mean.x if c.sample_mean else math.nan
        mean_y = c.sample_mean.y if c.sample_mean else math.nan
        yield (
            c.true_pos.x, c.true_pos.y, c.mean_error, c.error_std, mean_x, mean_y,
            float(c.cov2d[0, 0]), float(c.cov2d[0, 1]), float(c.cov2d[1, 1]), c.n,
        )


def _fix_rows(stats):
    for c in stats:
        for round_index, sim_time, x, y, z in c.fixes:
            yield (c.true_pos.x, c.true_pos.y, round_index, sim_time, float(x), float(y), float(z))


def _ellipse_rows(stats, ellipses):
    for c, e in zip(stats, ellipses):
        if e is None:
            yield (c.true_pos.x, c.true_pos.y, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan)
        else:
            yield (c.true_pos.x, c.true_pos.y, *e.center, *e.semi_axes, e.orientation, e.k)


def emit_reports(stats: Sequence[CellStats], ellipses: Sequence[ConfidenceEllipse | None], out_dir) -> list[Path]:
    """Write ``cells.csv``, ``fixes.csv`` and ``ellipses.csv`` into ``out_dir``.

    Output is a pure function of the inputs (floats via ``repr``), so a
    fixed seed gives byte-identical files. Every file is attempted; failures
    are collected and raised together as one :class:`OSError`.
    """
    if len(ellipses) != len(stats):
        raise ValueError("need one ellipse entry (or None) per cell")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    targets = [
        ("cells.csv", CELL_COLUMNS, _cell_rows(stats)),
        ("fixes.csv", FIX_COLUMNS, _fix_rows(stats)),
        ("ellipses.csv", ELLIPSE_COLUMNS, _ellipse_rows(stats, ellipses)),
    ]
    written, failures = [], []
    for name, header, rows in targets:
        try:
            _write_csv(out / name, header, rows)
            written.append(out / name)
        except OSError as exc:
            failures.append(f"{name}: {exc.strerror or exc}")
    if failures:
        raise OSError("failed to write " + "; ".join(failures))
    return written


def cpu_workers() -> int:
    return max(1, (os.cpu_count() or 1))
