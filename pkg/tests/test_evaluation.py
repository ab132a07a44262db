import csv
import math

import numpy as np
import pytest
from scipy import stats as sps

from uwbloc.channel import ChannelProfile
from uwbloc.errors import DegenerateEllipseError, InsufficientDataError
from uwbloc.evaluation import (
    CELL_COLUMNS,
    ELLIPSE_COLUMNS,
    FIX_COLUMNS,
    NORM_OF_MEAN,
    CellSetup,
    GridSpec,
    confidence_ellipse,
    ellipses_for,
    emit_reports,
    error_stats,
    gaussian_containment,
    run_cell,
    run_grid,
)
from uwbloc.geometry import Point3
from uwbloc.scheduler import Schedule

from conftest import ROOM

SETUP = CellSetup(anchors=ROOM, schedule=Schedule(tuple(ROOM)), seed=2024)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# error statistics


def test_error_stats_at_truth():
    assert error_stats([(4, 5)] * 3, (4, 5)) == (0.0, 0.0)


def test_error_stats_symmetric_pair():
    mu, sigma = error_stats([(4.1, 5.0), (3.9, 5.0)], (4, 5))
    assert mu == pytest.approx(10.0, abs=1e-12) and sigma == pytest.approx(0.0, abs=1e-12)
    mu, _ = error_stats([(4.1, 5.0), (3.9, 5.0)], (4, 5), mode=NORM_OF_MEAN)
    assert mu == pytest.approx(0.0, abs=1e-12)


def test_error_stats_rayleigh_mean():
    rng = np.random.default_rng(1)
    fixes = np.array([4.0, 5.0]) + rng.normal(0, 0.03, size=(100_000, 2))
    mu, _ = error_stats(fixes, (4, 5))
    assert mu == pytest.approx(3.0 * math.sqrt(math.pi / 2), rel=0.02)


def test_error_stats_matches_brute_force():
    rng = np.random.default_rng(2)
    fixes = rng.normal(0, 0.1, size=(57, 2)) + (2, 3)
    errors = [math.hypot(x - 2, y - 3) for x, y in fixes]
    mean = sum(errors) / len(errors)
    std = math.sqrt(sum((e - mean) ** 2 for e in errors) / (len(errors) - 1))
    mu, sigma = error_stats(fixes, (2, 3))
    assert mu == pytest.approx(100 * mean, abs=1e-12)
    assert sigma == pytest.approx(100 * std, abs=1e-12)


def test_error_stats_needs_two():
    with pytest.raises(InsufficientDataError):
        error_stats([(1, 1)], (1, 1))
    with pytest.raises(InsufficientDataError):
        error_stats(np.empty((0, 2)), (1, 1))


# ellipses


def test_ellipse_axis_aligned():
    e = confidence_ellipse(np.diag([4e-4, 1e-4]), (0, 0))
    assert e.semi_axes == pytest.approx((0.06, 0.03), abs=1e-15)
    assert e.orientation == pytest.approx(0.0, abs=1e-15)


def test_ellipse_rotated_major_axis():
    e = confidence_ellipse(np.diag([1e-4, 4e-4]), (0, 0))
    assert e.orientation == pytest.approx(math.pi / 2)
    theta = 0.3
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    e = confidence_ellipse(rot @ np.diag([9.0, 1.0]) @ rot.T, (1, 2), k=1)
    assert e.semi_axes == pytest.approx((3.0, 1.0))
    assert e.orientation == pytest.approx(theta)


def test_ellipse_isotropic_is_circle():
    e = confidence_ellipse(0.02**2 * np.eye(2), (0, 0))
    assert e.semi_axes[0] == pytest.approx(e.semi_axes[1]) == pytest.approx(0.06)
    assert -math.pi / 2 < e.orientation <= math.pi / 2


def test_ellipse_degenerate():
    with pytest.raises(DegenerateEllipseError):
        confidence_ellipse([[1.0, 1.0], [1.0, 1.0]], (0, 0))
    with pytest.raises(DegenerateEllipseError):
        confidence_ellipse(np.zeros((2, 2)), (0, 0))


@pytest.mark.parametrize("k", [1.0, 2.0, 3.0])
def test_containment_follows_chi2_2dof(k):
    rng = np.random.default_rng(int(k))
    cov = np.array([[4e-4, 1.5e-4], [1.5e-4, 2e-4]])
    pts = rng.multivariate_normal([3, 4], cov, size=100_000)
    e = confidence_ellipse(cov, (3, 4), k)
    expected = sps.chi2.cdf(k**2, 2)
    assert gaussian_containment(k) == pytest.approx(expected, rel=1e-12)
    assert e.contains(pts).mean() == pytest.approx(expected, abs=0.005)


# cells and grids


def test_zero_noise_cell():
    setup = CellSetup(anchors=ROOM, schedule=SETUP.schedule, channel=ChannelProfile())
    cell = run_cell(Point3(3, 6, 1), setup, 100)
    assert cell.mean_error < 1.0 and cell.error_std < 0.1
    assert cell.n == 100


def test_cell_spans_125_seconds():
    cell = run_cell(Point3(4, 5, 1), SETUP, 500)
    assert cell.fixes[-1][1] == 125 * 10**12
    assert 2.0 <= cell.error_std <= 7.0


def test_grid_points():
    assert len(GridSpec().points()) == 35
    assert len(GridSpec(x_step=2, y_step=2).points()) == 12
    pts = GridSpec().points()
    assert pts[0] == Point3(2, 2, 1) and pts[1] == Point3(2, 3, 1) and pts[-1] == Point3(6, 8, 1)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(x_step=0)
    with pytest.raises(ValueError):
        GridSpec(x_min=5, x_max=4)


def test_visit_order_does_not_matter():
    grid = GridSpec(rounds_per_cell=20)
    pts = grid.points()[:6]
    forward = run_grid(grid, SETUP, points=pts)
    backward = run_grid(grid, SETUP, points=pts[::-1])[::-1]
    assert [c.fixes for c in forward] == [c.fixes for c in backward]


def test_worker_pool_gives_same_result():
    grid = GridSpec(rounds_per_cell=10)
    pts = grid.points()[:4]
    serial = run_grid(grid, SETUP, points=pts)
    pooled = run_grid(grid, SETUP, points=pts, workers=2)
    assert [c.fixes for c in serial] == [c.fixes for c in pooled]


def test_empty_cell_when_everything_lost():
    setup = CellSetup(anchors=ROOM, schedule=SETUP.schedule, channel=ChannelProfile(loss_prob=1.0))
    cell = run_cell(Point3(4, 5, 1), setup, 10)
    assert cell.empty and cell.n == 0
    assert ellipses_for([cell]) == [None]


# reports


def test_reports_for_full_grid(tmp_path):
    stats = run_grid(GridSpec(rounds_per_cell=4), SETUP)
    paths = emit_reports(stats, ellipses_for(stats), tmp_path)
    assert [p.name for p in paths] == ["cells.csv", "fixes.csv", "ellipses.csv"]
    cells = _read(tmp_path / "cells.csv")
    assert tuple(cells[0]) == CELL_COLUMNS and len(cells) == 36
    fixes = _read(tmp_path / "fixes.csv")
    assert tuple(fixes[0]) == FIX_COLUMNS and len(fixes) == 1 + sum(c.n for c in stats)
    assert len(_read(tmp_path / "ellipses.csv")) == 36


def test_reports_empty(tmp_path):
    emit_reports([], [], tmp_path)
    assert _read(tmp_path / "cells.csv") == [list(CELL_COLUMNS)]
    assert _read(tmp_path / "fixes.csv") == [list(FIX_COLUMNS)]
    assert _read(tmp_path / "ellipses.csv") == [list(ELLIPSE_COLUMNS)]


def test_reports_byte_identical(tmp_path):
    grid = GridSpec(rounds_per_cell=10)
    for name in ("a", "b"):
        stats = run_grid(grid, SETUP, points=grid.points()[:3])
        emit_reports(stats, ellipses_for(stats), tmp_path / name)
    for f in ("cells.csv", "fixes.csv", "ellipses.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_reports_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_reports([], [], blocker)
