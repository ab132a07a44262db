"""Simulated UWB two-way ranging, EKF localization and static grid evaluation."""

from .anchors import AnchorTable, apply_command, load, store
from .channel import LOSS, ChannelProfile, perturb_path
from .ekf import (
    EkfParams,
    EkfState,
    RangeLocalizer,
    measurement_jacobian,
    predict,
    predicted_ranges,
    solve_multilateration,
    update,
)
from .evaluation import CellSetup, GridSpec, confidence_ellipse, emit_reports, error_stats, run_grid
from .geometry import SPEED_OF_LIGHT, AnchorId, Point3, euclidean_distance, rng_stream
from .scheduler import RoundResult, Scenario, Schedule, run_round, run_session
from .twr import DeviceClock, RangeMeasurement, TwrExchange, compute_tof, run_exchange, tof_to_distance

__all__ = [
    "AnchorId", "AnchorTable", "CellSetup", "ChannelProfile", "DeviceClock", "EkfParams", "EkfState",
    "GridSpec", "LOSS", "Point3", "RangeLocalizer", "RangeMeasurement", "RoundResult", "SPEED_OF_LIGHT",
    "Scenario", "Schedule", "TwrExchange", "apply_command", "compute_tof", "confidence_ellipse",
    "emit_reports", "error_stats", "euclidean_distance", "load", "measurement_jacobian", "perturb_path",
    "predict", "predicted_ranges", "rng_stream", "run_exchange", "run_grid", "run_round", "run_session",
    "solve_multilateration", "store", "tof_to_distance", "update",
]
