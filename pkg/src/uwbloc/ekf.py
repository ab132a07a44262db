"""Range-only extended Kalman filter and a Gauss-Newton multilateration solver.

State is ``[x, y, z, vx, vy, vz]`` under a constant-velocity motion model.
Each range measurement to an anchor at ``a`` is predicted as
``|a - p|`` and linearized with the row::

    [-(ax - x)/d, -(ay - y)/d, -(az - z)/d, 0, 0, 0]

i.e. the unit vector pointing from the anchor to the tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    FilterDivergenceError,
    NoFixError,
    RankDeficiencyError,
    SingularGeometryError,
)
from .geometry import AnchorId, Point3

SINGULAR_EPS = 1e-6  # m
DEFAULT_GATE = 5.0  # innovation std multiples


@dataclass(frozen=True)
class EkfParams:
    """Filter tuning.

    ``q_accel`` is the std scale of the white acceleration noise (m/s^2);
    its square is used as the spectral density of the continuous
    white-noise-acceleration model. ``dt`` is the prediction step for one
    ranging slot; a batched round predicts over ``dt`` times the anchor count.
    """

    q_accel: float = 0.5
    r_range: float = 0.05
    p0_pos: float = 1.0
    p0_vel: float = 0.5
    dt: float = 0.05

    def __post_init__(self) -> None:
        for name in ("q_accel", "r_range", "p0_pos", "p0_vel", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class EkfState:
    state: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.state, dtype=float).reshape(6)
        p = np.array(self.covariance, dtype=float).reshape(6, 6)
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "state", x)
        object.__setattr__(self, "covariance", p)

    @property
    def position(self) -> Point3:
        return Point3(*self.state[:3])

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:].copy()

    @classmethod
    def initial(cls, position, params: EkfParams, velocity=(0.0, 0.0, 0.0)) -> EkfState:
        x = np.concatenate([np.asarray(tuple(position), dtype=float), np.asarray(velocity, dtype=float)])
        p = np.diag([params.p0_pos**2] * 3 + [params.p0_vel**2] * 3)
        return cls(x, p)


@dataclass(frozen=True)
class Innovation:
    anchor: AnchorId
    predicted: float
    measured: float
    innovation: float
    accepted: bool
    reason: str = ""


def check_covariance(p: np.ndarray) -> None:
    """Raise :class:`FilterDivergenceError` unless ``p`` is symmetric PSD."""
    if not np.all(np.isfinite(p)):
        raise FilterDivergenceError("covariance has non-finite entries")
    scale = max(float(np.max(np.abs(p))), 1e-300)
    if float(np.max(np.abs(p - p.T))) > 1e-12 * scale:
        raise FilterDivergenceError("covariance is not symmetric")
    if float(np.linalg.eigvalsh(p)[0]) < -1e-9:
        raise FilterDivergenceError("covariance has a negative eigenvalue")


@lru_cache(maxsize=64)
def _transition(dt: float, q_accel: float) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(3)
    f = np.block([[eye, dt * eye], [np.zeros((3, 3)), eye]])
    q = q_accel**2
    q = np.block(
        [
            [dt**3 / 3 * q * eye, dt**2 / 2 * q * eye],
            [dt**2 / 2 * q * eye, dt * q * eye],
        ]
    )
    f.flags.writeable = False
    q.flags.writeable = False
    return f, q


def predict(state: EkfState, dt: float, params: EkfParams) -> EkfState:
    """Constant-velocity prediction over ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    check_covariance(state.covariance)
    f, q = _transition(float(dt), params.q_accel)
    x = f @ state.state
    p = f @ state.covariance @ f.T + q
    return EkfState(x, 0.5 * (p + p.T))


def _anchor_array(anchors) -> np.ndarray:
    return np.array([tuple(a) for a in anchors], dtype=float).reshape(-1, 3)


def predicted_ranges(state_pos, anchors: Sequence[Point3]) -> np.ndarray:
    """Distance from ``state_pos`` to each anchor."""
    diff = _anchor_array(anchors) - np.asarray(tuple(state_pos), dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=1))


def measurement_jacobian(state_pos, anchors: Sequence[Point3]) -> np.ndarray:
    """Jacobian of :func:`predicted_ranges` with respect to the 6-D state.

    Raises :class:`SingularGeometryError` (naming the anchor's index) when
    an anchor is within ``SINGULAR_EPS`` of ``state_pos``.
    """
    delta = _anchor_array(anchors) - np.asarray(tuple(state_pos), dtype=float)
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    for i, d in enumerate(dist):
        if d <= SINGULAR_EPS:
            raise SingularGeometryError(i, float(d))
    h = np.zeros((len(dist), 6))
    h[:, :3] = -delta / dist[:, None]
    return h


def _joseph(p: np.ndarray, k: np.ndarray, h: np.ndarray, r: np.ndarray) -> np.ndarray:
    a = np.eye(6) - k @ h
    p = a @ p @ a.T + k @ r @ k.T
    return 0.5 * (p + p.T)


def update(
    state: EkfState,
    measurements,
    anchors: Mapping[int, Point3],
    params: EkfParams,
    *,
    batch: bool = False,
    gate: float = DEFAULT_GATE,
) -> tuple[EkfState, list[Innovation]]:
    """Correct ``state`` with range measurements.

    By default ranges are applied one at a time in the given order, each
    linearized at the estimate left by the previous one. With ``batch=True``
    all surviving ranges form one stacked update.

    A range is rejected (and reported, never silently dropped) when it is
    invalid, when the estimate coincides with its anchor, or when its
    innovation exceeds ``gate`` times the predicted innovation std.
    Returns the new state and one :class:`Innovation` per measurement.
    """
    r2 = params.r_range**2
    x = state.state.copy()
    p = state.covariance.copy()
    report: list[Innovation] = []
    stacked: list[tuple[int, np.ndarray, float, float]] = []

    for m in measurements:
        if m.anchor not in anchors:
            raise KeyError(f"unknown anchor 0x{m.anchor:02x}")
        anchor = anchors[m.anchor]
        if not m.valid:
            report.append(Innovation(m.anchor, math.nan, m.distance, math.nan, False, m.reason or "invalid"))
            continue
        try:
            h = measurement_jacobian(x[:3], [anchor])
        except SingularGeometryError:
            report.append(Innovation(m.anchor, 0.0, m.distance, math.nan, False, "singular"))
            continue
        predicted = float(predicted_ranges(x[:3], [anchor])[0])
        innovation = m.distance - predicted
        s = float((h @ p @ h.T)[0, 0]) + r2
        if abs(innovation) > gate * math.sqrt(s):
            report.append(Innovation(m.anchor, predicted, m.distance, innovation, False, "gated"))
            continue
        report.append(Innovation(m.anchor, predicted, m.distance, innovation, True))
        if batch:
            stacked.append((len(report) - 1, h[0], predicted, m.distance))
            continue
        k = p @ h.T / s
        x = x + k[:, 0] * innovation
        p = _joseph(p, k, h, np.array([[r2]]))

    if batch and stacked:
        h = np.array([row for _, row, _, _ in stacked])
        y = np.array([meas - pred for _, _, pred, meas in stacked])
        r = r2 * np.eye(len(stacked))
        s = h @ p @ h.T + r
        k = np.linalg.solve(s, h @ p).T
        x = x + k @ y
        p = _joseph(p, k, h, r)

    return EkfState(x, p), report


def check_geometry(anchors: Sequence[Point3]) -> np.ndarray:
    """Raise :class:`RankDeficiencyError` unless the anchors can fix a 3-D point.

    Returns the anchor coordinates as an ``(n, 3)`` array.
    """
    a = _anchor_array(anchors)
    if len(a) < 4:
        raise RankDeficiencyError(f"need at least 4 anchors for a 3-D fix, got {len(a)}")
    sv = np.linalg.svd(a - a.mean(axis=0), compute_uv=False)
    if sv[0] == 0 or sv[2] / sv[0] < 1e-6:
        raise RankDeficiencyError("anchors are coplanar or collinear; position is ambiguous")
    return a


def _gauss_newton(a: np.ndarray, r: np.ndarray, p: np.ndarray, max_iter: int, tol: float) -> tuple[np.ndarray, float]:
    def residual(q: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum((q - a) ** 2, axis=1)) - r

    res = residual(p)
    cost = float(res @ res)
    for _ in range(max_iter):
        diff = p - a
        dist = np.maximum(np.sqrt(np.sum(diff * diff, axis=1)), SINGULAR_EPS)
        jac = diff / dist[:, None]
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        scale = 1.0
        for _ in range(40):
            candidate = p + scale * step
            cand_res = residual(candidate)
            cand_cost = float(cand_res @ cand_res)
            if cand_cost <= cost:
                break
            scale *= 0.5
        else:
            # no descent along the Gauss-Newton direction: at a minimum
            return p, cost
        p, res, cost = candidate, cand_res, cand_cost
        if float(np.linalg.norm(scale * step)) <= tol * max(1.0, float(np.linalg.norm(p))):
            return p, cost
    raise NoFixError(f"no convergence in {max_iter} iterations")


def solve_multilateration(
    ranges: Sequence[tuple[Point3, float]],
    *,
    max_iter: int = 100,
    tol: float = 1e-12,
    initial=None,
) -> Point3:
    """Least-squares position from ranges to known points.

    Minimizes ``sum((|p - a_i| - r_i)**2)`` by Gauss-Newton with step
    halving. Anchors mounted near one plane (e.g. a ceiling) leave a second
    local minimum mirrored through that plane, so unless ``initial`` is
    given the solve starts from the linearized (differenced) solution, the
    anchor centroid, and the centroid shifted either side of the anchor
    spread, and keeps the lowest-cost result.

    Raises
    ------
    RankDeficiencyError
        Fewer than four anchors, or all anchors (nearly) coplanar.
    NoFixError
        No start converged within ``max_iter`` iterations.
    """
    a = check_geometry([pos for pos, _ in ranges])
    r = np.array([float(d) for _, d in ranges])

    if initial is not None:
        starts = [np.asarray(tuple(initial), dtype=float)]
    else:
        # |p - a_i|^2 - |p - a_0|^2 is linear in p
        lhs = 2.0 * (a[1:] - a[0])
        rhs = (np.sum(a[1:] ** 2, axis=1) - np.sum(a[0] ** 2)) - (r[1:] ** 2 - r[0] ** 2)
        linear, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        centroid = a.mean(axis=0)
        _, sv, vt = np.linalg.svd(a - centroid)
        normal = vt[2] * max(sv[0] / math.sqrt(len(a)), 1.0)
        starts = [p for p in (linear, centroid, centroid + normal, centroid - normal) if np.all(np.isfinite(p))]

    best: tuple[float, np.ndarray] | None = None
    for start in starts:
        try:
            p, cost = _gauss_newton(a, r, start, max_iter, tol)
        except NoFixError:
            continue
        if best is None or cost < best[0]:
            best = (cost, p)
    if best is None:
        raise NoFixError(f"no convergence in {max_iter} iterations")
    return Point3(*best[1])


def anchor_centroid(anchors: Sequence[Point3]) -> Point3:
    return Point3(*_anchor_array(anchors).mean(axis=0))


@dataclass
class Fix:
    """Filter output after one ranging round."""

    round_index: int
    sim_time: int
    position: Point3
    covariance: np.ndarray
    report: list[Innovation] = field(default_factory=list)
    cold_start: bool = False

    @property
    def accepted(self) -> int:
        return sum(1 for r in self.report if r.accepted)

    @property
    def rejected(self) -> int:
        return sum(1 for r in self.report if not r.accepted)

    @property
    def usable(self) -> bool:
        return self.cold_start or self.accepted > 0


class RangeLocalizer:
    """Filter driver that consumes one ranging round at a time.

    The filter is seeded by :func:`solve_multilateration` over the first
    complete round (every scheduled range valid). Partial rounds can leave
    the solve ambiguous, so they are only used after ``max_wait`` rounds
    without a complete one. If the solve fails the anchor centroid is used
    and the round's ranges are applied as ordinary updates.

    In sequential mode (default) the filter predicts over one slot and then
    applies that slot's range, in slot order. In batch mode it predicts over
    the whole round and applies all ranges together.
    """

    def __init__(
        self,
        anchors: Mapping[int, Point3],
        params: EkfParams | None = None,
        *,
        batch: bool = False,
        gate: float = DEFAULT_GATE,
        max_wait: int = 10,
    ) -> None:
        self.anchors = dict(anchors)
        self.params = params or EkfParams()
        self.batch = batch
        self.gate = gate
        self.max_wait = max_wait
        self.state: EkfState | None = None
        self._waited = 0

    def _cold_start(self, measurements) -> bool:
        """Try to seed the filter; True if seeded from a multilateration fix."""
        valid = [m for m in measurements if m.valid]
        complete = len(valid) == len(measurements)
        if not complete and self._waited < self.max_wait:
            self._waited += 1
            return False
        if not valid:
            return False
        if len(valid) >= 4:
            try:
                pos = solve_multilateration([(self.anchors[m.anchor], m.distance) for m in valid])
            except (RankDeficiencyError, NoFixError):
                pass
            else:
                self.state = EkfState.initial(pos, self.params)
                return True
        self.state = EkfState.initial(anchor_centroid(list(self.anchors.values())), self.params)
        return False

    def process_round(self, round_index: int, measurements, sim_time: int) -> Fix | None:
        """Run one round; returns ``None`` while the filter is not yet seeded."""
        skip_predict = False
        if self.state is None:
            if self._cold_start(measurements):
                return Fix(round_index, sim_time, self.state.position, self.state.covariance.copy(), cold_start=True)
            if self.state is None:
                return None
            skip_predict = True

        report: list[Innovation] = []
        if self.batch:
            if not skip_predict:
                self.state = predict(self.state, self.params.dt * len(measurements), self.params)
            self.state, report = update(self.state, measurements, self.anchors, self.params, batch=True, gate=self.gate)
        else:
            for m in measurements:
                if not skip_predict:
                    self.state = predict(self.state, self.params.dt, self.params)
                self.state, rows = update(self.state, [m], self.anchors, self.params, gate=self.gate)
                report.extend(rows)
        return Fix(round_index, sim_time, self.state.position, self.state.covariance.copy(), report)
