"""Adaptive integration of the flow X'(t, x) = b(X(t, x)).

The stepper is scipy's Dormand-Prince 8(5,3) pair (``DOP853``) driven one
step at a time so that escape-radius blow-up detection, step-collapse
detection and caller-supplied stopping rules can act between steps.
Backward time integrates the negated field in the reflected time
``s = -t``, so both directions share one code path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .errors import BlowUp, IntervalNotCovered
from .fields import VectorFieldDef, _as_points
from . import serialize

COMPLETED = "completed"
BLEW_UP = "blew_up"
MAX_TIME = "max_time_reached"
STOPPED = "stopped"

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    blowup_radius: float = 1e6
    max_time: float = 1e4
    dense_output: bool = True

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.blowup_radius <= 0 or self.max_time <= 0 or self.max_step <= 0:
            raise ValueError("radius, max_time and max_step must be positive")

    def tightened(self, factor: float) -> "IntegrationConfig":
        return replace(self, rel_tol=self.rel_tol / factor, abs_tol=self.abs_tol / factor)


DEFAULT_CONFIG = IntegrationConfig()


class _Constant:
    def __init__(self, y):
        self.y = np.asarray(y, dtype=float)

    def __call__(self, s):
        s = np.asarray(s)
        if s.ndim == 0:
            return self.y.copy()
        return np.repeat(self.y[:, None], s.size, axis=1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """An integrated flow path with its dense-output interpolant.

    ``times`` are physical times (decreasing for backward trajectories);
    the segment interpolants are kept in the internal reflected time.
    """

    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    status: str
    t_star: Optional[float] = None
    direction: float = 1.0
    _segments: list = dc_field(default_factory=list, repr=False)

    @property
    def dim(self) -> int:
        return self.x0.size

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def covered(self) -> tuple:
        return tuple(sorted((0.0, self.t_end)))

    def _s_knots(self) -> np.ndarray:
        return self.direction * self.times

    def _check_covered(self, t) -> None:
        lo, hi = self.covered
        slack = 1e-12 * max(1.0, abs(self.t_end))
        t = np.asarray(t)
        if np.any(t < lo - slack) or np.any(t > hi + slack):
            raise IntervalNotCovered(f"time outside covered interval [{lo}, {hi}]")

    def __call__(self, t):
        self._check_covered(t)
        t = np.asarray(t, dtype=float)
        s = np.atleast_1d(self.direction * t)
        knots = self._s_knots()
        if len(self._segments) == 0:
            out = np.repeat(self.x0[None, :], s.size, axis=0)
        else:
            idx = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(self._segments) - 1)
            out = np.empty((s.size, self.dim))
            for j in np.unique(idx):
                m = idx == j
                out[m] = self._segments[j](s[m]).T
        return out[0] if t.ndim == 0 else out.reshape(t.shape + (self.dim,))

    def to_rows(self):
        for t, y in zip(self.times, self.states):
            yield [float(t)] + [float(v) for v in y]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{k + 1}" for k in range(self.dim)])
        for row in self.to_rows():
            w.writerow(serialize.csv_row(row))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "status": self.status,
            "t_star": self.t_star,
            "t": self.times.tolist(),
            "states": self.states.tolist(),
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())


def _point(field: VectorFieldDef, x) -> np.ndarray:
    x = _as_points(x, field.dim)
    if x.ndim != 1:
        raise ValueError("expected a single point")
    return x.astype(float).copy()


def integrate(
    field: VectorFieldDef,
    x,
    t_end: float,
    cfg: IntegrationConfig = DEFAULT_CONFIG,
    stop: Optional[Callable[[float, float, np.ndarray], bool]] = None,
    open_ended: bool = False,
) -> Trajectory:
    """Integrate one trajectory from ``x`` to ``t_end`` (either sign).

    ``stop(t_old, t_new, y_new)`` is called after every accepted step; a
    true return ends the integration with status ``"stopped"``.  With
    ``open_ended`` reaching ``t_end`` reports ``"max_time_reached"``.
    """
    x = _point(field, x)
    sign = 1.0 if t_end >= 0 else -1.0
    span = abs(float(t_end))
    if span == 0.0:
        return Trajectory(x, np.zeros(1), x[None, :].copy(), COMPLETED, direction=sign,
                          _segments=[_Constant(x)])

    solver = DOP853(
        lambda s, y: sign * field(y),
        0.0,
        x.copy(),
        span,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
    )
    knots = [0.0]
    states = [x.copy()]
    segments = []
    status = MAX_TIME if open_ended else COMPLETED
    t_star = None
    radius = cfg.blowup_radius
    while solver.status == "running":
        s_old = solver.t
        solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            status, t_star = BLEW_UP, sign * s_old
            break
        knots.append(solver.t)
        states.append(solver.y.copy())
        segments.append(solver.dense_output())
        if np.linalg.norm(solver.y) >= radius:
            seg = segments[-1]
            if np.linalg.norm(seg(s_old)) >= radius:
                s_cross = s_old
            else:
                s_cross = brentq(lambda s: np.linalg.norm(seg(s)) - radius, s_old, solver.t,
                                 xtol=1e-14, rtol=4 * np.finfo(float).eps)
            status, t_star = BLEW_UP, sign * s_cross
            break
        if solver.step_size < 1e-14 * span and solver.t < span:
            status, t_star = BLEW_UP, sign * solver.t
            break
        if stop is not None and stop(sign * s_old, sign * solver.t, solver.y):
            status = STOPPED
            break
    if not segments:
        segments = [_Constant(x)]
    return Trajectory(
        x0=x,
        times=sign * np.asarray(knots),
        states=np.asarray(states),
        status=status,
        t_star=t_star,
        direction=sign,
        _segments=segments,
    )


def advance_flow(field: VectorFieldDef, x, t: float, cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Return X(t, x); raises :class:`BlowUp` if the escape radius is hit first."""
    traj = integrate(field, x, t, cfg)
    if traj.status == BLEW_UP:
        raise BlowUp(traj.t_star, traj.states[-1])
    return traj.states[-1].copy()


def flow_map(field: VectorFieldDef, points, t: float, cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """X(t, x) for a batch of points integrated as one system.

    The batch shares step sizes. Tolerances are divided by sqrt(N) so the
    RMS error norm of the stepper bounds the per-point error as well.
    """
    pts = np.array(_as_points(points, field.dim), dtype=float)
    shape = pts.shape
    pts = pts.reshape(-1, field.dim)
    n, d = pts.shape
    if t == 0 or n == 0:
        return pts.reshape(shape)
    sign = 1.0 if t >= 0 else -1.0
    scale = math.sqrt(n)
    solver = DOP853(
        lambda s, y: (sign * field(y.reshape(n, d))).ravel(),
        0.0,
        pts.ravel(),
        abs(float(t)),
        rtol=cfg.rel_tol / scale,
        atol=cfg.abs_tol / scale,
        max_step=cfg.max_step,
    )
    while solver.status == "running":
        s_old = solver.t
        solver.step()
        y = solver.y.reshape(n, d)
        if solver.status == "failed" or not np.all(np.isfinite(y)):
            raise BlowUp(sign * s_old)
        if np.max(np.linalg.norm(y, axis=1)) >= cfg.blowup_radius:
            raise BlowUp(sign * solver.t)
    return solver.y.reshape(shape).copy()


def path_integral(g: Callable[[np.ndarray], np.ndarray], traj: Trajectory, t0: float, t1: float) -> float:
    """Integral of ``g(X(s, x))`` over ``s`` from ``t0`` to ``t1``.

    Ten-point Gauss-Legendre quadrature on every dense-output segment that
    meets the interval.
    """
    traj._check_covered([t0, t1])
    if t0 == t1:
        return 0.0
    sgn_out = 1.0
    if t1 < t0:
        t0, t1 = t1, t0
        sgn_out = -1.0
    # work in the internal time where knots increase
    a, c = sorted((traj.direction * t0, traj.direction * t1))
    knots = traj._s_knots()
    total = 0.0
    if len(knots) < 2:
        lo_hi = [(a, c, traj._segments[0])]
    else:
        lo_hi = []
        for j, seg in enumerate(traj._segments):
            lo, hi = max(knots[j], a), min(knots[j + 1], c)
            if hi > lo:
                lo_hi.append((lo, hi, seg))
    for lo, hi, seg in lo_hi:
        half = 0.5 * (hi - lo)
        s = lo + half * (_GL_NODES + 1.0)
        pts = seg(s).T
        vals = np.broadcast_to(np.asarray(g(pts), dtype=float), s.shape)
        total += half * float(np.dot(_GL_WEIGHTS, vals))
    return sgn_out * total


@dataclass(frozen=True)
class MaximalIntervalEstimate:
    tau_minus: float
    tau_plus: float
    minus_finite: bool
    plus_finite: bool
    minus_uncertainty: float = 0.0
    plus_uncertainty: float = 0.0

    def __post_init__(self):
        if not self.tau_minus < 0 < self.tau_plus:
            raise ValueError("need tau_minus < 0 < tau_plus")

    def to_dict(self) -> dict:
        return {
            "tau_minus": self.tau_minus,
            "tau_plus": self.tau_plus,
            "minus_finite": self.minus_finite,
            "plus_finite": self.plus_finite,
            "minus_uncertainty": self.minus_uncertainty,
            "plus_uncertainty": self.plus_uncertainty,
        }


def _escape_end(field, x, sign, cfg):
    """One-sided endpoint: (tau, finite, uncertainty)."""
    far = replace(cfg, blowup_radius=cfg.blowup_radius * 1e6)
    traj = integrate(field, x, sign * cfg.max_time, far, open_ended=True)
    if traj.status != BLEW_UP:
        return sign * math.inf, False, 0.0
    norms = np.linalg.norm(traj.states, axis=1)
    hit = np.flatnonzero(norms >= cfg.blowup_radius)
    t_far = traj.t_star
    if hit.size == 0 or hit[0] == 0:
        t_near = t_far
    else:
        j = hit[0]
        t_near = brentq(lambda t: np.linalg.norm(traj(t)) - cfg.blowup_radius,
                        traj.times[j - 1], traj.times[j], xtol=1e-14)
    if abs(t_far - t_near) > 1e-3 * max(1.0, abs(t_near)):
        # escaping, but the escape times do not converge: unbounded at infinite time
        return sign * math.inf, False, 0.0
    y = traj(t_far)
    speed = np.linalg.norm(field(y))
    unc = float(np.linalg.norm(y) / speed) if speed > 0 else 0.0
    return float(t_far), True, unc


def estimate_maximal_interval(
    field: VectorFieldDef, x, cfg: IntegrationConfig = DEFAULT_CONFIG
) -> MaximalIntervalEstimate:
    """Estimate the maximal existence interval (tau_-, tau_+) of X(., x).

    Endpoints are escape times at radius ``1e6 * blowup_radius`` and are
    declared finite only when they agree with the escape time at
    ``blowup_radius``. Reaching ``max_time`` is reported as presumed infinite.
    Bounded periodic fields have global solutions, so no integration is done.
    """
    _point(field, x)
    if field.periodic:
        return MaximalIntervalEstimate(-math.inf, math.inf, False, False)
    tp, fp, up = _escape_end(field, x, 1.0, cfg)
    tm, fm, um = _escape_end(field, x, -1.0, cfg)
    return MaximalIntervalEstimate(tm, tp, fm, fp, um, up)
