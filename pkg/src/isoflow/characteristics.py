"""Conductivity reconstruction by the method of characteristics.

For a level function ``u`` increasing along the flow of ``b``, every point
``x`` of a band reaches the level set ``u = c_u`` at a unique time
``tau(x)``; then

    sigma(x) = exp( int_0^tau(x) (div b)(X(s, x)) ds )

is positive and solves div(sigma b) = 0 in the band.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import serialize
from .errors import (
    BandExit,
    GridTooCoarse,
    IsoflowError,
    MonotonicityViolated,
    NotInBand,
    OnCriticalLevel,
)
from .fields import ScalarFieldDef, VectorFieldDef
from .flow import BLEW_UP, STOPPED, DEFAULT_CONFIG, IntegrationConfig, Trajectory, integrate, path_integral

LEVEL_REL_TOL = 1e-12
F_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LevelSpec:
    potential: ScalarFieldDef
    level: float
    band: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        lo, hi = self.band
        if not lo < self.level < hi:
            raise ValueError(f"level {self.level} must lie strictly inside band {self.band}")

    @property
    def tolerance(self) -> float:
        """Distance to the level below which a point counts as on it."""
        lo, hi = self.band
        if math.isfinite(lo) and math.isfinite(hi):
            scale = hi - lo
        else:
            finite = [abs(e - self.level) for e in (lo, hi) if math.isfinite(e)]
            scale = max([1.0, abs(self.level)] + finite)
        return LEVEL_REL_TOL * scale

    def in_band(self, value: float) -> bool:
        lo, hi = self.band
        return lo < value < hi


@dataclass(frozen=True, eq=False)
class HittingTimeResult:
    tau: float
    bracket_width: float
    monotonicity_margin: float
    iterations: int
    trajectory: Trajectory = dc_field(repr=False)
    level_residual: float = 0.0


def hitting_time(
    field: VectorFieldDef, spec: LevelSpec, x, cfg: IntegrationConfig = DEFAULT_CONFIG
) -> HittingTimeResult:
    """Unique time tau with u(X(tau, x)) = c_u.

    Integrates in the direction that moves ``u`` toward the level, checking
    ``(b . grad u)(X) > 0`` at every accepted step, until the level is
    crossed; the crossing step is then refined with Brent's method on the
    dense output.
    """
    x = np.asarray(x, dtype=float)
    u = spec.potential
    ux = float(u(x))
    if not spec.in_band(ux):
        raise NotInBand(f"u(x) = {ux!r} outside band {spec.band}")
    c = spec.level
    fprime0 = float(np.dot(field(x), u.grad(x)))
    if fprime0 <= 0:
        raise MonotonicityViolated(f"(b . grad u)(x) = {fprime0!r} <= 0 at the start point")
    if abs(ux - c) <= spec.tolerance:
        traj = integrate(field, x, 0.0, cfg)
        return HittingTimeResult(0.0, 0.0, fprime0, 0, traj, ux - c)

    sign = 1.0 if ux < c else -1.0
    margin = [fprime0]
    state = {"exit": None}

    def stop(t_old, t_new, y):
        fp = float(np.dot(field(y), u.grad(y)))
        margin[0] = min(margin[0], fp)
        if fp <= 0:
            raise MonotonicityViolated(f"(b . grad u) = {fp!r} <= 0 at t = {t_new!r}")
        val = float(u(y))
        if sign * (val - c) >= 0:
            return True
        if not spec.in_band(val):
            state["exit"] = val
            return True
        return False

    traj = integrate(field, x, sign * cfg.max_time, cfg, stop=stop, open_ended=True)
    if state["exit"] is not None:
        raise BandExit(f"trajectory left the band at u = {state['exit']!r} before reaching {c}")
    if traj.status != STOPPED:
        last = float(u(traj.states[-1]))
        if traj.status == BLEW_UP:
            raise BandExit(f"trajectory escaped at t = {traj.t_star!r} with u = {last!r} before reaching {c}")
        raise BandExit(f"max_time reached before the level; asymptotic level c ~ {last!r}")

    t_lo, t_hi = float(traj.times[-2]), float(traj.times[-1])

    def g(t):
        return float(u(traj(t))) - c

    g_lo, g_hi = g(t_lo), g(t_hi)
    if g_hi == 0.0:
        tau, iters = t_hi, 0
    elif g_lo == 0.0:
        tau, iters = t_lo, 0
    else:
        a, b_ = sorted((t_lo, t_hi))
        tau, r = brentq(g, a, b_, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True)
        iters = r.iterations
    resid = g(tau)
    if abs(resid) > F_TOL * max(1.0, abs(c)):
        raise BandExit(f"level refinement did not converge (residual {resid!r})")
    return HittingTimeResult(float(tau), abs(t_hi - t_lo), margin[0], iters, traj, resid)


def _div_integrand(field: VectorFieldDef) -> Callable:
    return lambda pts: field.div(pts)


def reconstruct_sigma(field: VectorFieldDef, spec: LevelSpec, x, cfg: IntegrationConfig = DEFAULT_CONFIG) -> float:
    """sigma(x) = exp(int_0^tau(x) div b(X(s, x)) ds)."""
    return _sigma_tau(field, spec, x, cfg)[0]


def _sigma_tau(field, spec, x, cfg):
    res = hitting_time(field, spec, x, cfg)
    if res.tau == 0.0:
        return 1.0, 0.0
    integral = path_integral(_div_integrand(field), res.trajectory, 0.0, res.tau)
    return math.exp(integral), res.tau


@dataclass(frozen=True, eq=False)
class SigmaField:
    points: np.ndarray
    sigma: np.ndarray  # NaN where the point failed
    tau: np.ndarray
    u: np.ndarray
    status: tuple  # "ok" or the error class name
    spec: LevelSpec = dc_field(repr=False, default=None)
    axes: Optional[tuple] = None  # coordinate axes when points form a tensor grid

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "ok" for s in self.status])

    def to_rows(self):
        d = self.points.shape[1]
        for p, u, t, s, st in zip(self.points, self.u, self.tau, self.sigma, self.status):
            good = st == "ok"
            yield list(p) + [u, t if good else None, s if good else None, st]

    def to_csv(self) -> str:
        d = self.points.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(d)] + ["u", "tau", "sigma", "status"])
        for row in self.to_rows():
            w.writerow(serialize.csv_row(row))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "level": self.spec.level if self.spec is not None else None,
            "band": list(self.spec.band) if self.spec is not None else None,
            "points": [
                {"x": list(map(float, p)), "u": float(u),
                 "tau": float(t) if st == "ok" else None,
                 "sigma": float(s) if st == "ok" else None,
                 "status": st}
                for p, u, t, s, st in zip(self.points, self.u, self.tau, self.sigma, self.status)
            ],
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())


def sigma_on_grid(
    field: VectorFieldDef,
    spec: LevelSpec,
    grid,
    cfg: IntegrationConfig = DEFAULT_CONFIG,
    threads: int = 1,
    axes: Optional[Sequence[np.ndarray]] = None,
) -> SigmaField:
    """Per-point sigma and tau; failures are recorded by error name, not raised."""
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    uvals = np.asarray(spec.potential(pts), dtype=float)

    def one(i):
        try:
            s, t = _sigma_tau(field, spec, pts[i], cfg)
            return s, t, "ok"
        except IsoflowError as exc:
            return math.nan, math.nan, exc.name

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(len(pts))))
    else:
        out = [one(i) for i in range(len(pts))]
    sig = np.array([o[0] for o in out])
    tau = np.array([o[1] for o in out])
    status = tuple(o[2] for o in out)
    return SigmaField(pts, sig, tau, uvals, status, spec, tuple(axes) if axes is not None else None)


@dataclass(frozen=True)
class ResidualReport:
    max: float
    mean: float
    h: float
    grid: int

    def to_dict(self) -> dict:
        return {"max": self.max, "mean": self.mean, "h": self.h, "grid": self.grid}

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())


def _normalized_residual(grad_sigma, sigma, b, divb) -> np.ndarray:
    num = np.abs(np.sum(grad_sigma * b, axis=-1) + sigma * divb)
    return num / (np.abs(sigma) * np.linalg.norm(b, axis=-1))


def pde_residual(sigma: SigmaField, field: VectorFieldDef, h: Optional[float] = None) -> ResidualReport:
    """Normalised residual |grad sigma . b + sigma div b| / (|sigma| |b|) on a tensor grid.

    Central differences with the grid spacing at interior nodes where every
    stencil neighbour was reconstructed.
    """
    if sigma.axes is None:
        raise ValueError("pde_residual needs a tensor-grid SigmaField (pass axes to sigma_on_grid)")
    axes = [np.asarray(a, dtype=float) for a in sigma.axes]
    if any(a.size < 3 for a in axes):
        raise GridTooCoarse("need at least 3 points per axis")
    spacing = [float(np.mean(np.diff(a))) for a in axes]
    if h is not None and not np.allclose(spacing, h, rtol=1e-6):
        raise ValueError(f"grid spacing {spacing} does not match h={h}")
    shape = tuple(a.size for a in axes)
    d = len(axes)
    s = sigma.sigma.reshape(shape)
    pts = sigma.points.reshape(shape + (d,))
    inner = tuple(slice(1, -1) for _ in range(d))
    grad = np.empty(tuple(n - 2 for n in shape) + (d,))
    for k in range(d):
        fwd = [slice(1, -1)] * d
        bwd = [slice(1, -1)] * d
        fwd[k] = slice(2, None)
        bwd[k] = slice(None, -2)
        grad[..., k] = (s[tuple(fwd)] - s[tuple(bwd)]) / (2 * spacing[k])
    xc = pts[inner]
    res = _normalized_residual(grad, s[inner], field(xc), field.div(xc))
    good = np.isfinite(res)
    if not np.any(good):
        raise GridTooCoarse("no interior point with a complete stencil")
    return ResidualReport(float(res[good].max()), float(res[good].mean()), float(max(spacing)), int(good.sum()))


def pde_residual_at(
    sigma: Callable, field: VectorFieldDef, centers, h: float
) -> ResidualReport:
    """Stencil version: evaluate ``sigma`` at ``centers +- h e_k`` and difference.

    ``sigma`` maps a single point to a real.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    n, d = centers.shape
    s0 = np.array([sigma(c) for c in centers])
    grad = np.empty((n, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        sp = np.array([sigma(c + e) for c in centers])
        sm = np.array([sigma(c - e) for c in centers])
        grad[:, k] = (sp - sm) / (2 * h)
    res = _normalized_residual(grad, s0, field(centers), field.div(centers))
    return ResidualReport(float(res.max()), float(res.mean()), float(h), int(n))


def band_classify(potential: ScalarFieldDef, x) -> int:
    """Index j with c_j < u(x) < c_{j+1} over the potential's critical values."""
    crit = potential.critical_values
    if crit is None:
        return 0
    val = float(potential(np.asarray(x, dtype=float)))
    c = np.asarray(crit, dtype=float)
    finite = c[np.isfinite(c)]
    scale = max(1.0, float(np.abs(finite).max()) if finite.size else 1.0)
    for j, cj in enumerate(c):
        if math.isfinite(cj) and abs(val - cj) <= LEVEL_REL_TOL * scale:
            raise OnCriticalLevel(f"u(x) = {val!r} equals critical value c_{j} = {cj!r}")
    if not c[0] < val < c[-1]:
        raise ValueError(f"u(x) = {val!r} outside [{c[0]}, {c[-1]}]")
    return int(np.searchsorted(c, val, side="right") - 1)
