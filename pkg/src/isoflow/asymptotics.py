"""Long-time behaviour of periodic flows.

Under the gradient-invertibility criterium every trajectory satisfies
``X(t, x) = x + t xi + Wsharp(X(t, x)) - Wsharp(x)`` with a bounded periodic
corrector, hence ``X(t, x)/t -> xi = <sigma b>/<sigma>``. This module
measures that limit along trajectories and by cell averages, computes the
2D rotation number and builds non-constant invariant functions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import serialize
from .errors import DimensionMismatch, NoNullVector, NonPositiveAverage, WitnessConstant
from .fields import VectorFieldDef, cell_grid
from .flow import DEFAULT_CONFIG, IntegrationConfig, flow_map
from .torus import AffinePlusPeriodic, CriteriumReport, PotentialFrame, cell_average

AT_INFINITY = math.inf


@dataclass(frozen=True, eq=False)
class AsymptoticsReport:
    horizons: np.ndarray  # (nT,)
    seeds: np.ndarray  # (m, d)
    estimates: np.ndarray  # (nT, m, d)
    reference: Optional[np.ndarray] = None
    sup_wsharp: Optional[float] = None

    @property
    def errors(self) -> Optional[np.ndarray]:
        if self.reference is None:
            return None
        return np.linalg.norm(self.estimates - self.reference, axis=-1)

    @property
    def bounds(self) -> Optional[np.ndarray]:
        """(|x| + 2 sup|Wsharp|)/|T| per horizon and seed."""
        if self.sup_wsharp is None:
            return None
        xn = np.linalg.norm(self.seeds, axis=-1)
        return (xn[None, :] + 2 * self.sup_wsharp) / np.abs(self.horizons)[:, None]

    def to_dict(self) -> dict:
        errs, bnds = self.errors, self.bounds
        rows = []
        for i, T in enumerate(self.horizons):
            for j, x in enumerate(self.seeds):
                rows.append({
                    "T": float(T),
                    "seed": x.tolist(),
                    "estimate": self.estimates[i, j].tolist(),
                    "error": None if errs is None else float(errs[i, j]),
                    "bound": None if bnds is None else float(bnds[i, j]),
                })
        return {
            "reference": None if self.reference is None else self.reference.tolist(),
            "sup_wsharp": self.sup_wsharp,
            "rows": rows,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())

    def to_csv(self) -> str:
        d = self.seeds.shape[1]
        errs, bnds = self.errors, self.bounds
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "seed"] + [f"est{k + 1}" for k in range(d)] + ["error", "bound"])
        for i, T in enumerate(self.horizons):
            for j in range(len(self.seeds)):
                w.writerow(serialize.csv_row(
                    [T, j] + list(self.estimates[i, j])
                    + [None if errs is None else errs[i, j], None if bnds is None else bnds[i, j]]
                ))
        return buf.getvalue()


def effective_velocity_flow(
    field: VectorFieldDef,
    x,
    horizons: Sequence[float],
    cfg: IntegrationConfig = DEFAULT_CONFIG,
    criterium: Optional[CriteriumReport] = None,
    reference=None,
    wsharp_n: int = 64,
) -> AsymptoticsReport:
    """X(T, x)/T for every horizon T (either sign) and every seed.

    With a criterium report the reference velocity is its xi and the
    corrector bound is attached; otherwise ``reference`` may be given.
    """
    if not field.periodic:
        raise ValueError("effective velocity needs a periodic field")
    seeds = np.atleast_2d(np.asarray(x, dtype=float))
    if seeds.shape[1] != field.dim:
        raise DimensionMismatch("seed dimension differs from field dimension")
    hs = np.asarray(horizons, dtype=float)
    if np.any(hs == 0):
        raise ValueError("horizons must be nonzero")
    est = np.empty((hs.size, len(seeds), field.dim))
    for sgn in (1.0, -1.0):
        idx = [i for i in np.argsort(np.abs(hs)) if np.sign(hs[i]) == sgn]
        cur, t_cur = seeds.copy(), 0.0
        for i in idx:
            cur = flow_map(field, cur, hs[i] - t_cur, cfg)
            t_cur = hs[i]
            est[i] = cur / hs[i]
    sup_ws = None
    if criterium is not None:
        reference = criterium.xi
        sup_ws = criterium.sup_wsharp(wsharp_n)
    ref = None if reference is None else np.asarray(reference, dtype=float)
    return AsymptoticsReport(hs, seeds, est, ref, sup_ws)


def effective_velocity_average(sigma: Callable, field: VectorFieldDef, n: int = 64) -> np.ndarray:
    """<sigma b>/<sigma> by periodic quadrature."""
    d = field.dim
    mean_sigma = cell_average(lambda p: sigma(p), n, d)
    if not mean_sigma > 0:
        raise NonPositiveAverage(f"<sigma> = {mean_sigma!r}")
    mean_flux = np.atleast_1d(cell_average(lambda p: sigma(p)[..., None] * field(p), n, d))
    return mean_flux / mean_sigma


def rotation_number(sigma: Callable, field: VectorFieldDef, n: int = 64) -> float:
    """gamma = <sigma b_2>/<sigma b_1>; ``AT_INFINITY`` when <sigma b_1> vanishes."""
    if field.dim != 2:
        raise DimensionMismatch("rotation number is defined in dimension 2")
    flux = np.atleast_1d(cell_average(lambda p: sigma(p)[..., None] * field(p), n, 2))
    scale = cell_average(lambda p: sigma(p) * np.linalg.norm(field(p), axis=-1), n, 2)
    if abs(flux[0]) <= 1e-12 * scale:
        return AT_INFINITY
    return float(flux[1] / flux[0])


@dataclass(frozen=True, eq=False)
class ErgodicityWitness:
    v: AffinePlusPeriodic
    alpha: np.ndarray
    sup_b_grad: float
    variance: float
    linear_residual: float
    tol: float = 1e-10

    @property
    def valid(self) -> bool:
        return self.sup_b_grad <= self.tol and self.variance > 0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "sup_b_grad_v": self.sup_b_grad,
            "variance": self.variance,
            "linear_residual": self.linear_residual,
            "valid": self.valid,
        }


def build_nonergodic_witness(
    field: VectorFieldDef, lam, frame: PotentialFrame, n: int = 64, tol: float = 1e-10
) -> ErgodicityWitness:
    """Non-constant periodic v with b . grad v = 0, built from b . lambda = 0.

    The coefficients solve alpha_1 lambda + sum_k alpha_k <grad v_k> = 0
    (smallest right singular vector), and
    v = alpha_1 lambda . x + sum_{k>=2} alpha_k v_k.
    """
    d = field.dim
    if frame.dim != d:
        raise DimensionMismatch("frame and field dimensions differ")
    lam = np.asarray(lam, dtype=float)
    pts = cell_grid(n, d)
    b = field(pts)
    if np.abs(b @ lam).max() > tol * max(1.0, np.abs(b).max()):
        raise ValueError("b . lambda does not vanish on the probe grid")
    means = [np.atleast_1d(cell_average(v.grad, n, d)) for v in frame.potentials[1:]]
    A = np.column_stack([lam] + means)
    _, s, vt = np.linalg.svd(A)
    if s[-1] > 1e-10 * s[0]:
        raise NoNullVector(f"[lambda, <grad v_2>, ...] is nonsingular (smallest singular value {s[-1]:.3g})")
    alpha = vt[-1]
    lin = AffinePlusPeriodic.linear_only(alpha[0] * lam)
    v = AffinePlusPeriodic.combine([1.0] + list(alpha[1:]), [lin] + list(frame.potentials[1:]), name="witness")
    vals = v(pts)
    sup_bg = float(np.abs(np.sum(b * v.grad(pts), axis=-1)).max())
    var = float(vals.var())
    spread = sum(abs(a) * float(np.ptp(np.broadcast_to(p.periodic(pts), pts.shape[:1])))
                 for a, p in zip(alpha[1:], frame.potentials[1:]))
    if var <= 1e-12 * spread**2 or var <= 1e-28:
        raise WitnessConstant(f"invariant function is constant (variance {var:.3g})")
    return ErgodicityWitness(v, alpha, sup_bg, var, float(np.linalg.norm(v.linear)), tol)
