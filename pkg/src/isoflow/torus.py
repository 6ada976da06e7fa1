"""Invariant measures of periodic flows on the torus R^d / Z^d.

Contents: cell averages, potentials with periodic gradients, cross
products of gradients, the transport-matrix construction (sigma, M, W,
xi) and a slab test that certifies non-existence of a positive periodic
invariant measure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from . import serialize
from .errors import SigmaVanishes, SingularAverage
from .fields import VectorFieldDef, cell_grid
from .flow import DEFAULT_CONFIG, IntegrationConfig, flow_map

MAX_DENSE_DIM = 3


def cell_average(f: Callable[[np.ndarray], np.ndarray], n: int = 64, dim: int = 1):
    """Periodic rectangle-rule average of ``f`` over [0,1)^dim on ``n**dim`` nodes.

    ``f`` may return scalars, vectors or matrices per point; the average is
    taken over the sample axis.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"dense quadrature limited to dimension <= {MAX_DENSE_DIM}")
    pts = cell_grid(n, dim)
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 0:
        return float(vals)
    if vals.shape[0] != pts.shape[0]:
        return vals  # constant-valued f
    out = vals.mean(axis=0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class AffinePlusPeriodic:
    """v(x) = linear . x + p(x) with p periodic, so grad v is periodic."""

    linear: np.ndarray
    periodic: Callable[[np.ndarray], np.ndarray]
    periodic_grad: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @property
    def dim(self) -> int:
        return int(np.size(self.linear))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.linear, dtype=float) + np.broadcast_to(self.periodic(x), x.shape[:-1])

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.linear, dtype=float) + np.broadcast_to(self.periodic_grad(x), x.shape)

    @classmethod
    def linear_only(cls, ell, name: str = "") -> "AffinePlusPeriodic":
        ell = np.asarray(ell, dtype=float)
        return cls(ell, lambda x: np.zeros(np.shape(x)[:-1]), lambda x: np.zeros(np.shape(x)), name)

    @classmethod
    def combine(cls, coeffs: Sequence[float], items: Sequence["AffinePlusPeriodic"], name: str = "") -> "AffinePlusPeriodic":
        """The linear combination sum_k coeffs[k] * items[k]."""
        coeffs = [float(c) for c in coeffs]
        items = list(items)
        ell = sum(c * np.asarray(v.linear, dtype=float) for c, v in zip(coeffs, items))

        def p(x):
            return sum(c * np.broadcast_to(v.periodic(x), np.shape(x)[:-1]) for c, v in zip(coeffs, items))

        def dp(x):
            return sum(c * np.broadcast_to(v.periodic_grad(x), np.shape(x)) for c, v in zip(coeffs, items))

        return cls(np.asarray(ell, dtype=float), p, dp, name)


@dataclass(frozen=True, eq=False)
class PotentialFrame:
    """V = (v_1, ..., v_d); ``jacobian`` returns DV with DV[..., i, j] = d_i v_j."""

    potentials: tuple
    name: str = ""

    def __post_init__(self):
        dims = {v.dim for v in self.potentials}
        if len(dims) != 1 or dims.pop() != len(self.potentials):
            raise ValueError("a frame in dimension d needs d potentials on R^d")

    @property
    def dim(self) -> int:
        return len(self.potentials)

    def __call__(self, x) -> np.ndarray:
        return np.stack([v(x) for v in self.potentials], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        return np.stack([v.grad(x) for v in self.potentials], axis=-1)

    def linear_parts(self) -> np.ndarray:
        """Matrix whose column j is the linear part of v_j (the exact <DV>)."""
        return np.stack([np.asarray(v.linear, dtype=float) for v in self.potentials], axis=-1)


def cross_product(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Generalised cross product of d-1 vectors in R^d (vectorised).

    Coordinate k is ``(-1)^(k+1)`` times the minor obtained by deleting row
    k of the d x (d-1) matrix with the given vectors as columns. For d=2 it
    is the clockwise rotation (a, b) -> (b, -a); for d=3 the usual cross
    product.
    """
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    d = len(vecs) + 1
    if d == 1:
        raise ValueError("cross product needs d >= 2")
    shape = np.broadcast_shapes(*[v.shape for v in vecs])
    if shape[-1] != d:
        raise ValueError(f"need {d - 1} vectors of dimension {d}")
    mat = np.stack([np.broadcast_to(v, shape) for v in vecs], axis=-1)  # (..., d, d-1)
    out = np.empty(shape)
    rows = np.arange(d)
    for k in range(d):
        minor = mat[..., rows != k, :]
        out[..., k] = (-1) ** k * (np.linalg.det(minor) if d > 2 else minor[..., 0, 0])
    return out


def rotate_clockwise(v) -> np.ndarray:
    """R_perp: (a, b) -> (b, -a)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class CrossGradients:
    sigma: Callable[[np.ndarray], np.ndarray]
    sigma_b: Callable[[np.ndarray], np.ndarray]
    dim: int

    def b(self, x) -> np.ndarray:
        return self.sigma_b(x) / self.sigma(x)[..., None]

    def as_field(self, name: str = "") -> VectorFieldDef:
        return VectorFieldDef(self.b, self.dim, periodic=True, name=name)


def cross_gradients(frame: PotentialFrame, probe_n: int = 32) -> CrossGradients:
    """sigma = det(DV) and sigma*b = R_perp grad v_2 (d=2) or grad v_2 x ... x grad v_d.

    In d=1 the empty product gives sigma*b = 1 and sigma = v_1'.
    Raises :class:`SigmaVanishes` if sigma vanishes or changes sign on the
    ``probe_n**d`` probe grid.
    """
    d = frame.dim

    def sigma(x):
        return np.linalg.det(frame.jacobian(x))

    if d == 1:
        def sigma_b(x):
            return np.ones(np.shape(x))
    else:
        def sigma_b(x):
            return cross_product([v.grad(x) for v in frame.potentials[1:]])

    probe = sigma(cell_grid(probe_n, d))
    if not (np.all(probe > 0) or np.all(probe < 0)):
        raise SigmaVanishes(f"det(DV) vanishes or changes sign on the probe grid (min={probe.min():.3g})")
    return CrossGradients(sigma, sigma_b, d)


@dataclass(frozen=True, eq=False)
class CriteriumReport:
    sigma: Callable
    b: Callable
    M: np.ndarray
    W: PotentialFrame
    xi: np.ndarray
    residuals: dict
    frame: PotentialFrame = dc_field(repr=False, default=None)
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        r = self.residuals
        return bool(
            r["min_sigma"] > 0
            and r["max_transport_residual"] <= self.tol
            and r["mean_DW_minus_I"] <= self.tol
        )

    def wsharp(self, x) -> np.ndarray:
        """The periodic corrector x - W(x)."""
        x = np.asarray(x, dtype=float)
        return x - self.W(x)

    def sup_wsharp(self, n: int = 64) -> float:
        return float(np.max(np.linalg.norm(self.wsharp(cell_grid(n, self.W.dim)), axis=-1)))

    def field(self, name: str = "") -> VectorFieldDef:
        return VectorFieldDef(self.b, self.W.dim, periodic=True, name=name)

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "xi": self.xi.tolist(),
            "residuals": dict(self.residuals),
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())


def build_transport_matrix(frame: PotentialFrame, n: int = 64) -> CriteriumReport:
    """M = <DV>^{-1}, W = M^T V, xi = M^T e_1, with residuals on an n^d grid."""
    d = frame.dim
    cg = cross_gradients(frame)
    mean_dv = np.atleast_2d(cell_average(frame.jacobian, n, d))
    det = np.linalg.det(mean_dv)
    if abs(det) <= 1e-12 * max(1.0, np.abs(mean_dv).max() ** d):
        raise SingularAverage(f"det<DV> = {det:.3g}")
    M = np.linalg.inv(mean_dv)
    W = PotentialFrame(
        tuple(AffinePlusPeriodic.combine(M[:, j], frame.potentials, name=f"w{j + 1}") for j in range(d)),
        name=f"W[{frame.name}]",
    )
    xi = M.T[:, 0].copy()

    pts = cell_grid(n, d)
    sig = cg.sigma(pts)
    b = cg.b(pts)
    dv = frame.jacobian(pts)
    dw = W.jacobian(pts)
    transport = np.einsum("...ij,...i->...j", dw, b) - xi
    bdv = np.einsum("...ij,...i->...j", dv, b)
    target = np.zeros(d)
    target[0] = 1.0
    residuals = {
        "min_sigma": float(sig.min()),
        "max_transport_residual": float(np.abs(transport).max()),
        "mean_DW_minus_I": float(np.abs(dw.mean(axis=0) - np.eye(d)).max()),
        "max_b_dot_grad_v_minus_e1": float(np.abs(bdv - target).max()),
        "quasi_affinity_gap": float(abs(sig.mean() - det)),
    }
    return CriteriumReport(cg.sigma, cg.b, M, W, xi, residuals, frame)


@dataclass(frozen=True)
class SlabVerdict:
    verdict: str  # "NoInvariantMeasure" | "Inconclusive"
    axis: int
    positive_slice: Optional[float] = None
    negative_slice: Optional[float] = None

    @property
    def no_invariant_measure(self) -> bool:
        return self.verdict == "NoInvariantMeasure"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "axis": self.axis,
            "positive_slice": self.positive_slice,
            "negative_slice": self.negative_slice,
        }


def slab_sign_detector(
    field: VectorFieldDef, k: int, n_slices: int = 128, n_transverse: int = 128, margin: float = 1e-12
) -> SlabVerdict:
    """One-sided non-existence test for a positive periodic invariant measure.

    Looks for a slice ``x_k = c_+`` where ``b_k > margin`` at every transverse
    sample and a slice ``x_k = c_-`` where ``b_k < -margin`` everywhere.
    Both found means no positive periodic invariant measure exists (the
    slice flux of sigma*b must be the same constant on every slice). ``k`` is
    zero-based.
    """
    if not field.periodic:
        raise ValueError("slab detector requires a periodic field")
    d = field.dim
    if not 0 <= k < d:
        raise ValueError(f"axis {k} out of range for dimension {d}")
    trans = cell_grid(n_transverse, d - 1) if d > 1 else np.zeros((1, 0))
    pos = neg = None
    for i in range(n_slices):
        c = i / n_slices
        pts = np.insert(trans, k, c, axis=1)
        bk = field(pts)[:, k]
        if pos is None and np.all(bk > margin):
            pos = c
        if neg is None and np.all(bk < -margin):
            neg = c
        if pos is not None and neg is not None:
            return SlabVerdict("NoInvariantMeasure", k, pos, neg)
    return SlabVerdict("Inconclusive", k, pos, neg)


@dataclass(frozen=True)
class InvarianceReport:
    times: tuple
    values: tuple
    reference: float

    @property
    def deviations(self) -> tuple:
        return tuple(abs(v - self.reference) for v in self.values)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.values else 0.0

    def to_dict(self) -> dict:
        return {
            "times": list(self.times),
            "values": list(self.values),
            "reference": self.reference,
            "max_deviation": self.max_deviation,
        }


def invariance_check(
    sigma: Callable,
    field: VectorFieldDef,
    phi: Callable,
    times: Sequence[float],
    n: int = 64,
    cfg: IntegrationConfig = DEFAULT_CONFIG,
) -> InvarianceReport:
    """Compare int phi(X(t, x)) sigma(x) dx with its t=0 value for each t.

    Quadrature on the ``n**d`` cell nodes; flows are chained through the
    sorted times using the semigroup property.
    """
    d = field.dim
    pts = cell_grid(n, d)
    w = np.broadcast_to(np.asarray(sigma(pts), dtype=float), pts.shape[:1])
    if np.any(w <= 0):
        raise ValueError("sigma must be positive on the quadrature nodes")
    ref = float(np.mean(phi(pts) * w))
    order = sorted(range(len(times)), key=lambda i: (np.sign(times[i]), abs(times[i])))
    results = {}
    for sgn in (1.0, -1.0):
        cur, t_cur = pts, 0.0
        for i in order:
            t = float(times[i])
            if t == 0.0:
                results[i] = ref
                continue
            if np.sign(t) != sgn:
                continue
            cur = flow_map(field, cur, t - t_cur, cfg)
            t_cur = t
            results[i] = float(np.mean(phi(cur) * w))
    return InvarianceReport(tuple(float(t) for t in times), tuple(results[i] for i in range(len(times))), ref)
