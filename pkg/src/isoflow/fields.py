"""Scalar and vector field definitions with finite-difference fallbacks.

All evaluators are vectorised over leading axes: a point array of shape
``(..., d)`` maps to ``(...)`` for scalars, ``(..., d)`` for vectors and
``(..., d, d)`` for Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch

Evaluator = Callable[[np.ndarray], np.ndarray]

DEFAULT_FD_STEP = 1e-5


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 and dim == 1:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def fd_gradient(f: Evaluator, x: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient of a vectorised scalar function."""
    d = x.shape[-1]
    out = np.empty(x.shape, dtype=float)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out[..., k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def fd_jacobian(f: Evaluator, x: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, ``J[..., i, j] = d f_i / d x_j``."""
    d = x.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_divergence(f: Evaluator, x: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    d = x.shape[-1]
    out = np.zeros(x.shape[:-1])
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out = out + (f(x + e)[..., k] - f(x - e)[..., k]) / (2 * h)
    return out


def fd_laplacian(f: Evaluator, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    d = x.shape[-1]
    fx = f(x)
    out = np.zeros(x.shape[:-1])
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out = out + (f(x + e) - 2 * fx + f(x - e)) / h**2
    return out


@dataclass(frozen=True)
class ScalarFieldDef:
    """A scalar potential ``u`` with optional analytic derivatives.

    ``critical_values``, when given, is the full ordered list
    ``c_0 < c_1 < ... < c_{n+1}`` including ``inf u`` and ``sup u``.
    """

    value: Evaluator
    dim: int
    gradient: Optional[Evaluator] = None
    laplacian: Optional[Evaluator] = None
    critical_values: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.critical_values is not None:
            c = np.asarray(self.critical_values, dtype=float)
            if np.any(np.diff(c) <= 0):
                raise ValueError("critical values must be strictly increasing")

    def __call__(self, x) -> np.ndarray:
        return self.value(_as_points(x, self.dim))

    def grad(self, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        x = _as_points(x, self.dim)
        if self.gradient is not None:
            return np.broadcast_to(self.gradient(x), x.shape)
        return fd_gradient(self.value, x, h)

    def lap(self, x, h: float = 1e-4) -> np.ndarray:
        x = _as_points(x, self.dim)
        if self.laplacian is not None:
            return np.broadcast_to(self.laplacian(x), x.shape[:-1])
        return fd_laplacian(self.value, x, h)

    def shifted(self, c: float) -> "ScalarFieldDef":
        """Same potential plus a constant (gradient unchanged)."""
        crit = None
        if self.critical_values is not None:
            crit = tuple(v + c for v in self.critical_values)
        return ScalarFieldDef(
            value=lambda x, f=self.value: f(x) + c,
            dim=self.dim,
            gradient=self.gradient,
            laplacian=self.laplacian,
            critical_values=crit,
            name=self.name,
        )


@dataclass(frozen=True)
class VectorFieldDef:
    """A vector field ``b`` on R^d, optionally periodic with cell [0,1)^d."""

    value: Evaluator
    dim: int
    divergence: Optional[Evaluator] = None
    jacobian: Optional[Evaluator] = None
    periodic: bool = False
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        return np.broadcast_to(self.value(x), x.shape)

    def div(self, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        x = _as_points(x, self.dim)
        if self.divergence is not None:
            return np.broadcast_to(self.divergence(x), x.shape[:-1])
        return fd_divergence(self.__call__, x, h)

    def jac(self, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        x = _as_points(x, self.dim)
        if self.jacobian is not None:
            return np.broadcast_to(self.jacobian(x), x.shape + (self.dim,))
        return fd_jacobian(self.__call__, x, h)

    @classmethod
    def from_potential(cls, u: ScalarFieldDef, periodic: bool = False, name: str = "") -> "VectorFieldDef":
        """The gradient field of ``u``; its divergence is the Laplacian of ``u``."""
        return cls(
            value=lambda x: u.grad(x),
            dim=u.dim,
            divergence=lambda x: u.lap(x),
            periodic=periodic,
            name=name or u.name,
        )

    @classmethod
    def constant(cls, c: Sequence[float], name: str = "") -> "VectorFieldDef":
        c = np.asarray(c, dtype=float)
        return cls(
            value=lambda x: np.broadcast_to(c, x.shape).copy(),
            dim=c.size,
            divergence=lambda x: np.zeros(x.shape[:-1]),
            jacobian=lambda x: np.zeros(x.shape + (c.size,)),
            periodic=True,
            name=name or f"const{tuple(c.tolist())}",
        )


def eval_divergence(field: VectorFieldDef, x, h: float = DEFAULT_FD_STEP) -> float:
    """Divergence of ``field`` at ``x``: analytic when provided, else central differences."""
    if h <= 0:
        raise ValueError("h must be positive")
    return field.div(x, h)


# --- grids -----------------------------------------------------------------


def tensor_grid(lo, hi, n, dim: int) -> np.ndarray:
    """Points of a tensor-product grid as an ``(N, dim)`` array (C order, last axis fastest)."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
    n = np.broadcast_to(np.asarray(n, dtype=int), (dim,))
    axes = [np.linspace(lo[k], hi[k], n[k]) for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def cell_grid(n: int, dim: int) -> np.ndarray:
    """Rectangle-rule nodes ``j/n`` of the unit cell, shape ``(n**dim, dim)``."""
    axis = np.arange(n) / n
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# --- positivity conditions -------------------------------------------------


@dataclass(frozen=True)
class SignReport:
    classification: str  # "all_positive" | "all_negative" | "mixed"
    margin: float
    component_min: tuple
    component_max: tuple

    def to_dict(self) -> dict:
        return {
            "check": "componentwise_sign",
            "classification": self.classification,
            "margin": self.margin,
            "component_min": list(self.component_min),
            "component_max": list(self.component_max),
        }


def check_componentwise_sign(field: VectorFieldDef, grid) -> SignReport:
    """Classify the signs of the components of ``field`` over ``grid``.

    The margin is ``min_k min_x b_k`` for all-positive fields, ``min_k min_x -b_k``
    for all-negative ones and the (nonpositive) better of the two otherwise.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    b = field(grid)
    lo = b.min(axis=0)
    hi = b.max(axis=0)
    pos, neg = lo.min(), (-hi).min()
    if pos > 0:
        cls, margin = "all_positive", pos
    elif neg > 0:
        cls, margin = "all_negative", neg
    else:
        cls, margin = "mixed", max(pos, neg)
    return SignReport(cls, float(margin), tuple(lo.tolist()), tuple(hi.tolist()))


@dataclass(frozen=True)
class RatioReport:
    ok: bool
    violations: list = dc_field(default_factory=list)  # (point, pair index k, ratio)
    checked: int = 0

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {
            "check": "ratio_condition",
            "ok": self.ok,
            "checked": self.checked,
            "violations": [
                {"point": list(map(float, p)), "pair": k, "ratio": r} for p, k, r in self.violations[:20]
            ],
        }


def check_ratio_condition(potential: ScalarFieldDef, grid, bounds, rel_slack: Optional[float] = None) -> RatioReport:
    """Check ``lo_k <= |d_{k+1} u / d_k u| <= hi_k`` on every grid point.

    ``bounds`` holds one ``(lo_k, hi_k)`` pair per consecutive coordinate pair;
    either entry may be a callable of the points for non-constant bounds
    (checked pointwise only). Points where both partial derivatives vanish
    are skipped. The default
    relative slack is 1e-12 for analytic gradients and 1e-8 when the
    gradient comes from finite differences.
    """
    if rel_slack is None:
        rel_slack = 1e-12 if potential.gradient is not None else 1e-8
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    d = potential.dim
    if len(bounds) != d - 1:
        raise ValueError(f"need {d - 1} bound pairs, got {len(bounds)}")
    g = np.abs(potential.grad(grid))
    violations = []
    checked = 0
    for k, (lo, hi) in enumerate(bounds):
        lo = np.asarray(lo(grid), dtype=float) if callable(lo) else lo
        hi = np.asarray(hi(grid), dtype=float) if callable(hi) else hi
        num, den = g[:, k + 1], g[:, k]
        both_zero = (num == 0) & (den == 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
        bad = ~both_zero & ((ratio < lo * (1 - rel_slack)) | (ratio > hi * (1 + rel_slack)))
        checked += int((~both_zero).sum())
        for i in np.flatnonzero(bad):
            violations.append((grid[i].copy(), k, float(ratio[i])))
    return RatioReport(not violations, violations, checked)


def critical_point_search(potential: ScalarFieldDef, grid, tol: float = 1e-6) -> np.ndarray:
    """Grid points where ``|grad u|`` is below ``tol`` (advisory only)."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    g = np.linalg.norm(potential.grad(grid), axis=-1)
    return grid[g <= tol]
