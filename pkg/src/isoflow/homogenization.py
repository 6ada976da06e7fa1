"""Homogenization of the oscillating transport equation.

``du_eps/dt - b(x/eps) . grad u_eps = 0`` with ``u_eps(0) = u0`` is solved
by characteristics, ``u_eps(t, x) = u0(eps X(t/eps, x/eps))`` with the
forward flow of b. Under the criterium the limit is ``u0(x + t xi)`` and
the remainder is ``eps (Wsharp(X) - Wsharp(x/eps))``, hence first order.
A ``+b . grad`` convention would correspond to running the flow backwards.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from . import serialize
from .errors import DimensionMismatch, UnknownName
from .fields import ScalarFieldDef, VectorFieldDef, tensor_grid
from .flow import DEFAULT_CONFIG, IntegrationConfig, flow_map

# Sup-errors below this are indistinguishable from integrator noise at the
# default tolerances.
MACHINE_ZERO = 1e-9


def _sin_sum(dim: int) -> ScalarFieldDef:
    def value(x):
        return np.sin(2 * np.pi * x.sum(axis=-1))

    def grad(x):
        return np.repeat((2 * np.pi * np.cos(2 * np.pi * x.sum(axis=-1)))[..., None], x.shape[-1], axis=-1)

    return ScalarFieldDef(value, dim, gradient=grad, name="sin_sum")


def _cos_first(dim: int) -> ScalarFieldDef:
    def value(x):
        return np.cos(2 * np.pi * x[..., 0])

    def grad(x):
        g = np.zeros_like(x)
        g[..., 0] = -2 * np.pi * np.sin(2 * np.pi * x[..., 0])
        return g

    return ScalarFieldDef(value, dim, gradient=grad, name="cos_first")


def _linear_sum(dim: int) -> ScalarFieldDef:
    return ScalarFieldDef(lambda x: x.sum(axis=-1), dim, gradient=lambda x: np.ones_like(x), name="linear_sum")


# name -> (factory(dim), Lipschitz constant as a function of dim)
INITIAL_DATA = {
    "sin_sum": (_sin_sum, lambda d: 2 * np.pi * math.sqrt(d)),
    "cos_first": (_cos_first, lambda d: 2 * np.pi),
    "linear_sum": (_linear_sum, lambda d: math.sqrt(d)),
}


def initial_datum(name: str, dim: int) -> tuple:
    """(ScalarFieldDef, Lipschitz constant) for a named initial datum."""
    try:
        factory, lip = INITIAL_DATA[name]
    except KeyError:
        raise UnknownName(f"unknown initial datum {name!r}; known: {', '.join(INITIAL_DATA)}") from None
    return factory(dim), float(lip(dim))


@dataclass(frozen=True, eq=False)
class TransportProblem:
    u0: ScalarFieldDef
    field: VectorFieldDef
    eps: float
    time: float
    grid: np.ndarray = dc_field(default=None, repr=False)
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.field.periodic:
            raise ValueError("the transport field must be periodic")
        if self.u0.dim != self.field.dim:
            raise DimensionMismatch("initial datum and field dimensions differ")
        if self.grid is None:
            object.__setattr__(self, "grid", default_grid(self.field.dim))
        else:
            g = np.atleast_2d(np.asarray(self.grid, dtype=float))
            if g.shape[1] != self.field.dim:
                raise DimensionMismatch("grid dimension differs from field dimension")
            object.__setattr__(self, "grid", g)

    def with_eps(self, eps: float) -> "TransportProblem":
        return TransportProblem(self.u0, self.field, eps, self.time, self.grid, self.lipschitz)


def default_grid(dim: int, n: Optional[int] = None) -> np.ndarray:
    """n^d points on [0, 1]^d (64 per axis in 1D and 2D, 16 in 3D)."""
    if n is None:
        n = 64 if dim <= 2 else 16
    return tensor_grid(0.0, 1.0, n, dim)


def characteristic_feet(prob: TransportProblem, cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """X_eps(t, x) = eps X(t/eps, x/eps) on the problem grid."""
    if prob.time == 0:
        return prob.grid.copy()
    y = flow_map(prob.field, prob.grid / prob.eps, prob.time / prob.eps, cfg)
    return prob.eps * y


def solve_transport(prob: TransportProblem, cfg: IntegrationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Samples of u_eps(t, .) on the grid."""
    if prob.time == 0:
        return prob.u0(prob.grid)
    return prob.u0(characteristic_feet(prob, cfg))


def homogenized_solution(u0: ScalarFieldDef, xi, t: float, grid) -> np.ndarray:
    """u0(x + t xi) pointwise."""
    g = np.atleast_2d(np.asarray(grid, dtype=float))
    return u0(g + t * np.asarray(xi, dtype=float))


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    eps: np.ndarray
    errors: np.ndarray
    bounds: Optional[np.ndarray] = None
    zero_tol: float = MACHINE_ZERO

    def __post_init__(self):
        if np.any(np.diff(self.eps) >= 0):
            raise ValueError("eps list must be strictly decreasing")

    @property
    def ratios(self) -> np.ndarray:
        """errors[i]/errors[i+1]; NaN-free (inf when the finer error is zero)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.errors[:-1] / self.errors[1:]
        return np.where(np.isfinite(r), r, np.inf)

    @property
    def at_machine_zero(self) -> bool:
        return bool(np.all(self.errors <= self.zero_tol))

    @property
    def rate(self) -> Optional[float]:
        """Least-squares slope of log(error) against log(eps); None when undefined."""
        if np.any(self.errors <= self.zero_tol):
            return None
        slope, _ = np.polyfit(np.log(self.eps), np.log(self.errors), 1)
        return float(slope)

    @property
    def within_bounds(self) -> Optional[bool]:
        if self.bounds is None:
            return None
        return bool(np.all(self.errors <= self.bounds))

    def to_dict(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "sup_error": self.errors.tolist(),
            "ratio": self.ratios.tolist(),
            "bound": None if self.bounds is None else self.bounds.tolist(),
            "rate": self.rate,
            "rate_defined": self.rate is not None,
            "at_machine_zero": self.at_machine_zero,
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "sup_error", "ratio", "bound"])
        ratios = [None] + list(self.ratios)
        for i, e in enumerate(self.eps):
            b = None if self.bounds is None else self.bounds[i]
            w.writerow(serialize.csv_row([e, self.errors[i], ratios[i], b]))
        return buf.getvalue()


def convergence_study(
    template: TransportProblem,
    eps_list: Sequence[float],
    xi,
    cfg: IntegrationConfig = DEFAULT_CONFIG,
    sup_wsharp: Optional[float] = None,
) -> ConvergenceStudy:
    """Sup-error of u_eps against u0(x + t xi) for each eps.

    With ``sup_wsharp`` and a Lipschitz constant on the template the
    bound Lip(u0) * 2 eps * sup|Wsharp| is attached.
    """
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 3:
        raise ValueError("a convergence study needs at least three eps values")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps list must be strictly decreasing")
    reference = homogenized_solution(template.u0, xi, template.time, template.grid)
    errors = np.array([
        float(np.max(np.abs(solve_transport(template.with_eps(e), cfg) - reference))) for e in eps
    ])
    bounds = None
    if sup_wsharp is not None and template.lipschitz is not None:
        bounds = template.lipschitz * 2 * eps * sup_wsharp
    return ConvergenceStudy(eps, errors, bounds)
