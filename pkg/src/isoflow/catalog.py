"""Catalog of worked example fields with closed-form oracles.

Names are stable CLI identifiers::

    arctan2d  cubic3d  fcomposite3d  cubicflow2d
    shearcos2d  layered2d  layered3d  harmonic1d

Additional potential frames (for ``criterium``) live in :data:`FRAMES`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import NoCriteriumFrame, UnknownName
from .fields import ScalarFieldDef, VectorFieldDef
from .torus import AffinePlusPeriodic, PotentialFrame

TWO_PI = 2 * np.pi
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class ClosedForms:
    flow: Optional[Callable] = None  # (t, x) -> X(t, x)
    tau: Optional[Callable] = None  # x -> hitting time
    sigma: Optional[Callable] = None  # x -> reconstructed conductivity
    xi: Optional[np.ndarray] = None  # effective velocity

    def available(self) -> list:
        return [k for k in ("flow", "tau", "sigma", "xi") if getattr(self, k) is not None]


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    name: str
    field: VectorFieldDef
    potential: Optional[ScalarFieldDef] = None
    level: Optional[ScalarFieldDef] = None
    level_value: Optional[float] = None
    band: Optional[tuple] = None
    closed_forms: ClosedForms = dc_field(default_factory=ClosedForms)
    frame: Optional[PotentialFrame] = None
    invariant_sigma: Optional[Callable] = None
    ratio_bounds: Optional[list] = None
    variants: dict = dc_field(default_factory=dict)
    notes: str = ""

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def level_function(self) -> Optional[ScalarFieldDef]:
        return self.level if self.level is not None else self.potential

    def require_frame(self) -> PotentialFrame:
        if self.frame is None:
            raise NoCriteriumFrame(f"no criterium frame known for {self.name}")
        return self.frame


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


# --- arctan2d ----------------------------------------------------------------


def _cubic_inverse(c):
    """Real root s of s + s^3/3 = c."""
    c = np.asarray(c, dtype=float)
    a = np.abs(c)
    A = np.cbrt(1.5 * a + np.sqrt(2.25 * a * a + 1.0))
    return np.sign(c) * (A - 1.0 / A)


def _arctan2d() -> CatalogEntry:
    u = ScalarFieldDef(
        value=lambda x: np.arctan(x[..., 0]) + np.arctan(x[..., 1]),
        dim=2,
        gradient=lambda x: 1.0 / (1.0 + x * x),
        laplacian=lambda x: np.sum(-2.0 * x / (1.0 + x * x) ** 2, axis=-1),
        critical_values=(-np.pi, np.pi),
        name="arctan2d",
    )

    def flow(t, x):
        x = np.asarray(x, dtype=float)
        g = x + x**3 / 3.0
        return _cubic_inverse(g + np.asarray(t)[..., None])

    return CatalogEntry(
        name="arctan2d",
        field=VectorFieldDef.from_potential(u, name="arctan2d"),
        potential=u,
        level_value=0.0,
        band=(-np.pi, np.pi),
        closed_forms=ClosedForms(flow=flow),
        ratio_bounds=None,
        notes="u = arctan x1 + arctan x2; no critical point, inf |grad u| = 0",
    )


# --- cubic3d -----------------------------------------------------------------


def _cubic3d() -> CatalogEntry:
    def value(x):
        a, b, c = x[..., 0], x[..., 1], x[..., 2]
        return a**3 + b**3 + c**3 + a * a * b + a * b * b + a * a * c + a * c * c + b * b * c + b * c * c

    def grad(x):
        a, b, c = x[..., 0], x[..., 1], x[..., 2]
        return _stack(
            3 * a * a + b * b + c * c + 2 * a * b + 2 * a * c,
            a * a + 3 * b * b + c * c + 2 * a * b + 2 * b * c,
            a * a + b * b + 3 * c * c + 2 * a * c + 2 * b * c,
        )

    u = ScalarFieldDef(
        value=value,
        dim=3,
        gradient=grad,
        laplacian=lambda x: 10.0 * np.sum(x, axis=-1),
        critical_values=(-np.inf, 0.0, np.inf),
        name="cubic3d",
    )
    lo = (2 - SQRT3) / (2 + SQRT3)
    return CatalogEntry(
        name="cubic3d",
        field=VectorFieldDef.from_potential(u, name="cubic3d"),
        potential=u,
        level_value=1.0,
        band=(0.0, np.inf),
        ratio_bounds=[(lo, 1 / lo), (lo, 1 / lo)],
        notes="partials are quadratic forms with eigenvalues 2-sqrt3, 1, 2+sqrt3; bands {u<0}, {u>0}",
    )


# --- fcomposite3d ------------------------------------------------------------

_FC_DIRS = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 3.0], [1.0, 4.0, 5.0]])


def _f(s):
    return s**3 / 3 - s**4 / 2 + s**5 / 5


def _df(s):
    return s * s * (1 - s) ** 2


def _d2f(s):
    return 2 * s * (1 - s) * (1 - 2 * s)


def _fcomposite3d() -> CatalogEntry:
    sq = np.sum(_FC_DIRS**2, axis=1)
    u = ScalarFieldDef(
        value=lambda x: np.sum(_f(x @ _FC_DIRS.T), axis=-1) / 4,
        dim=3,
        gradient=lambda x: (_df(x @ _FC_DIRS.T) @ _FC_DIRS) / 4,
        laplacian=lambda x: (_d2f(x @ _FC_DIRS.T) @ sq) / 4,
        critical_values=(-np.inf, float(_f(0.0)), float(_f(1.0)), np.inf),
        name="fcomposite3d",
    )
    return CatalogEntry(
        name="fcomposite3d",
        field=VectorFieldDef.from_potential(u, name="fcomposite3d"),
        potential=u,
        level_value=-1.0,
        band=(-np.inf, float(_f(0.0))),
        ratio_bounds=[(1.0, 4.0), (0.25, 5.0)],
        notes="f' = s^2 (1-s)^2, critical points (0,0,0), (1,0,0); bands split at f(0)=0 and f(1)=1/30",
    )


# --- cubicflow2d -------------------------------------------------------------


def cubicflow_tau(x):
    """Hitting time of x1 + x2 = 1 (c_I = 1, band x1 + x2 > 0), rationalised root."""
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0], x[..., 1]
    s = a + b - 2 * a * b
    disc = np.sqrt((a - b) ** 2 + 4 * a * a * b * b)
    return 2 * (1 - a - b) / (s + disc)


def cubicflow_sigma(x):
    x = np.asarray(x, dtype=float)
    t = cubicflow_tau(x)
    return 1.0 / ((1 - t * x[..., 0]) ** 2 * (1 - t * x[..., 1]) ** 2)


def _cubicflow2d() -> CatalogEntry:
    v = ScalarFieldDef(
        value=lambda x: np.sum(x**3, axis=-1) / 3,
        dim=2,
        gradient=lambda x: x * x,
        laplacian=lambda x: 2 * np.sum(x, axis=-1),
        name="cubicflow2d_potential",
    )
    level = ScalarFieldDef(
        value=lambda x: x[..., 0] + x[..., 1],
        dim=2,
        gradient=lambda x: np.ones(np.shape(x)),
        laplacian=lambda x: np.zeros(np.shape(x)[:-1]),
        name="x1+x2",
    )
    field = VectorFieldDef(
        value=lambda x: x * x,
        dim=2,
        divergence=lambda x: 2 * np.sum(x, axis=-1),
        jacobian=lambda x: 2 * x[..., :, None] * np.eye(2),
        name="cubicflow2d",
    )

    def flow(t, x):
        x = np.asarray(x, dtype=float)
        return x / (1 - np.asarray(t)[..., None] * x)

    return CatalogEntry(
        name="cubicflow2d",
        field=field,
        potential=v,
        level=level,
        level_value=1.0,
        band=(0.0, np.inf),
        closed_forms=ClosedForms(flow=flow, tau=cubicflow_tau, sigma=cubicflow_sigma),
        notes="b = grad (x1^3 + x2^3)/3, finite-time blow-up; level function u = x1 + x2",
    )


# --- shearcos2d --------------------------------------------------------------

SHEAR_ALPHA = 4 * np.pi + 1


def _shearcos2d() -> CatalogEntry:
    al = SHEAR_ALPHA
    u = ScalarFieldDef(
        value=lambda x: al * x[..., 0] + al * x[..., 1] + 2 * np.cos(TWO_PI * x[..., 0]) * np.cos(TWO_PI * x[..., 1]),
        dim=2,
        gradient=lambda x: _stack(
            al - 2 * TWO_PI * np.sin(TWO_PI * x[..., 0]) * np.cos(TWO_PI * x[..., 1]),
            al - 2 * TWO_PI * np.cos(TWO_PI * x[..., 0]) * np.sin(TWO_PI * x[..., 1]),
        ),
        laplacian=lambda x: -2 * 2 * TWO_PI**2 * np.cos(TWO_PI * x[..., 0]) * np.cos(TWO_PI * x[..., 1]),
        name="shearcos2d",
    )
    # v(y) = u(x) with x1 = y1 + y2, x2 = y2 - y1
    v = ScalarFieldDef(
        value=lambda y: np.cos(2 * TWO_PI * y[..., 0]) + 2 * al * y[..., 1] + np.cos(2 * TWO_PI * y[..., 1]),
        dim=2,
        gradient=lambda y: _stack(
            -2 * TWO_PI * np.sin(2 * TWO_PI * y[..., 0]),
            2 * al - 2 * TWO_PI * np.sin(2 * TWO_PI * y[..., 1]),
        ),
        laplacian=lambda y: -((2 * TWO_PI) ** 2) * (np.cos(2 * TWO_PI * y[..., 0]) + np.cos(2 * TWO_PI * y[..., 1])),
        name="shearcos2d_rotated",
    )
    return CatalogEntry(
        name="shearcos2d",
        field=VectorFieldDef.from_potential(u, periodic=True, name="shearcos2d"),
        potential=u,
        ratio_bounds=None,
        variants={"rotated": VectorFieldDef.from_potential(v, periodic=True, name="shearcos2d:rotated")},
        notes="alpha = 4 pi + 1: components >= 1 but no positive periodic invariant measure",
    )


# --- layered2d ---------------------------------------------------------------


def layered_v1(s):
    """v_1(s) = 2 s + sin(2 pi s)/(2 pi), so v_1' = 2 + cos(2 pi s)."""
    return 2 * s + np.sin(TWO_PI * s) / TWO_PI


def _layered2d() -> CatalogEntry:
    def value(x):
        out = np.zeros(np.shape(x))
        out[..., 1] = 1.0 / (2 + np.cos(TWO_PI * x[..., 1]))
        return out

    def div(x):
        c = 2 + np.cos(TWO_PI * x[..., 1])
        return TWO_PI * np.sin(TWO_PI * x[..., 1]) / c**2

    def jac(x):
        out = np.zeros(np.shape(x) + (2,))
        out[..., 1, 1] = div(x)
        return out

    def sigma(x):
        return (2 + np.sin(TWO_PI * x[..., 0])) * (2 + np.cos(TWO_PI * x[..., 1]))

    v1 = AffinePlusPeriodic(
        np.array([0.0, 2.0]),
        lambda x: np.sin(TWO_PI * x[..., 1]) / TWO_PI,
        lambda x: _stack(np.zeros(np.shape(x)[:-1]), np.cos(TWO_PI * x[..., 1])),
        name="v1",
    )
    # R_perp grad v2 = v(x1) e2  =>  v2 = -(2 x1 - cos(2 pi x1)/(2 pi))
    v2 = AffinePlusPeriodic(
        np.array([-2.0, 0.0]),
        lambda x: np.cos(TWO_PI * x[..., 0]) / TWO_PI,
        lambda x: _stack(-np.sin(TWO_PI * x[..., 0]), np.zeros(np.shape(x)[:-1])),
        name="v2",
    )
    return CatalogEntry(
        name="layered2d",
        field=VectorFieldDef(value, 2, divergence=div, jacobian=jac, periodic=True, name="layered2d"),
        closed_forms=ClosedForms(xi=np.array([0.0, 0.5])),
        frame=PotentialFrame((v1, v2), name="layered2d"),
        invariant_sigma=sigma,
        notes="b = e2 / v1'(x2), v1' = 2 + cos(2 pi s); sigma = v(x1) v1'(x2), v = 2 + sin(2 pi x1)",
    )


# --- layered3d ---------------------------------------------------------------

LAYERED3D_EPS = 0.25


def _sin_frame_term(axis: int, eps: float, dim: int):
    amp = eps / TWO_PI

    def p(x):
        return amp * np.sin(TWO_PI * x[..., axis])

    def dp(x):
        out = np.zeros(np.shape(x))
        out[..., axis] = eps * np.cos(TWO_PI * x[..., axis])
        return out

    return p, dp


def perturbed_potential(k: int, axis: int, eps: float, dim: int, name: str = "") -> AffinePlusPeriodic:
    """v(x) = x_k + eps/(2 pi) sin(2 pi x_axis), so |grad v - e_k| <= eps."""
    ell = np.zeros(dim)
    ell[k] = 1.0
    p, dp = _sin_frame_term(axis, eps, dim)
    return AffinePlusPeriodic(ell, p, dp, name=name or f"v{k + 1}")


def _layered3d() -> CatalogEntry:
    eps = LAYERED3D_EPS
    frame = PotentialFrame(
        (
            perturbed_potential(0, 2, eps, 3),
            perturbed_potential(1, 1, eps, 3),
            perturbed_potential(2, 0, eps, 3),
        ),
        name="layered3d",
    )

    def den(x):
        return 1 - eps**2 * np.cos(TWO_PI * x[..., 0]) * np.cos(TWO_PI * x[..., 2])

    def value(x):
        D = den(x)
        z = np.zeros(np.shape(x)[:-1])
        return _stack(1.0 / D, z, -eps * np.cos(TWO_PI * x[..., 0]) / D)

    def div(x):
        D = den(x)
        c1, c3 = np.cos(TWO_PI * x[..., 0]), np.cos(TWO_PI * x[..., 2])
        s1, s3 = np.sin(TWO_PI * x[..., 0]), np.sin(TWO_PI * x[..., 2])
        return TWO_PI * eps**2 * (-c3 * s1 + eps * c1 * c1 * s3) / D**2

    def sigma(x):
        return (1 + eps * np.cos(TWO_PI * x[..., 1])) * den(x)

    return CatalogEntry(
        name="layered3d",
        field=VectorFieldDef(value, 3, divergence=div, periodic=True, name="layered3d"),
        closed_forms=ClosedForms(xi=np.array([1.0, 0.0, 0.0])),
        frame=frame,
        invariant_sigma=sigma,
        notes=f"v1 = x1 + e sin(2pi x3)/2pi, v2 = x2 + e sin(2pi x2)/2pi, v3 = x3 + e sin(2pi x1)/2pi, e={eps}; b.e2 = 0",
    )


# --- harmonic1d --------------------------------------------------------------


def harmonic_F(x):
    """F(x) = int_0^x ds / (2 + cos 2 pi s), continuous across branches."""
    x = np.asarray(x, dtype=float)
    k = np.floor(x + 0.5)
    y = x - k
    return (k + np.arctan2(np.sin(np.pi * y), SQRT3 * np.cos(np.pi * y)) / np.pi) / SQRT3


def harmonic_F_inv(z):
    z = np.asarray(z, dtype=float)
    w = z * SQRT3
    k = np.floor(w + 0.5)
    r = w - k
    return k + np.arctan2(SQRT3 * np.sin(np.pi * r), np.cos(np.pi * r)) / np.pi


def _harmonic1d() -> CatalogEntry:
    field = VectorFieldDef(
        value=lambda x: 2 + np.cos(TWO_PI * x),
        dim=1,
        divergence=lambda x: -TWO_PI * np.sin(TWO_PI * x[..., 0]),
        jacobian=lambda x: (-TWO_PI * np.sin(TWO_PI * x))[..., None],
        periodic=True,
        name="harmonic1d",
    )
    v1 = AffinePlusPeriodic(
        np.array([1 / SQRT3]),
        lambda x: harmonic_F(x[..., 0]) - x[..., 0] / SQRT3,
        lambda x: 1.0 / (2 + np.cos(TWO_PI * x)) - 1 / SQRT3,
        name="F",
    )

    def flow(t, x):
        x = np.asarray(x, dtype=float)
        return harmonic_F_inv(np.asarray(t)[..., None] + harmonic_F(x))

    return CatalogEntry(
        name="harmonic1d",
        field=field,
        closed_forms=ClosedForms(flow=flow, xi=np.array([SQRT3])),
        frame=PotentialFrame((v1,), name="harmonic1d"),
        invariant_sigma=lambda x: 1.0 / (2 + np.cos(TWO_PI * x[..., 0])),
        notes="b = 2 + cos(2 pi x); sigma = 1/b, xi = harmonic mean = sqrt(3)",
    )


_BUILDERS = {
    "arctan2d": _arctan2d,
    "cubic3d": _cubic3d,
    "fcomposite3d": _fcomposite3d,
    "cubicflow2d": _cubicflow2d,
    "shearcos2d": _shearcos2d,
    "layered2d": _layered2d,
    "layered3d": _layered3d,
    "harmonic1d": _harmonic1d,
}

NAMES = tuple(_BUILDERS)
_CACHE: dict = {}


def catalog_get(name: str) -> CatalogEntry:
    if name not in _BUILDERS:
        raise UnknownName(f"unknown catalog entry {name!r}; known: {', '.join(NAMES)}")
    if name not in _CACHE:
        _CACHE[name] = _BUILDERS[name]()
    return _CACHE[name]


def get_field(spec: str) -> VectorFieldDef:
    """Resolve ``name`` or ``name:variant`` to a vector field."""
    name, _, variant = spec.partition(":")
    entry = catalog_get(name)
    if not variant:
        return entry.field
    if variant not in entry.variants:
        raise UnknownName(f"{name} has no variant {variant!r}")
    return entry.variants[variant]


# --- frames ------------------------------------------------------------------


def identity_frame(dim: int) -> PotentialFrame:
    return PotentialFrame(
        tuple(AffinePlusPeriodic.linear_only(np.eye(dim)[k], name=f"v{k + 1}") for k in range(dim)),
        name=f"identity{dim}d",
    )


def perturbed_frame_2d(eps: float = 0.1, both: bool = True) -> PotentialFrame:
    """v1 = x1 [+ eps sin(2pi x2)/2pi], v2 = x2 + eps sin(2pi x1)/2pi."""
    v1 = perturbed_potential(0, 1, eps, 2) if both else AffinePlusPeriodic.linear_only([1.0, 0.0], "v1")
    v2 = perturbed_potential(1, 0, eps, 2)
    return PotentialFrame((v1, v2), name=f"perturbed2d(eps={eps})")


def perturbed_frame_3d(eps: float = 0.1) -> PotentialFrame:
    return PotentialFrame(
        (
            perturbed_potential(0, 1, eps, 3),
            perturbed_potential(1, 2, eps, 3),
            perturbed_potential(2, 0, eps, 3),
        ),
        name=f"perturbed3d(eps={eps})",
    )


FRAMES = {
    "identity2d": lambda: identity_frame(2),
    "identity3d": lambda: identity_frame(3),
    "shear2d": lambda: perturbed_frame_2d(0.1, both=False),
    "perturbed2d": lambda: perturbed_frame_2d(0.1),
    "perturbed3d": lambda: perturbed_frame_3d(0.1),
    "layered2d": lambda: catalog_get("layered2d").frame,
    "layered3d": lambda: catalog_get("layered3d").frame,
    "harmonic1d": lambda: catalog_get("harmonic1d").frame,
}


def frame_get(name: str) -> PotentialFrame:
    if name in FRAMES:
        return FRAMES[name]()
    if name in _BUILDERS:
        return catalog_get(name).require_frame()
    raise UnknownName(f"unknown frame {name!r}; known: {', '.join(FRAMES)}")
