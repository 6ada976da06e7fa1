import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoflow.catalog import catalog_get, cubicflow_sigma, cubicflow_tau
from isoflow.characteristics import (
    LevelSpec,
    SigmaField,
    band_classify,
    hitting_time,
    pde_residual,
    pde_residual_at,
    reconstruct_sigma,
    sigma_on_grid,
)
from isoflow.errors import BandExit, GridTooCoarse, MonotonicityViolated, NotInBand, OnCriticalLevel
from isoflow.fields import ScalarFieldDef, VectorFieldDef, tensor_grid
from isoflow.flow import IntegrationConfig, advance_flow, integrate, path_integral

CUBIC = catalog_get("cubicflow2d")
ARCTAN = catalog_get("arctan2d")
CUBIC_SPEC = LevelSpec(CUBIC.level_function, 1.0, (0.0, math.inf))
ARCTAN_SPEC = LevelSpec(ARCTAN.potential, 0.0, (-math.pi, math.pi))


def arctan_sigma_oracle(x):
    """Separable closed form: prod (1 + x_k^2) / (1 + X_k(tau)^2)."""
    x = np.asarray(x, dtype=float)
    # u(X(t)) = 0 with X_k + X_k^3/3 = x_k + x_k^3/3 + t  -> solve for t by bisection
    flow = ARCTAN.closed_forms.flow

    def u_at(t):
        return float(np.sum(np.arctan(flow(t, x))))

    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if u_at(mid) > 0:
            hi = mid
        else:
            lo = mid
    X = flow(0.5 * (lo + hi), x)
    return float(np.prod((1 + x**2) / (1 + X**2))), 0.5 * (lo + hi)


def test_cubicflow_hitting_time_and_sigma():
    res = hitting_time(CUBIC.field, CUBIC_SPEC, [1.0, 1.0])
    assert res.tau == pytest.approx(-1.0, abs=1e-8)
    assert res.monotonicity_margin > 0
    assert reconstruct_sigma(CUBIC.field, CUBIC_SPEC, [1.0, 1.0]) == pytest.approx(1 / 16, rel=1e-8)


def test_on_level_gives_zero_time_and_unit_sigma():
    assert hitting_time(CUBIC.field, CUBIC_SPEC, [0.25, 0.75]).tau == 0.0
    assert reconstruct_sigma(CUBIC.field, CUBIC_SPEC, [0.25, 0.75]) == 1.0


def test_arctan_hitting_time_residual_and_sigma_oracle():
    res = hitting_time(ARCTAN.field, ARCTAN_SPEC, [1.0, 0.0])
    assert res.tau < 0
    X = res.trajectory(res.tau)
    assert abs(float(ARCTAN.potential(X))) <= 1e-10
    s_exact, t_exact = arctan_sigma_oracle([1.0, 0.0])
    assert res.tau == pytest.approx(t_exact, abs=1e-9)
    assert reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, [1.0, 0.0]) == pytest.approx(s_exact, rel=1e-8)


def test_divergence_free_field_gives_unit_sigma():
    # sigma b = v(x1) e2 for layered2d is divergence free; u = x2 is monotone along it
    v = lambda x: 2 + np.sin(2 * np.pi * x[..., 0])
    field = VectorFieldDef(
        lambda x: np.stack([np.zeros(x.shape[:-1]), v(x)], axis=-1), 2, divergence=lambda x: np.zeros(x.shape[:-1])
    )
    u = ScalarFieldDef(lambda x: x[..., 1], 2, gradient=lambda x: np.stack([0 * x[..., 0], 1 + 0 * x[..., 0]], -1))
    spec = LevelSpec(u, 0.0)
    for x in ([0.3, 1.7], [0.9, -2.2]):
        assert reconstruct_sigma(field, spec, x) == pytest.approx(1.0, abs=1e-12)


def test_errors():
    with pytest.raises(NotInBand):
        hitting_time(CUBIC.field, CUBIC_SPEC, [-1.0, 0.5])
    b = VectorFieldDef.constant([-1.0, 0.0])
    u = ScalarFieldDef(lambda x: x[..., 0], 2)
    with pytest.raises(MonotonicityViolated):
        hitting_time(b, LevelSpec(u, 0.0), [1.0, 0.0])
    unreachable = LevelSpec(ARCTAN.potential, 3.2, (-4.0, 4.0))
    with pytest.raises(BandExit):
        hitting_time(ARCTAN.field, unreachable, [0.0, 0.0], IntegrationConfig(max_time=100.0))
    with pytest.raises(ValueError):
        LevelSpec(CUBIC.level_function, 5.0, (0.0, 1.0))


def test_sign_change_along_trajectory_is_reported():
    # b . grad u = cos(x1) changes sign at x1 = pi/2 before the level x1 = 3 is reached
    b = VectorFieldDef(lambda x: np.stack([np.ones(x.shape[:-1]), np.zeros(x.shape[:-1])], -1), 2)
    u = ScalarFieldDef(lambda x: np.sin(x[..., 0]) + 0 * x[..., 1], 2)
    # u = sin x1 is in band, its derivative along e1 turns negative past pi/2
    spec = LevelSpec(u, 0.99999, (-2.0, 2.0))
    with pytest.raises((MonotonicityViolated, BandExit)):
        hitting_time(b, spec, [1.5, 0.0])
    with pytest.raises(MonotonicityViolated):
        hitting_time(b, LevelSpec(u, 0.5, (-2.0, 2.0)), [2.0, 0.0])


def test_sigma_on_grid_partial_failure_and_level_grid():
    grid = np.array([[1.0, 1.0], [-0.5, -0.5], [0.5, 0.5]])
    sf = sigma_on_grid(CUBIC.field, CUBIC_SPEC, grid)
    assert sf.status == ("ok", "NotInBand", "ok")
    assert sf.sigma[0] == pytest.approx(1 / 16, rel=1e-8)
    assert sf.sigma[2] == 1.0
    on_level = np.array([[t, 1 - t] for t in np.linspace(-1, 2, 7)])
    sf = sigma_on_grid(CUBIC.field, CUBIC_SPEC, on_level)
    assert np.all(sf.sigma == 1.0)
    csv_text = sf.to_csv()
    assert csv_text.splitlines()[0] == "x1,x2,u,tau,sigma,status"


def test_sigma_on_grid_threads_are_deterministic():
    grid = tensor_grid(0.1, 1.5, 6, 2)
    a = sigma_on_grid(CUBIC.field, CUBIC_SPEC, grid, threads=1)
    b = sigma_on_grid(CUBIC.field, CUBIC_SPEC, grid, threads=3)
    assert a.to_json() == b.to_json()


def test_cubicflow_grid_matches_closed_form():
    grid = tensor_grid(-2, 2, 21, 2)
    grid = grid[grid.sum(axis=1) > 0.2]
    sf = sigma_on_grid(CUBIC.field, CUBIC_SPEC, grid)
    assert all(s == "ok" for s in sf.status)
    exact = cubicflow_sigma(grid)
    assert np.max(np.abs(sf.sigma / exact - 1)) <= 1e-6
    assert np.max(np.abs(sf.tau - cubicflow_tau(grid))) <= 1e-8


def test_closed_form_sigma_residual_is_discretisation_error():
    # spacing h = 1e-3
    axes = (np.linspace(0.9, 1.0, 101), np.linspace(0.4, 0.5, 101))
    grid = tensor_grid((0.9, 0.4), (1.0, 0.5), 101, 2)
    s = cubicflow_sigma(grid)
    sf = SigmaField(grid, s, cubicflow_tau(grid), CUBIC.level_function(grid), ("ok",) * len(grid), CUBIC_SPEC, axes)
    assert pde_residual(sf, CUBIC.field, h=1e-3).max <= 5e-4
    rep = pde_residual_at(lambda x: float(cubicflow_sigma(x)), CUBIC.field, grid[::97], 1e-3)
    assert rep.max <= 5e-4


def test_unit_sigma_divergence_free_residual_vanishes():
    b = VectorFieldDef.constant([1.0, 2.0])
    rep = pde_residual_at(lambda x: 1.0, b, tensor_grid(0, 1, 4, 2), 1e-3)
    assert rep.max <= 1e-12


def test_pde_residual_rejects_coarse_grid():
    axes = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    grid = tensor_grid(0, 1, 2, 2)
    sf = SigmaField(grid, np.ones(4), np.zeros(4), np.zeros(4), ("ok",) * 4, None, axes)
    with pytest.raises(GridTooCoarse):
        pde_residual(sf, VectorFieldDef.constant([1.0, 0.0]))


def test_arctan_residual_second_order():
    centers = tensor_grid(-0.8, 0.8, 5, 2)
    sigma = lambda x: reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, x)
    r1 = pde_residual_at(sigma, ARCTAN.field, centers, 2e-3).max
    r2 = pde_residual_at(sigma, ARCTAN.field, centers, 1e-3).max
    assert r2 <= 1e-3
    assert r1 / r2 >= 3.5


def test_band_classify_examples():
    fc = catalog_get("fcomposite3d")
    assert band_classify(fc.potential, [-1.0, -1.0, -1.0]) == 0
    assert band_classify(fc.potential, [0.2, 0.1, 0.0]) in (1, 2)
    cube = catalog_get("cubic3d")
    assert band_classify(cube.potential, [1.0, 0.5, 0.2]) == 1
    assert band_classify(cube.potential, [-1.0, 0.5, 0.2]) == 0
    with pytest.raises(OnCriticalLevel):
        band_classify(cube.potential, [0.0, 0.0, 0.0])
    plain = ScalarFieldDef(lambda x: x[..., 0], 1)
    assert band_classify(plain, [123.0]) == 0


pts = st.tuples(st.floats(min_value=0.2, max_value=1.5), st.floats(min_value=0.2, max_value=1.5))


@settings(max_examples=20, deadline=None)
@given(pts, st.floats(min_value=-0.1, max_value=0.1))
def test_time_translation_of_tau(x, t):
    x = np.array(x)
    tau_x = hitting_time(CUBIC.field, CUBIC_SPEC, x).tau
    y = advance_flow(CUBIC.field, x, t)
    assert hitting_time(CUBIC.field, CUBIC_SPEC, y).tau == pytest.approx(tau_x - t, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)), st.floats(min_value=-0.5, max_value=0.5))
def test_sigma_transport_along_flow(x, t):
    x = np.array(x)
    tr = integrate(ARCTAN.field, x, t)
    y = tr(t)
    integral = path_integral(lambda p: ARCTAN.field.div(p), tr, 0.0, t)
    lhs = reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, y)
    rhs = reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, x) * math.exp(-integral)
    assert lhs == pytest.approx(rhs, rel=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)), st.floats(min_value=0.1, max_value=2.0))
def test_level_gauge_is_constant_along_trajectories(x, t):
    x = np.array(x)
    other = LevelSpec(ARCTAN.potential, 0.7, (-math.pi, math.pi))
    y = advance_flow(ARCTAN.field, x, t)
    r_x = reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, x) / reconstruct_sigma(ARCTAN.field, other, x)
    r_y = reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, y) / reconstruct_sigma(ARCTAN.field, other, y)
    assert r_x == pytest.approx(r_y, rel=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_reconstructed_sigma_is_positive(x):
    assert reconstruct_sigma(ARCTAN.field, ARCTAN_SPEC, np.array(x)) > 0
