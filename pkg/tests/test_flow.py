import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from isoflow.catalog import catalog_get, layered_v1
from isoflow.errors import BlowUp, IntervalNotCovered
from isoflow.fields import VectorFieldDef
from isoflow.flow import (
    BLEW_UP,
    COMPLETED,
    DEFAULT_CONFIG,
    IntegrationConfig,
    advance_flow,
    estimate_maximal_interval,
    flow_map,
    integrate,
    path_integral,
)

CUBIC = catalog_get("cubicflow2d")
LAYERED = catalog_get("layered2d")


def cubic_exact(t, x):
    x = np.asarray(x, dtype=float)
    return x / (1 - t * x)


def test_cubicflow_closed_form():
    assert advance_flow(CUBIC.field, [1.0, 1.0], 0.5) == pytest.approx([2.0, 2.0], rel=1e-9)


def test_zero_time_is_identity():
    x = np.array([0.3, -0.7])
    assert np.array_equal(advance_flow(CUBIC.field, x, 0.0), x)


def test_layered_flow_against_root_finding_oracle():
    # v1(X2) - v1(0) = t along the vertical trajectory from the origin
    t = 2.0
    x2 = brentq(lambda s: layered_v1(s) - layered_v1(0.0) - t, 0.0, 5.0, xtol=1e-14)
    out = advance_flow(LAYERED.field, [0.0, 0.0], t)
    assert out[0] == 0.0
    assert out[1] == pytest.approx(x2, abs=1e-9)
    assert out[1] == pytest.approx(1.0, abs=1e-9)


def test_harmonic_flow_closed_form():
    h = catalog_get("harmonic1d")
    for t in (0.3, -1.7, 5.0):
        exact = h.closed_forms.flow(t, np.array([0.1]))
        assert advance_flow(h.field, [0.1], t) == pytest.approx(exact, rel=1e-9)


def test_blow_up_raises_with_time():
    with pytest.raises(BlowUp) as info:
        advance_flow(CUBIC.field, [1.0, 1.0], 2.0)
    assert info.value.t_star == pytest.approx(1.0, abs=1e-5)


def test_trajectory_reports_blow_up_and_coverage():
    tr = integrate(CUBIC.field, [1.0, 0.5], 3.0)
    assert tr.status == BLEW_UP
    assert tr.t_star == pytest.approx(1.0, abs=1e-5)
    assert tr(0.5) == pytest.approx(cubic_exact(0.5, [1.0, 0.5]), rel=1e-8)
    with pytest.raises(IntervalNotCovered):
        tr(1.5)


def test_maximal_interval_cubicflow():
    est = estimate_maximal_interval(CUBIC.field, [1.0, 1.0])
    assert est.plus_finite
    assert est.tau_plus == pytest.approx(1.0, abs=1e-5)
    assert not est.minus_finite
    est = estimate_maximal_interval(CUBIC.field, [-1.0, -1.0])
    assert est.minus_finite
    assert est.tau_minus == pytest.approx(-1.0, abs=1e-5)
    assert not est.plus_finite


def test_maximal_interval_periodic_is_global():
    est = estimate_maximal_interval(LAYERED.field, [0.2, 0.3])
    assert est.tau_minus == -math.inf and est.tau_plus == math.inf


def test_path_integral_oracles():
    tr = integrate(CUBIC.field, [1.0, 1.0], -1.0)
    assert tr.status == COMPLETED
    assert path_integral(lambda x: 1.0, tr, 0.0, -1.0) == pytest.approx(-1.0, abs=1e-12)
    lap = lambda x: 2 * (x[..., 0] + x[..., 1])
    assert path_integral(lap, tr, 0.0, -1.0) == pytest.approx(-4 * math.log(2), abs=1e-9)
    e1 = VectorFieldDef.constant([1.0])
    tr = integrate(e1, [0.0], 1.0)
    assert path_integral(lambda x: x[..., 0], tr, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_tightening_reduces_defect():
    x = np.array([0.9, 0.4])
    t = 1.0
    exact = cubic_exact(t, x)
    loose = IntegrationConfig(rel_tol=1e-6, abs_tol=1e-8)
    e_loose = np.linalg.norm(advance_flow(CUBIC.field, x, t, loose) - exact)
    e_tight = np.linalg.norm(advance_flow(CUBIC.field, x, t, loose.tightened(10)) - exact)
    assert e_tight * 5 <= e_loose


def test_flow_map_matches_single_trajectories():
    pts = np.array([[0.1, 0.2], [0.5, 0.9], [-0.3, 0.4]])
    batch = flow_map(LAYERED.field, pts, 3.7)
    single = np.array([advance_flow(LAYERED.field, p, 3.7) for p in pts])
    assert np.max(np.abs(batch - single)) <= 1e-9


finite = st.floats(min_value=-0.4, max_value=0.4)


@settings(max_examples=25, deadline=None)
@given(finite, finite, st.floats(min_value=-0.5, max_value=0.5), st.floats(min_value=-0.5, max_value=0.5))
def test_semigroup_cubicflow(x1, x2, s, t):
    x = np.array([x1, x2])
    xt = advance_flow(CUBIC.field, x, t)
    lhs = advance_flow(CUBIC.field, xt, s)
    rhs = advance_flow(CUBIC.field, x, s + t)
    assert np.linalg.norm(lhs - rhs) <= 1e-7 * (1 + np.linalg.norm(rhs))


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-2, max_value=2), st.floats(min_value=-2, max_value=2), st.floats(min_value=-5, max_value=5))
def test_time_reversal_arctan(x1, x2, t):
    b = catalog_get("arctan2d").field
    x = np.array([x1, x2])
    back = advance_flow(b, advance_flow(b, x, t), -t)
    assert np.linalg.norm(back - x) <= 1e-7 * (1 + np.linalg.norm(x))


@settings(max_examples=20, deadline=None)
@given(
    st.floats(min_value=0, max_value=1),
    st.floats(min_value=0, max_value=1),
    st.integers(min_value=-3, max_value=3),
    st.integers(min_value=-3, max_value=3),
    st.floats(min_value=-4, max_value=4),
)
def test_periodic_equivariance(x1, x2, k1, k2, t):
    # shearcos2d is a strongly unstable gradient flow (roundoff of sin(2pi k)
    # is amplified exponentially), so equivariance is checked on layered2d
    b = LAYERED.field
    x = np.array([x1, x2])
    kappa = np.array([k1, k2], dtype=float)
    lhs = advance_flow(b, x + kappa, t)
    rhs = advance_flow(b, x, t) + kappa
    assert np.linalg.norm(lhs - rhs) <= 1e-7 * (1 + np.linalg.norm(rhs))


def test_periodic_equivariance_short_time_shearcos():
    b = catalog_get("shearcos2d").field
    x = np.array([0.2, 0.7])
    for kappa in ([1.0, 0.0], [0.0, -2.0]):
        lhs = advance_flow(b, x + kappa, 0.05)
        rhs = advance_flow(b, x, 0.05) + kappa
        assert np.linalg.norm(lhs - rhs) <= 1e-7 * (1 + np.linalg.norm(rhs))


def test_default_config_values():
    assert DEFAULT_CONFIG.rel_tol == 1e-10
    assert DEFAULT_CONFIG.abs_tol == 1e-12
    assert DEFAULT_CONFIG.blowup_radius == 1e6
    assert DEFAULT_CONFIG.max_time == 1e4
