import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbyhj.bounds import bound_curve, drift_for, initial_levels, lipschitz_decay, phi_to_drift
from rbyhj.grid import line_grid, periodic_grid
from rbyhj.paths import DrivingPath, brownian, deterministic, running_extrema
from rbyhj.pde_step import FirstOrder, FullyNonlinear1D, Zero, p_laplace

L = np.array([0.1, 0.5, 1.0, 3.0])


def test_catalog_first_order_is_constant():
    spec = FirstOrder(F=lambda p: 0.5 * 1.3 * p * p, R=2.0)
    V = drift_for(spec)
    # sampled sup |F''| carries the 1% safety inflation
    np.testing.assert_allclose(V(L), -1.3 * 1.01, rtol=1e-6)


def test_catalog_p_laplace_cubic():
    V = drift_for(p_laplace(3, R=1.0))
    np.testing.assert_allclose(V(L), -2.0 / L, rtol=1e-14)


def test_catalog_concave_monotone_F_is_zero():
    spec = FullyNonlinear1D(F=lambda r: -np.exp(-r), semiconcavity=0.0)
    assert np.all(drift_for(spec)(L) == 0)
    assert np.all(drift_for(Zero())(L) == 0)


def test_catalog_fully_nonlinear_semiconcave():
    V = drift_for(FullyNonlinear1D(F=np.tanh, semiconcavity=0.4), "minus")
    np.testing.assert_allclose(V(L), -0.4 * (1 + L**2))


def test_catalog_rejects_bad_input():
    with pytest.raises(ValueError):
        drift_for(Zero(), "up")
    with pytest.raises(TypeError):
        drift_for(object())


def test_phi_to_drift_examples():
    assert np.all(phi_to_drift(lambda lam: 0 * lam)(L) == 0)
    np.testing.assert_allclose(phi_to_drift(lambda lam: 0.7 * lam**2)(L), -0.7)
    N, axx, axp, app = 1, 0.3, 0.2, 2.0
    V = phi_to_drift(lambda lam: N * lam * axx + 2 * N * lam**2 * axp + N * lam**3 * app)
    np.testing.assert_allclose(V(L), -N * axx * L - 2 * N * axp - N * app / L)


def test_initial_levels():
    u = periodic_grid(lambda x: np.sin(x), 2000, 2 * np.pi)
    lp, lm = initial_levels(u)
    assert lp == pytest.approx(1.0, rel=1e-5) and lm == pytest.approx(1.0, rel=1e-5)
    assert initial_levels(line_grid(lambda x: 0 * x, 10, 0, 1)) == (math.inf, math.inf)


def test_zero_class_sine_path():
    xi = deterministic("sine", 6.0, 600)
    Lp, Lm, curve = bound_curve(Zero(), xi, 0.0, 0.0)
    ext = running_extrema(xi)
    np.testing.assert_allclose(Lp.L, xi.values - ext.running_min, atol=1e-12)
    np.testing.assert_allclose(Lm.L, ext.running_max - xi.values, atol=1e-12)
    assert math.isinf(curve.bound[0])


def test_first_order_running_min_form():
    c = 0.4
    xi = deterministic("sine", 6.0, 60_000, amplitude=1.0, omega=1.0)
    Lp, _, _ = bound_curve(FirstOrder(F=lambda p: 0.5 * c * p * p, fpp_norm=c, R=1.0), xi, 0.0, 0.0)
    y = xi.values - c * xi.times
    expected = y - np.minimum.accumulate(y)
    # the stopped-flow scheme is the maximal solution; it differs by O(c dt)
    assert np.max(np.abs(Lp.L - expected)) <= 2 * c * xi.dt


def test_quasilinear_closed_form_curve():
    xi = deterministic("zero", 0.5, 500)
    _, _, curve = bound_curve(p_laplace(3, R=1.0), xi, 1.0, math.inf)
    t = curve.times
    before = t < 0.25 - 1e-9
    np.testing.assert_allclose(curve.bound[before], 1 / np.sqrt(1 - 4 * t[before]), rtol=1e-10)
    assert np.all(np.isinf(curve.bound[t >= 0.25 + 1e-9]))


def test_bound_curve_csv_and_index():
    xi = deterministic("zero", 1.0, 4)
    _, _, curve = bound_curve(Zero(), xi, 0.0, 1.0)
    assert curve.to_csv().splitlines()[0] == "t,L_plus,L_minus,bound"
    assert "inf" in curve.to_csv()
    assert curve.index_of(0.5) == 2
    with pytest.raises(ValueError):
        curve.index_of(0.3)


def test_lipschitz_decay_examples():
    assert np.all(lipschitz_decay(0.0, np.ones(3), np.ones(3)) == 0)
    np.testing.assert_allclose(lipschitz_decay(1.0, np.full(4, 2.0), np.zeros(4)), 1.0)
    assert math.isinf(lipschitz_decay(1.0, np.zeros(2), np.zeros(2))[0])
    with pytest.raises(ValueError):
        lipschitz_decay(-1.0, np.ones(2), np.ones(2))


def test_zero_class_decay_is_range_formula():
    xi = brownian(1.0, 4096, 1.0, seed=9)
    Lp, Lm, _ = bound_curve(Zero(), xi, 0.0, 0.0)
    osc = 2.0
    ext = running_extrema(xi)
    rng_ = ext.running_max - ext.running_min
    with np.errstate(divide="ignore"):
        expected = np.where(rng_ > 0, np.sqrt(2 * osc / np.where(rng_ > 0, rng_, 1)), np.inf)
    np.testing.assert_allclose(lipschitz_decay(osc, Lp, Lm)[1:], expected[1:], rtol=1e-12)


SPECS = [Zero(), FirstOrder(F=lambda p: 0.5 * p * p, R=1.0), p_laplace(3, R=1.0)]


@st.composite
def paths(draw):
    n = draw(st.integers(2, 30))
    inc = draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n))
    return DrivingPath(np.linspace(0, 1, n + 1), np.concatenate(([0.0], np.cumsum(inc))))


levels = st.floats(0, 3)


@pytest.mark.property
@given(paths(), st.sampled_from(range(len(SPECS))), levels, levels)
def test_reversing_signal_swaps_processes(xi, k, a, b):
    Lp, Lm, _ = bound_curve(SPECS[k], xi, a, b)
    Rp, Rm, _ = bound_curve(SPECS[k], -xi, b, a)
    np.testing.assert_array_equal(Lp.L, Rm.L)
    np.testing.assert_array_equal(Lm.L, Rp.L)


@pytest.mark.property
@given(paths(), st.sampled_from(range(len(SPECS))), levels, levels, st.floats(0, 2))
def test_raising_initial_levels_never_lowers_processes(xi, k, a, b, extra):
    Lp, Lm, _ = bound_curve(SPECS[k], xi, a, b)
    Hp, Hm, _ = bound_curve(SPECS[k], xi, a + extra, b + extra)
    assert np.all(Hp.L >= Lp.L - 1e-12) and np.all(Hm.L >= Lm.L - 1e-12)


@pytest.mark.property
@given(paths(), st.sampled_from(range(len(SPECS))), levels, levels)
def test_curve_finite_iff_both_positive(xi, k, a, b):
    Lp, Lm, curve = bound_curve(SPECS[k], xi, a, b)
    assert np.array_equal(np.isfinite(curve.bound), (Lp.L > 0) & (Lm.L > 0))
