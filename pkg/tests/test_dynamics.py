import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fracslice.dynamics import (
    ProductSystem,
    SkewProduct,
    SkewState,
    birkhoff_average,
    direction,
    ergodicity_diagnostic,
    measure_preservation_check,
    renormalize_direction,
    step_T,
    step_T_product,
)
from fracslice.groups import planar_rotation
from fracslice.ifs import cantor_ifs, corner_ifs

# frozen oracle values: alpha = log 3 / log 4 and its rotations of 0.1, 0.3
ALPHA = 0.7924812503605781
T1_FROM_01 = 0.8924812503605781
T1_FROM_03 = 0.0924812503605781


@pytest.fixture(scope="module")
def rotated_square():
    return SkewProduct(corner_ifs(2, 1 / 3, rotations=[planar_rotation(math.pi / 2)] * 4))


@pytest.fixture(scope="module")
def product():
    return ProductSystem(0.25, 1 / 3, 1.0)


def test_fixed_point_is_fixed():
    system = SkewProduct(cantor_ifs(0.25))
    state = system.state_from_address(np.zeros(40, dtype=int))
    nxt = step_T(system, state)
    np.testing.assert_allclose(nxt.x, state.x, atol=1e-15)
    np.testing.assert_array_equal(nxt.h, state.h)


def test_inverse_branch_from_coordinates():
    system = SkewProduct(cantor_ifs(0.25))
    state = SkewState(np.array([0.8]), np.eye(1))
    assert system.step(state).x[0] == pytest.approx(0.2, abs=1e-15)


def test_skew_closed_form(rotated_square):
    rng = np.random.default_rng(0)
    for _ in range(10):
        state = rotated_square.sample_state(rng, 80)
        orbit = rotated_square.orbit(state, 30)
        for k in (1, 7, 30):
            x, h, w = rotated_square.power_closed_form(state, k)
            np.testing.assert_allclose(x, orbit[k].x, atol=1e-9)
            np.testing.assert_allclose(h, orbit[k].h, atol=1e-9)
            assert w == rotated_square.word(state, k)


def test_group_bookkeeping(rotated_square):
    rng = np.random.default_rng(1)
    H = rotated_square.H
    state = rotated_square.sample_state(rng, 60)
    orbit = rotated_square.orbit(state, 25)
    for k in (5, 25):
        hw = np.eye(2)
        for sym in rotated_square.word(state, k):
            hw = hw @ rotated_square.ifs.rotations[sym]
        np.testing.assert_allclose(orbit[k].h, hw.T @ state.h, atol=1e-9)
        np.testing.assert_allclose(H.elements[orbit[k].h_index], orbit[k].h, atol=1e-9)


def test_product_no_wrap_first_step(product):
    assert product.alpha == pytest.approx(ALPHA, abs=1e-15)
    state = product.state_from_addresses([1, 0, 1], [0, 1, 1], 0.0)
    nxt = step_T_product(product, state)
    assert nxt.x == state.x
    assert nxt.t == pytest.approx(ALPHA)
    assert nxt.wraps == 0


def test_product_y_fixed_point(product):
    state = product.state_from_addresses(np.zeros(40, int), np.zeros(40, int), 0.5)
    assert product.step(state).y == 0.0


def test_product_closed_form(product):
    rng = np.random.default_rng(2)
    for _ in range(10):
        state = product.sample_state(rng, 80)
        orbit = product.orbit(state, 30)
        for k in (1, 13, 30):
            x, y, tk, l = product.power_closed_form(state, k)
            assert l == orbit[k].wraps == math.floor(state.t + k * product.alpha)
            assert abs(x - orbit[k].x) < 1e-9 and abs(y - orbit[k].y) < 1e-9
            assert abs(tk - orbit[k].t) < 1e-12


def test_rotation_equidistributed(product):
    state = product.sample_state(np.random.default_rng(3), 10)
    ts = []
    for _ in range(10_000):
        ts.append(state.t)
        state = product.step(state)
    assert stats.kstest(ts, "uniform").pvalue > 0.01


def test_direction_examples(product):
    V0 = direction(product, 0.0)
    np.testing.assert_allclose(np.abs(V0.basis_V[:, 0]), [1 / math.sqrt(2)] * 2, atol=1e-15)
    V = direction(product, 0.5)
    v = V.basis_V[:, 0]
    np.testing.assert_allclose(v / -v[1], [0.5, -1.0], atol=1e-12)
    assert abs(V.basis_V[:, 0] @ V.basis_Vperp[:, 0]) < 1e-12


def test_renormalize_examples(product):
    assert renormalize_direction(product, 0.4, 0) == (0, 0.4, 0.0)
    l, t1, res = renormalize_direction(product, 0.1, 1)
    assert l == 0 and t1 == pytest.approx(T1_FROM_01, abs=1e-12) and res < 1e-10
    l, t1, res = renormalize_direction(product, 0.3, 1)
    assert l == 1 and t1 == pytest.approx(T1_FROM_03, abs=1e-12) and res < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(0, 40),
       st.sampled_from([1.0, 0.25, 4.0]))
def test_renormalization_residual(t0, k, tau):
    system = ProductSystem(0.25, 1 / 3, tau)
    l, tk, res = renormalize_direction(system, t0, k)
    assert res < 1e-10
    assert 0 <= tk < 1
    assert abs(l + tk - (t0 + k * system.alpha)) < 1e-12


def test_occupation_quarter_cantor():
    system = SkewProduct(cantor_ifs(0.25))
    rep = measure_preservation_check(system, 1, 100, 100, np.random.default_rng(4))
    sigma = math.sqrt(0.25 / rep["samples"])
    assert np.all(np.abs(rep["frequency"] - 0.5) < 3 * sigma)


def test_occupation_product_marginals(product):
    rep = measure_preservation_check(product, 1, 100, 100, np.random.default_rng(5), t_bins=10)
    freq = rep["frequency"].reshape(2, 2, 10)
    n = rep["samples"]
    y = freq.sum(axis=(0, 2))
    assert np.all(np.abs(y - 0.5) < 3 * math.sqrt(0.25 / n))
    t = freq.sum(axis=(0, 1))
    # orbits of the rotation are strongly correlated; use the per-orbit count
    assert np.all(np.abs(t - 0.1) < 3 * math.sqrt(0.09 / 100))


def test_occupation_discrepancy_shrinks(rotated_square):
    d = [measure_preservation_check(rotated_square, 2, n, 100, np.random.default_rng(6))["discrepancy"]
         for n in (10, 100, 1000)]
    assert d[0] > d[1] > d[2]


def test_birkhoff_examples(product):
    skew = SkewProduct(cantor_ifs(0.25))
    start = skew.sample_state(np.random.default_rng(7), 10_050)
    assert birkhoff_average(skew, lambda s: 1.0, start, 100) == 1.0
    avg = birkhoff_average(skew, lambda s: skew.first_symbol(s) == 0, start, 10_000)
    assert abs(avg - 0.5) < 0.02
    ps = product.sample_state(np.random.default_rng(8), 10)
    assert abs(birkhoff_average(product, lambda s: s.t < 0.5, ps, 10_000) - 0.5) < 0.02


def test_ergodicity_diagnostic(product):
    rng = np.random.default_rng(9)
    starts = [product.sample_state(rng, 2100) for _ in range(4)]
    rep = ergodicity_diagnostic(product, lambda s: s.y < 0.5, starts, 2000)
    assert rep["consistent"]
    assert abs(rep["pooled"] - 0.5) < 0.05
