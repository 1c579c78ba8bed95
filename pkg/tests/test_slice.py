import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracslice.dynamics import ProductSystem, SkewProduct
from fracslice.groups import coordinate_subspace, planar_rotation, sample_grassmann
from fracslice.ifs import attractor_atoms, corner_ifs
from fracslice.measure import DensityParams, ProductCantorMeasure, F_estimate
from fracslice.slice import (
    LABELS,
    Thresholds,
    classify,
    conditional_mass_direct,
    conditional_mass_recursion,
    density_trace,
    lemma17_check,
    product_cylinder_lower_bound,
    recursion_masses,
    slice_box_dimension,
    slice_masses,
)

H_POS, H_ZERO, P_INF, INCONCLUSIVE = LABELS
ETA = 0.1309297535714573  # 1/2 + log 2 / log 3 - 1
D_B = 0.6309297535714574  # log 2 / log 3


@pytest.fixture(scope="module")
def square():
    ifs = corner_ifs(2, 1 / 3)
    return SkewProduct(ifs), attractor_atoms(ifs, 9)


@pytest.fixture(scope="module")
def product():
    return ProductSystem(0.25, 1 / 3, 1.0), ProductCantorMeasure(0.25, 1 / 3, 12, 12)


def _sample(system, rng):
    return system.sample_state(rng, 60), sample_grassmann(2, 1, rng)


def test_empty_word_has_full_mass(square):
    system, mu = square
    state, V = _sample(system, np.random.default_rng(0))
    d = conditional_mass_direct(mu, state.x, V, ())
    np.testing.assert_array_equal(d.ratios, 1.0)
    assert conditional_mass_recursion(system, mu, state, V, 0).value == 1.0


def test_sibling_masses_sum_to_one(square):
    system, mu = square
    rng = np.random.default_rng(1)
    for _ in range(5):
        state, V = _sample(system, rng)
        parts = [conditional_mass_direct(mu, state.x, V, (s,), allow_empty=True) for s in range(4)]
        total = sum(p.value for p in parts)
        # exact for the shared finest slab; variation bounds the other scales
        assert abs(total - 1) <= 1e-12 + 2 * sum(p.variation for p in parts)


def test_vertical_slice_misses_right_column(square):
    system, mu = square
    x = mu.points[7]  # word (0, ..., 0, 1, 3): bottom-left corner
    assert x[0] < 1 / 3
    V = coordinate_subspace(2, [1])
    for s in (2, 3):  # right-hand corners
        assert conditional_mass_direct(mu, x, V, (s,), allow_empty=True).value == 0.0


def test_recursion_matches_direct(square):
    system, mu = square
    rng = np.random.default_rng(2)
    errors = []
    for _ in range(20):
        state, V = _sample(system, rng)
        rec = recursion_masses(system, mu, state, V, 4)
        for k in range(1, 5):
            d = conditional_mass_direct(mu, state.x, V, system.word(state, k))
            errors.append(abs(rec[k].value - d.value) / d.value)
    assert np.median(errors) <= 0.25


def test_recursion_telescopes_and_shares_F0(square):
    system, mu = square
    state, V = _sample(system, np.random.default_rng(3))
    rec = recursion_masses(system, mu, state, V, 4)
    assert rec[0].value == 1.0
    assert len({r.F0 for r in rec[1:]}) == 1
    steps = [rec[k].value / rec[k - 1].value for k in range(1, 5)]
    assert math.prod(steps) == pytest.approx(rec[4].value, rel=1e-12)
    single = conditional_mass_recursion(system, mu, state, V, 3)
    assert single.value == pytest.approx(rec[3].value, rel=1e-12)


def test_direct_masses_nested(square):
    system, mu = square
    rng = np.random.default_rng(4)
    for _ in range(5):
        state, V = _sample(system, rng)
        sm = slice_masses(system, mu, state, V, 4)
        words = sorted(sm.masses, key=len)
        for a, b in zip(words, words[1:]):
            tol = 2 * (sm.variations[a] + sm.variations[b])
            assert sm.masses[b] <= sm.masses[a] + tol + 1e-12


def test_trace_on_square_is_finite_and_repeatable(square):
    system, mu = square
    rng = np.random.default_rng(5)
    state, V = _sample(system, rng)
    a = density_trace(system, mu, state, V, 20)
    b = density_trace(system, mu, state, V, 20)
    assert len(a) == 20
    assert np.all(np.isfinite(a.F_lower))
    np.testing.assert_array_equal(a.F_lower, b.F_lower)


def test_trace_invariant_under_stabilizer():
    ifs = corner_ifs(2, 1 / 3, rotations=[planar_rotation(math.pi / 2)] * 4)
    system = SkewProduct(ifs)
    mu = attractor_atoms(ifs, 8)
    rng = np.random.default_rng(6)
    address = ifs.sample_addresses(1, 80, rng)[0]
    V = sample_grassmann(2, 1, rng)
    h = system.H.elements[1]
    flip = -np.eye(2)  # fixes every line
    a = density_trace(system, mu, system.state_from_address(address, h), V, 10)
    b = density_trace(system, mu, system.state_from_address(address, h @ flip), V, 10)
    np.testing.assert_allclose(a.F_lower, b.F_lower, rtol=1e-9)


def test_guard_stability_on_cube():
    ifs = corner_ifs(3, 0.45)
    mu = attractor_atoms(ifs, 7)
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(10):
        x = ifs.point_from_address(ifs.sample_addresses(1, 40, rng)[0])
        V = sample_grassmann(3, 1, rng)
        f10 = F_estimate(mu, x, None, V, DensityParams(guard=10)).theta_lower_hat
        f20 = F_estimate(mu, x, None, V, DensityParams(guard=20)).theta_lower_hat
        ratios.append(f20 / f10)
    assert abs(np.median(ratios) - 1) <= 0.2


def test_classify_examples():
    assert classify(np.ones(40)) == H_POS
    assert classify(1.5 ** np.arange(40)) == H_ZERO
    assert classify(1.5 ** -np.arange(40.0)) == P_INF
    with pytest.raises(ValueError):
        classify(np.ones(10))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=30, max_size=60))
def test_classify_is_pure(F):
    F = np.array(F)
    label, summary = classify(F, Thresholds(), return_summary=True)
    assert label in LABELS
    assert classify(F.copy()) == label
    if label == H_ZERO:
        assert summary["max"] > 10 * summary["median"]


def test_product_bound_k0(product):
    system, mu = product
    state = system.sample_state(np.random.default_rng(8), 80)
    r = product_cylinder_lower_bound(system, mu, state, 0)
    assert r["l"] == 0
    assert r["lower_bound"] == pytest.approx(0.125, rel=1e-12)
    assert r["direct"] == 1.0 and r["holds"]


def test_product_bound_holds_mostly(product):
    system, mu = product
    rng = np.random.default_rng(9)
    held = [product_cylinder_lower_bound(system, mu, system.sample_state(rng, 80),
                                         int(rng.integers(0, 5)))["holds"] for _ in range(40)]
    assert np.mean(held) >= 0.95


def test_lemma17_examples(product):
    _, mu = product
    assert lemma17_check(mu, (0,), (1,)) == (0.25, 0.25)
    lhs, rhs = lemma17_check(mu, (1, 0, 1), (0, 0), (1,), (1, 1, 0))
    assert lhs == rhs


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=4),
       st.lists(st.integers(0, 1), min_size=1, max_size=4),
       st.lists(st.integers(0, 1), max_size=6),
       st.lists(st.integers(0, 1), max_size=6))
def test_lemma17_property(w1, w2, u1, u2):
    mu = ProductCantorMeasure(0.25, 1 / 3, 10, 10)
    lhs, rhs = lemma17_check(mu, tuple(w1), tuple(w2), tuple(u1), tuple(u2))
    assert abs(lhs - rhs) <= 1e-12


def test_box_dimension_product(product):
    system, _ = product
    rng = np.random.default_rng(10)
    slopes = [slice_box_dimension(system, system.sample_state(rng, 80).z,
                                  sample_grassmann(2, 1, rng), range(2, 21)) for _ in range(10)]
    assert abs(np.mean(slopes) - ETA) <= 0.05
    z = system.sample_state(rng, 80).z
    axis = slice_box_dimension(system, z, coordinate_subspace(2, [1]), range(2, 13))
    assert abs(axis - D_B) <= 0.05


def test_box_dimension_critical_case():
    ifs = corner_ifs(2, 0.25)  # C_1/4 x C_1/4, s = 1
    # counts grow sub-polynomially, so the fitted slope decays slowly with depth
    rng = np.random.default_rng(11)
    slopes = []
    for _ in range(5):
        x = ifs.point_from_address(ifs.sample_addresses(1, 40, rng)[0])
        slopes.append(slice_box_dimension(ifs, x, sample_grassmann(2, 1, rng), range(2, 21)))
    assert abs(np.mean(slopes)) <= 0.1
