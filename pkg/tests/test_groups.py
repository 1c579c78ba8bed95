import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fracslice.groups import (
    Subspace,
    close_group,
    convolution_identity_check,
    coordinate_subspace,
    grassmann_metric,
    haar_sample_H,
    is_orthogonal,
    line_subspace,
    planar_rotation,
    project,
    sample_grassmann,
    sample_orthogonal,
)


def test_orthogonal_sign_balance_n1():
    rng = np.random.default_rng(0)
    signs = np.array([sample_orthogonal(1, rng)[0, 0] for _ in range(10_000)])
    assert set(np.unique(signs)) == {-1.0, 1.0}
    counts = [np.sum(signs > 0), np.sum(signs < 0)]
    assert stats.chisquare(counts).pvalue > 0.01


def test_orthogonal_columns_n3():
    g = sample_orthogonal(3, np.random.default_rng(1))
    np.testing.assert_allclose(np.linalg.norm(g, axis=0), 1, atol=1e-10)
    assert is_orthogonal(g)


def test_planar_haar_angle_uniform():
    rng = np.random.default_rng(2)
    angles = []
    for _ in range(10_000):
        g = sample_orthogonal(2, rng)
        angles.append(math.atan2(g[1, 0], g[0, 0]) % (2 * math.pi))
    assert stats.kstest(np.array(angles) / (2 * math.pi), "uniform").pvalue > 0.01


def test_grassmann_line_angle_uniform():
    rng = np.random.default_rng(3)
    ang = []
    for _ in range(10_000):
        v = sample_grassmann(2, 1, rng).basis_V[:, 0]
        ang.append(math.atan2(v[1], v[0]) % math.pi)
    assert stats.kstest(np.array(ang) / math.pi, "uniform").pvalue > 0.01


def test_grassmann_rotation_invariance():
    rng = np.random.default_rng(4)
    g = planar_rotation(0.7)
    a, b = [], []
    for _ in range(4000):
        a.append(sample_grassmann(2, 1, rng).rotated(g).basis_V[:, 0])
        b.append(sample_grassmann(2, 1, rng).basis_V[:, 0])
    ang = lambda vs: np.array([math.atan2(v[1], v[0]) % math.pi for v in vs])
    assert stats.ks_2samp(ang(a), ang(b)).pvalue > 0.01


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.data())
def test_subspace_invariants(n, data):
    m = data.draw(st.integers(1, n - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    V = sample_grassmann(n, m, np.random.default_rng(seed))
    assert V.codim == m and V.dim == n - m
    P, Q = V.projector_V, V.projector_Vperp
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P + Q, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(V.basis_V.T @ V.basis_Vperp, 0, atol=1e-10)


def test_project_examples():
    V = line_subspace([1.0, 1.0])
    np.testing.assert_allclose(project(V, [2.0, 2.0]), 0, atol=1e-15)
    assert np.linalg.norm(project(V, [1.0, -1.0])) == pytest.approx(math.sqrt(2))
    # frozen oracle: distance from (1, 0) to the diagonal
    assert np.linalg.norm(project(V, [1.0, 0.0])) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_grassmann_metric_examples():
    V1, V2 = coordinate_subspace(2, [0]), coordinate_subspace(2, [1])
    assert grassmann_metric(V1, V1) == pytest.approx(0, abs=1e-15)
    assert grassmann_metric(V1, V2) == pytest.approx(1.0)
    W = line_subspace([1.0, 2.0])
    assert grassmann_metric(V1, W) == pytest.approx(grassmann_metric(W, V1))


def test_from_perp_roundtrip():
    V = Subspace.from_perp([0.0, 0.0, 1.0])
    np.testing.assert_allclose(V.projector_V, np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_close_group_sizes():
    assert len(close_group([np.eye(2)])) == 1
    assert len(close_group([planar_rotation(math.pi / 2)])) == 4
    H = close_group([planar_rotation(1.0)], cap=2000)
    assert not H.is_finite


def test_cube_rotation_group():
    rx = np.array([[1.0, 0, 0], [0, 0, -1], [0, 1, 0]])
    rz = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    H = close_group([rx, rz])
    assert len(H) == 24
    # closure and inverses
    for i in range(24):
        for j in range(24):
            k = H.table[i, j]
            np.testing.assert_allclose(H.elements[i] @ H.elements[j], H.elements[k],
                                       atol=H.dedupe_tol)
        assert H.table[i, H.inverse[i]] == 0


def test_haar_finite_frequencies():
    H = close_group([planar_rotation(math.pi / 2)])
    rng = np.random.default_rng(5)
    idx = [H.index_of(haar_sample_H(H, rng)) for _ in range(10_000)]
    counts = np.bincount(idx, minlength=4)
    sigma = math.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 2500) < 3 * sigma)
    triv = close_group([np.eye(2)])
    np.testing.assert_array_equal(haar_sample_H(triv, rng), np.eye(2))


def test_haar_infinite_walk_equidistributed():
    H = close_group([planar_rotation(1.0)], cap=500)
    rng = np.random.default_rng(6)
    angles = [math.atan2(g[1, 0], g[0, 0]) % (2 * math.pi)
              for g in (haar_sample_H(H, rng) for _ in range(3000))]
    assert stats.kstest(np.array(angles) / (2 * math.pi), "uniform").pvalue > 0.01


def test_convolution_identity_examples():
    Q = close_group([planar_rotation(math.pi / 2)])
    quarter = Q.index_of(planar_rotation(math.pi / 2))
    eta = [Fraction(0)] * 4
    eta[quarter] = Fraction(1)
    assert convolution_identity_check(Q, eta, [0]) == (Fraction(1, 4), Fraction(1, 4))
    uniform = [Fraction(1, 4)] * 4
    lhs, rhs = convolution_identity_check(Q, uniform, [0, 2, 3])
    assert lhs == rhs == Fraction(3, 4)
    assert convolution_identity_check(Q, uniform, range(4)) == (1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.booleans(), st.data())
def test_convolution_identity_exact(n, dihedral, data):
    gens = [planar_rotation(2 * math.pi / n)]
    if dihedral:
        gens.append(np.diag([1.0, -1.0]))
    Q = close_group(gens)
    k = len(Q)
    raw = data.draw(st.lists(st.integers(0, 9), min_size=k, max_size=k).filter(any))
    eta = [Fraction(v, sum(raw)) for v in raw]
    E = data.draw(st.sets(st.integers(0, k - 1)))
    lhs, rhs = convolution_identity_check(Q, eta, E)
    assert lhs == rhs
