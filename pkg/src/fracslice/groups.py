"""Orthogonal group, Grassmannian and finite rotation groups.

Subspaces are carried as a pair of orthonormal bases (V and its orthogonal
complement). Every sampler takes an explicit ``rng`` (a
:class:`numpy.random.Generator` or an integer seed).
"""

from __future__ import annotations

import itertools
from collections import deque
from fractions import Fraction

import numpy as np

ORTHO_TOL = 1e-10
DRIFT_TOL = 1e-12

__all__ = [
    "Subspace",
    "RotationGroup",
    "sample_orthogonal",
    "sample_grassmann",
    "close_group",
    "haar_sample_H",
    "convolution_identity_check",
    "project",
    "grassmann_metric",
    "is_orthogonal",
    "reorthonormalize",
    "planar_rotation",
    "coordinate_subspace",
    "line_subspace",
]


def is_orthogonal(matrix, tol=ORTHO_TOL):
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) <= tol)


def reorthonormalize(matrix):
    """Nearest orthogonal matrix (polar factor), applied only past drift."""
    m = np.asarray(matrix, dtype=float)
    if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) <= DRIFT_TOL:
        return m
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def planar_rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class Subspace:
    """A linear subspace ``V`` of R^n together with its complement.

    Parameters
    ----------
    basis_V : array of shape (n, n - m)
        Orthonormal columns spanning ``V``.
    basis_Vperp : array of shape (n, m)
        Orthonormal columns spanning the orthogonal complement.
    """

    def __init__(self, basis_V, basis_Vperp, tol=ORTHO_TOL):
        bv = np.asarray(basis_V, dtype=float)
        bp = np.asarray(basis_Vperp, dtype=float)
        if bv.ndim == 1:
            bv = bv.reshape(-1, 1)
        if bp.ndim == 1:
            bp = bp.reshape(-1, 1)
        n = bv.shape[0]
        if bp.shape[0] != n:
            raise ValueError("bases live in different ambient dimensions")
        if bv.shape[1] + bp.shape[1] != n:
            raise ValueError("dim V + dim V-perp must equal the ambient dimension")
        if bv.shape[1] == 0 or bp.shape[1] == 0:
            raise ValueError("need 1 <= m < n")
        full = np.hstack([bv, bp])
        if np.max(np.abs(full.T @ full - np.eye(n))) > tol:
            raise ValueError("bases are not jointly orthonormal")
        bv.flags.writeable = False
        bp.flags.writeable = False
        self.basis_V = bv
        self.basis_Vperp = bp

    @classmethod
    def from_basis(cls, vectors):
        """Subspace spanned by the columns of ``vectors`` (any basis)."""
        a = np.asarray(vectors, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        n, k = a.shape
        q, _ = np.linalg.qr(np.hstack([a, np.eye(n)]))
        # the first k columns of q span span(a) when a has full rank
        if np.linalg.matrix_rank(a) != k:
            raise ValueError("basis vectors are linearly dependent")
        return cls(q[:, :k], q[:, k:n])

    @classmethod
    def from_perp(cls, vectors):
        """Subspace whose orthogonal complement is spanned by ``vectors``."""
        other = cls.from_basis(vectors)
        return cls(other.basis_Vperp, other.basis_V)

    @property
    def ambient_dim(self):
        return self.basis_V.shape[0]

    @property
    def dim(self):
        return self.basis_V.shape[1]

    @property
    def codim(self):
        return self.basis_Vperp.shape[1]

    @property
    def projector_V(self):
        return self.basis_V @ self.basis_V.T

    @property
    def projector_Vperp(self):
        return self.basis_Vperp @ self.basis_Vperp.T

    def rotated(self, g):
        """The subspace ``gV`` (its complement is ``g V-perp``)."""
        g = np.asarray(g, dtype=float)
        return Subspace(g @ self.basis_V, g @ self.basis_Vperp)

    def project(self, x):
        return project(self, x)

    def key(self, decimals=9):
        """Hashable identifier of the subspace (via its rounded projector)."""
        return np.round(self.projector_Vperp, decimals).tobytes()

    def __repr__(self):
        return f"Subspace(n={self.ambient_dim}, dim={self.dim})"


def coordinate_subspace(n, axes):
    """Subspace spanned by the coordinate axes listed in ``axes``."""
    axes = list(axes)
    rest = [i for i in range(n) if i not in axes]
    eye = np.eye(n)
    return Subspace(eye[:, axes], eye[:, rest])


def line_subspace(direction):
    """The line spanned by ``direction`` in R^n."""
    return Subspace.from_basis(np.asarray(direction, dtype=float).reshape(-1, 1))


def sample_orthogonal(n, rng=None):
    """Haar-distributed element of O(n).

    QR of a Gaussian matrix, with each column of Q multiplied by the sign
    of the matching diagonal entry of R so the result has no orientation
    bias.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    while True:
        z = rng.standard_normal((n, n))
        q, r = np.linalg.qr(z)
        d = np.diag(r)
        if np.all(np.abs(d) > 1e-12):
            return q * np.sign(d)


def sample_grassmann(n, m, rng=None, U=None):
    """Draw ``gU`` for Haar ``g``; ``U`` defaults to the first n - m axes."""
    if not 1 <= m < n:
        raise ValueError("need 1 <= m < n")
    if U is None:
        U = coordinate_subspace(n, range(n - m))
    elif U.ambient_dim != n or U.codim != m:
        raise ValueError("reference subspace has the wrong shape")
    return U.rotated(sample_orthogonal(n, rng))


def project(V, x):
    """Coordinates of the orthogonal projection of ``x`` onto V-perp.

    ``x`` may be a single point (shape (n,)) or a stack (shape (N, n)).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != V.ambient_dim:
        raise ValueError(f"point dimension {x.shape[-1]} != {V.ambient_dim}")
    return x @ V.basis_Vperp


def grassmann_metric(V1, V2):
    """Operator norm of the difference of the two orthogonal projections."""
    if V1.ambient_dim != V2.ambient_dim or V1.dim != V2.dim:
        raise ValueError("subspaces belong to different Grassmannians")
    return float(np.linalg.norm(V1.projector_V - V2.projector_V, ord=2))


class RotationGroup:
    """Closed subgroup of O(n) generated by a finite set of rotations.

    When ``is_finite`` is true ``elements`` holds every element (identity
    first) and ``table[i, j]`` is the index of ``elements[i] @ elements[j]``.
    """

    def __init__(self, generators, elements, is_finite, dedupe_tol):
        self.generators = [np.asarray(g, dtype=float) for g in generators]
        self.is_finite = bool(is_finite)
        self.dedupe_tol = dedupe_tol
        self.elements = np.asarray(elements) if is_finite else None
        self._table = None
        self._inverse = None
        self._lookup = None

    @property
    def ambient_dim(self):
        return self.generators[0].shape[0]

    def __len__(self):
        if not self.is_finite:
            raise TypeError("group is not (detected as) finite")
        return len(self.elements)

    def _build_lookup(self):
        lookup = {}
        for i, e in enumerate(self.elements):
            lookup.setdefault(_grid_key(e), []).append(i)
        self._lookup = lookup

    def index_of(self, matrix):
        """Index of the stored element within ``dedupe_tol`` of ``matrix``."""
        if not self.is_finite:
            raise TypeError("group is not (detected as) finite")
        if self._lookup is None:
            self._build_lookup()
        for i in self._lookup.get(_grid_key(matrix), ()):
            if np.max(np.abs(self.elements[i] - matrix)) < self.dedupe_tol:
                return i
        # fall back to a full scan, e.g. for a key straddling a cell edge
        d = np.max(np.abs(self.elements - matrix), axis=(1, 2))
        i = int(np.argmin(d))
        if d[i] < self.dedupe_tol:
            return i
        raise KeyError("matrix is not an element of the group")

    @property
    def table(self):
        if self._table is None:
            k = len(self)
            table = np.empty((k, k), dtype=np.int64)
            for i, j in itertools.product(range(k), range(k)):
                table[i, j] = self.index_of(self.elements[i] @ self.elements[j])
            self._table = table
        return self._table

    @property
    def inverse(self):
        """``inverse[i]`` is the index of ``elements[i]`` transposed."""
        if self._inverse is None:
            self._inverse = np.array(
                [self.index_of(e.T) for e in self.elements], dtype=np.int64
            )
        return self._inverse

    def __repr__(self):
        size = len(self.elements) if self.is_finite else "inf"
        return f"RotationGroup(n={self.ambient_dim}, size={size})"


def _grid_key(matrix, quantum=1e-6):
    return np.round(np.asarray(matrix) / quantum).astype(np.int64).tobytes()


def close_group(generators, dedupe_tol=1e-9, cap=100_000):
    """Breadth-first closure of ``generators`` under products.

    Elements closer than ``dedupe_tol`` (max-abs entrywise) are merged.
    If more than ``cap`` distinct elements appear the group is reported as
    infinite and its elements are not kept.
    """
    gens = [np.asarray(g, dtype=float) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    n = gens[0].shape[0]
    for g in gens:
        if not is_orthogonal(g):
            raise ValueError("generator is not orthogonal")
    identity = np.eye(n)
    elements = [identity]
    buckets = {_grid_key(identity): [0]}
    queue = deque([0])
    while queue:
        current = elements[queue.popleft()]
        for g in gens:
            prod = reorthonormalize(current @ g)
            key = _grid_key(prod)
            if any(
                np.max(np.abs(elements[i] - prod)) < dedupe_tol
                for i in buckets.get(key, ())
            ):
                continue
            buckets.setdefault(key, []).append(len(elements))
            elements.append(prod)
            queue.append(len(elements) - 1)
            if len(elements) > cap:
                return RotationGroup(gens, None, False, dedupe_tol)
    return RotationGroup(gens, np.stack(elements), True, dedupe_tol)


def haar_sample_H(H, rng=None, word_len=64, max_power=2**20):
    """Sample from (an approximation of) Haar measure on ``H``.

    Finite groups are sampled exactly. Otherwise the product of
    ``word_len`` random steps ``g^(+-n)`` is returned, ``g`` a uniformly
    drawn generator and ``n`` uniform on ``1..max_power``. This random-walk
    stand-in for Haar measure mixes through the long jumps; its quality
    still depends on the generators.
    """
    rng = np.random.default_rng(rng)
    if H.is_finite:
        return H.elements[rng.integers(len(H.elements))].copy()
    gens = H.generators
    out = np.eye(H.ambient_dim)
    for i, n, sign in zip(rng.integers(len(gens), size=word_len),
                          rng.integers(1, max_power + 1, size=word_len),
                          rng.integers(2, size=word_len)):
        g = gens[i] if sign else gens[i].T
        out = reorthonormalize(out @ np.linalg.matrix_power(g, int(n)))
    return out


def convolution_identity_check(Q, eta, E):
    """Both sides of ``nu(E) = int eta(E q^-1) d nu(q)`` on a finite group.

    ``nu`` is the uniform (Haar) measure on ``Q``; ``eta`` is a probability
    vector indexed like ``Q.elements`` and ``E`` an iterable of indices.
    With :class:`fractions.Fraction` weights the comparison is exact.
    """
    k = len(Q)
    eta = list(eta)
    if len(eta) != k:
        raise ValueError("eta must have one weight per group element")
    exact = all(isinstance(w, (int, Fraction)) for w in eta)
    total = sum(eta) if exact else float(np.sum(np.asarray(eta, dtype=float)))
    if (exact and total != 1) or (not exact and abs(total - 1.0) > 1e-12):
        raise ValueError("eta is not normalized")
    E = sorted(set(int(e) for e in E))
    table, inv = Q.table, Q.inverse
    if exact:
        lhs = Fraction(len(E), k)
        rhs = sum(
            (sum((eta[table[e, inv[q]]] for e in E), Fraction(0)) for q in range(k)),
            Fraction(0),
        ) / k
        return lhs, rhs
    w = np.asarray(eta, dtype=float)
    lhs = len(E) / k
    rhs = sum(
        float(np.sum(w[[table[e, inv[q]] for e in E]])) if E else 0.0
        for q in range(k)
    ) / k
    return lhs, rhs
