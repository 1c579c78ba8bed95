"""Atomic measures, projections, ball masses and finite-scale densities.

Upper and lower densities are limits; here they are estimated by the
largest and smallest ratio ``nu(B(x, eps)) / (2 eps)**m`` over a dyadic
ladder of scales, keeping only scales at least ``guard`` times the
resolution of the discretization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .groups import Subspace, project

__all__ = [
    "EstimationError",
    "DiscreteMeasure",
    "DensityProfile",
    "DensityParams",
    "ProductCantorMeasure",
    "pushforward_project",
    "ball_mass",
    "density_profile",
    "F_estimate",
    "frostman_check",
    "write_atoms_csv",
]

# above this many atoms a per-query linear scan beats building an index
_INDEX_LIMIT = 2**21


class EstimationError(ValueError):
    """A density or mass could not be estimated at the available scales."""


def _masses_from_distances(dist, weights, eps):
    """Closed-ball masses ``sum(weights[dist <= e])`` for every ``e`` in eps."""
    eps = np.asarray(eps, dtype=float)
    near = dist <= eps.max()
    if near.mean() < 0.5:
        dist, weights = dist[near], weights[near]
    order = np.argsort(eps, kind="stable")
    # atom i counts towards every radius from rank[i] on
    rank = np.searchsorted(eps[order], dist, side="left")
    per = np.bincount(rank, weights=weights, minlength=len(eps) + 1)
    out = np.empty(len(eps))
    out[order] = np.cumsum(per[: len(eps)])
    return out


class DiscreteMeasure:
    """Finitely many weighted atoms approximating a probability measure.

    Parameters
    ----------
    points : array of shape (N, k)
    weights : array of shape (N,)
        Positive, summing to one.
    resolution : float
        Largest diameter of the piece of the true measure one atom stands
        for.
    tree : (n_symbols, depth), optional
        Set when atom ``i`` is the image of the cylinder whose word has
        lexicographic rank ``i``; enables cylinder restriction.
    """

    def __init__(self, points, weights, resolution, tree=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(pts) or len(w) == 0:
            raise ValueError("need one positive weight per atom")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        pts.flags.writeable = False
        w.flags.writeable = False
        self.points = pts
        self.weights = w
        self.resolution = float(resolution)
        self.tree = tree
        self._index = None
        self._proj_cache = {}
        self._extent = None

    @property
    def extent(self):
        """Diagonal of the bounding box of the atoms (>= their diameter)."""
        if self._extent is None:
            self._extent = float(np.linalg.norm(np.ptp(self.points, axis=0)))
        return self._extent

    @property
    def ambient(self):
        return self.points.shape[1]

    @property
    def n_atoms(self):
        return len(self.weights)

    @property
    def total(self):
        return math.fsum(self.weights)

    def block(self, word):
        """Index range ``[start, stop)`` of the atoms inside cylinder ``word``."""
        if self.tree is None:
            raise ValueError("measure carries no cylinder structure")
        n_sym, depth = self.tree
        word = tuple(word)
        if len(word) > depth:
            raise ValueError(f"word longer than the discretization depth {depth}")
        idx = 0
        for s in word:
            idx = idx * n_sym + int(s)
        size = n_sym ** (depth - len(word))
        return idx * size, (idx + 1) * size

    def build_index(self):
        """Sorted 1D index or k-d tree, for many queries on one measure."""
        if self._index is None:
            if self.ambient == 1:
                order = np.argsort(self.points[:, 0], kind="stable")
                self._index = (
                    "sorted",
                    self.points[order, 0],
                    np.concatenate([[0.0], np.cumsum(self.weights[order])]),
                )
            else:
                self._index = ("kdtree", cKDTree(self.points))
        return self

    def ball_masses(self, x, eps, block=None):
        """Masses of the closed balls ``B(x, e)`` for each ``e`` in ``eps``.

        With ``block=(start, stop)`` only atoms in that range count.
        """
        x = np.asarray(x, dtype=float).reshape(self.ambient)
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        if block is None and self._index is not None:
            kind = self._index[0]
            if kind == "sorted":
                _, u, cum = self._index
                hi = np.searchsorted(u, x[0] + eps, side="right")
                lo = np.searchsorted(u, x[0] - eps, side="left")
                return cum[hi] - cum[lo]
            tree = self._index[1]
            idx = tree.query_ball_point(x, eps.max())
            if not idx:
                return np.zeros_like(eps)
            d = np.linalg.norm(self.points[idx] - x, axis=1)
            return _masses_from_distances(d, self.weights[idx], eps)
        sl = slice(None) if block is None else slice(*block)
        pts = self.points[sl]
        if self.ambient == 1:
            d = np.abs(pts[:, 0] - x[0])
        else:
            d = np.sqrt(np.einsum("ij,ij->i", pts - x, pts - x))
        return _masses_from_distances(d, self.weights[sl], eps)

    def projected(self, V):
        """Cached :func:`pushforward_project` (the last few subspaces)."""
        # coordinates depend on the basis, not just on the subspace
        key = np.round(V.basis_Vperp, 12).tobytes()
        hit = self._proj_cache.get(key)
        if hit is None:
            hit = pushforward_project(self, V)
            if len(self._proj_cache) >= 4:
                self._proj_cache.pop(next(iter(self._proj_cache)))
            self._proj_cache[key] = hit
        return hit

    def slab_masses(self, x, V, eps, cylinder=None):
        """Masses of ``{y : |P_{V-perp}(y - x)| <= e}``, optionally in a cylinder."""
        nu = self.projected(V)
        block = None if cylinder is None else self.block(cylinder)
        if block is not None and block == (0, self.n_atoms):
            block = None
        return nu.ball_masses(project(V, x), eps, block=block)

    def __repr__(self):
        return (
            f"DiscreteMeasure(atoms={self.n_atoms}, ambient={self.ambient}, "
            f"resolution={self.resolution:.3g})"
        )


def pushforward_project(mu, V):
    """Image of ``mu`` under the projection onto V-perp (in V-perp coordinates)."""
    if mu.ambient != V.ambient_dim:
        raise ValueError("measure and subspace live in different dimensions")
    nu = DiscreteMeasure.__new__(DiscreteMeasure)
    pts = mu.points @ V.basis_Vperp
    pts.flags.writeable = False
    nu.points = pts
    nu.weights = mu.weights
    nu.resolution = mu.resolution
    nu.tree = mu.tree
    nu._index = None
    nu._proj_cache = {}
    nu._extent = None
    if pts.shape[1] == 1 and mu.n_atoms <= _INDEX_LIMIT // 4:
        nu.build_index()
    return nu


def ball_mass(nu, x, eps):
    """Mass of the closed ball ``B(x, eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return float(nu.ball_masses(x, [eps])[0])


@dataclass(frozen=True)
class DensityParams:
    """Scale ladder for density estimates.

    ``eps0=None`` places the ladder so its finest scale sits exactly at
    ``guard * resolution``, unless that pushes the coarsest scale past a
    quarter of the support's extent (balls that large see the whole
    support); then the coarsest scale is capped there and the window
    shrinks.
    """

    levels: int = 6
    guard: float = 10.0
    eps0: float | None = None

    def ladder(self, resolution, extent=None):
        if self.levels < 4:
            raise ValueError("need at least 4 levels")
        eps0 = self.eps0
        if eps0 is None:
            eps0 = self.guard * resolution * 2.0 ** (self.levels - 1)
            if extent is not None and extent > 0:
                eps0 = min(eps0, extent / 4)
        return eps0 * 2.0 ** -np.arange(self.levels)


@dataclass(frozen=True)
class DensityProfile:
    """Density ratios of a measure at one point over a dyadic ladder."""

    exponent: float
    scales: np.ndarray
    ratios: np.ndarray
    valid_window: np.ndarray = field(repr=False)
    theta_lower_hat: float
    theta_upper_hat: float

    @property
    def window_ratios(self):
        return self.ratios[self.valid_window]

    @property
    def variation(self):
        """Spread of the windowed ratios relative to their minimum."""
        r = self.window_ratios
        return float((r.max() - r.min()) / r.min()) if r.min() > 0 else math.inf

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["eps", "ratio", "in_window"])
            for e, r, v in zip(self.scales, self.ratios, self.valid_window):
                out.writerow([repr(float(e)), repr(float(r)), int(v)])


def profile_from_masses(masses, scales, exponent, resolution, guard):
    scales = np.asarray(scales, dtype=float)
    ratios = np.asarray(masses, dtype=float) / (2.0 * scales) ** exponent
    window = scales >= guard * resolution * (1 - 1e-12)
    if not window.any():
        raise EstimationError(
            f"no scale above guard * resolution = {guard * resolution:.3g}"
        )
    return DensityProfile(
        exponent=exponent,
        scales=scales,
        ratios=ratios,
        valid_window=window,
        theta_lower_hat=float(ratios[window].min()),
        theta_upper_hat=float(ratios[window].max()),
    )


def density_profile(nu, x, m, eps0=None, levels=6, guard=10.0):
    """Windowed estimates of the lower and upper ``m``-densities of nu at x.

    Returns
    -------
    DensityProfile
        ``theta_lower_hat`` / ``theta_upper_hat`` are the min / max ratio
        over scales ``>= guard * nu.resolution``.
    """
    scales = DensityParams(levels, guard, eps0).ladder(nu.resolution, getattr(nu, "extent", None))
    masses = nu.ball_masses(x, scales)
    return profile_from_masses(masses, scales, m, nu.resolution, guard)


def F_estimate(mu, x, h, V, params=DensityParams()):
    """Profile of the projection of ``mu`` onto ``(hV)``-perp at the image of x.

    ``theta_lower_hat`` of the result is the working estimate of the lower
    ``m``-density ``F_V(x, h)``, ``m = codim V``.
    """
    hV = V if h is None else V.rotated(h)
    nu = mu.projected(hV)
    return density_profile(
        nu, project(hV, x), hV.codim, params.eps0, params.levels, params.guard
    )


class ProductCantorMeasure:
    """Discretized ``mu_a x mu_b`` on ``C_a x C_b``.

    Each factor keeps ``2**depth`` atoms at the left endpoints of its
    depth-level intervals, so atoms are sorted and a cylinder is a
    contiguous range in either factor. Weights are dyadic, so masses of
    unions of cylinders are exact in floating point.
    """

    def __init__(self, a, b, depth_x=12, depth_y=12):
        if not 0 < a < b < 0.5:
            raise ValueError("need 0 < a < b < 1/2")
        self.a, self.b = float(a), float(b)
        self.depth_x, self.depth_y = int(depth_x), int(depth_y)
        self.xs = cantor_left_endpoints(a, depth_x)
        self.ys = cantor_left_endpoints(b, depth_y)
        self.wx = 2.0**-depth_x
        self.wy = 2.0**-depth_y
        self.resolution = math.hypot(a**depth_x, b**depth_y)

    @property
    def ambient(self):
        return 2

    def as_discrete(self):
        """Full 2D atom list (``x`` major, matching word order)."""
        xx, yy = np.meshgrid(self.xs, self.ys, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        w = np.full(len(pts), self.wx * self.wy)
        return DiscreteMeasure(pts, w, self.resolution)

    def _range(self, word, depth):
        word = tuple(word)
        if len(word) > depth:
            raise ValueError("word deeper than the discretization")
        idx = 0
        for s in word:
            idx = 2 * idx + int(s)
        size = 2 ** (depth - len(word))
        return idx * size, (idx + 1) * size

    def cylinder_ranges(self, cylinder):
        wx, wy = cylinder if cylinder is not None else ((), ())
        return self._range(wx, self.depth_x), self._range(wy, self.depth_y)

    def box_mass(self, xlo, xhi, ylo, yhi):
        """Mass of the closed box ``[xlo, xhi] x [ylo, yhi]``."""
        nx = np.searchsorted(self.xs, xhi, "right") - np.searchsorted(self.xs, xlo, "left")
        ny = np.searchsorted(self.ys, yhi, "right") - np.searchsorted(self.ys, ylo, "left")
        return float(nx * self.wx) * float(ny * self.wy)

    def ball_masses(self, z, eps):
        """Closed-ball masses around ``z`` for each radius in ``eps``."""
        z = np.asarray(z, dtype=float).reshape(2)
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = np.empty(len(eps))
        for i, e in enumerate(eps):
            lo = np.searchsorted(self.xs, z[0] - e, side="left")
            hi = np.searchsorted(self.xs, z[0] + e, side="right")
            dx = self.xs[lo:hi] - z[0]
            half = np.sqrt(np.maximum(e * e - dx * dx, 0.0))
            cnt = (np.searchsorted(self.ys, z[1] + half, "right")
                   - np.searchsorted(self.ys, z[1] - half, "left"))
            out[i] = cnt.sum() * self.wx * self.wy
        return out

    def slab_masses(self, z, V, eps, cylinder=None):
        """Masses of ``{p : |e . (p - z)| <= eps}``, ``e`` spanning V-perp.

        ``cylinder`` is an ``(x_word, y_word)`` pair restricting the atoms.
        """
        z = np.asarray(z, dtype=float).reshape(2)
        e = V.basis_Vperp[:, 0] if isinstance(V, Subspace) else np.asarray(V, float)
        e = e / np.linalg.norm(e)
        if e[1] < 0:
            e = -e
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        (x0, x1), (y0, y1) = self.cylinder_ranges(cylinder)
        xs = self.xs[x0:x1] - z[0]
        ys = self.ys[y0:y1]
        out = np.empty(len(eps))
        if abs(e[1]) < 1e-14:
            # slab perpendicular to the x-axis
            for i, r in enumerate(eps):
                nx = np.count_nonzero(np.abs(xs) <= r)
                out[i] = nx * self.wx * len(ys) * self.wy
            return out
        shift = z[1] - e[0] * xs / e[1]
        for i, r in enumerate(eps):
            lo = np.searchsorted(ys, shift - r / e[1], "left")
            hi = np.searchsorted(ys, shift + r / e[1], "right")
            out[i] = float((hi - lo).sum()) * self.wx * self.wy
        return out

    def __repr__(self):
        return (
            f"ProductCantorMeasure(a={self.a}, b={self.b}, "
            f"depth=({self.depth_x}, {self.depth_y}))"
        )


def cantor_left_endpoints(rho, depth):
    """Left endpoints of the ``2**depth`` level-``depth`` intervals of C_rho, sorted."""
    pts = np.zeros(1)
    for _ in range(depth):
        pts = np.concatenate([rho * pts, rho * pts + 1.0 - rho])
    return pts


def frostman_check(mu, a, b, k_max=8, samples=200, rng=None):
    """Sampled check of ``mu(B(z, delta a^k)) <= 2 a^(k (d_a + d_b))``.

    ``delta = 1 - 2b``. Centres are drawn from the atoms. The discrete mass
    is taken at the radius shrunk by the resolution, which never exceeds
    the true mass of the ball.

    Returns
    -------
    dict
        ``violations``, ``max_ratio`` (largest mass / bound) and the number
        of (z, k) pairs checked.
    """
    if not 0 < a < b < 0.5:
        raise ValueError("need 0 < a < b < 1/2")
    rng = np.random.default_rng(rng)
    d_sum = math.log(2) / math.log(1 / a) + math.log(2) / math.log(1 / b)
    delta = 1.0 - 2.0 * b
    ks = np.arange(k_max + 1)
    radii = delta * a**ks
    bounds = 2.0 * a ** (ks * d_sum)
    zs = np.column_stack([
        mu.xs[rng.integers(len(mu.xs), size=samples)],
        mu.ys[rng.integers(len(mu.ys), size=samples)],
    ])
    shrunk = np.maximum(radii - mu.resolution, 0.0)
    worst, violations = 0.0, 0
    for z in zs:
        mass = mu.ball_masses(z, np.where(shrunk > 0, shrunk, radii * 1e-300))
        ratio = mass / bounds
        violations += int(np.count_nonzero(ratio > 1.0))
        worst = max(worst, float(ratio.max()))
    return {
        "checked": samples * len(ks),
        "violations": violations,
        "max_ratio": worst,
        "slack": mu.resolution,
    }


def write_atoms_csv(mu, path):
    """Atom dump: one coordinate column per dimension plus ``weight``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow([f"x{i}" for i in range(mu.ambient)] + ["weight"])
        for p, w in zip(mu.points, mu.weights):
            out.writerow([repr(float(v)) for v in p] + [repr(float(w))])
