"""Self-similar iterated function systems under strong separation.

Words are tuples of 0-based map indices. Cylinder ``K_w`` is the image of
the attractor under ``phi_w = phi_{w[0]} o ... o phi_{w[-1]}``; enumerating
``Lambda^depth`` always follows lexicographic order with the first symbol
most significant, so the atoms of one cylinder form a contiguous block.
"""

from __future__ import annotations

import configparser
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .groups import ORTHO_TOL, is_orthogonal
from .measure import DiscreteMeasure

logger = logging.getLogger(__name__)

DEFAULT_ATOM_BUDGET = 2**24
_SAMPLE_BUDGET = 2048

__all__ = [
    "IFSError",
    "SeparationError",
    "SSCViolationError",
    "SSCUndecidedError",
    "CodingError",
    "SimilarityMap",
    "Cylinder",
    "Ifs",
    "similarity_dimension",
    "build_ifs",
    "separation_constant",
    "code_of_point",
    "attractor_atoms",
    "cantor_ifs",
    "corner_ifs",
    "read_ifs",
    "write_ifs",
    "word_index",
]


class IFSError(ValueError):
    pass


class SeparationError(IFSError):
    """Strong separation could not be established."""


class SSCViolationError(SeparationError):
    """First-level images (numerically) intersect."""


class SSCUndecidedError(SeparationError):
    """No certified positive gap within the refinement budget."""


class CodingError(IFSError):
    """A point is too far from the attractor to be coded."""


def similarity_dimension(ratios):
    """Unique ``s >= 0`` with ``sum(r ** s) == 1`` (the Moran equation)."""
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("need a nonempty list of ratios")
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError("ratios must lie in (0, 1)")
    if r.size == 1:
        return 0.0
    if np.all(r == r[0]):
        return math.log(r.size) / -math.log(r[0])

    def excess(s):
        return math.fsum(r**s) - 1.0

    if excess(64.0) > 0:
        raise ValueError("similarity dimension exceeds the bracket [0, 64]")
    return brentq(excess, 0.0, 64.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True, eq=False)
class SimilarityMap:
    """``x -> ratio * rotation @ x + translation``."""

    ratio: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        ratio = float(self.ratio)
        if not 0.0 < ratio < 1.0:
            raise ValueError(f"ratio {ratio} outside (0, 1)")
        rot = np.atleast_2d(np.array(self.rotation, dtype=float))
        trans = np.atleast_1d(np.array(self.translation, dtype=float))
        if rot.shape != (trans.size, trans.size):
            raise ValueError("rotation and translation dimensions disagree")
        if not is_orthogonal(rot, ORTHO_TOL):
            raise ValueError("rotation is not orthogonal")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "ratio", ratio)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @property
    def dim(self):
        return self.translation.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.ratio * (x @ self.rotation.T) + self.translation

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        return ((x - self.translation) @ self.rotation) / self.ratio

    def fixed_point(self):
        n = self.dim
        return np.linalg.solve(np.eye(n) - self.ratio * self.rotation, self.translation)

    def compose(self, other):
        """``self o other``."""
        return SimilarityMap(
            self.ratio * other.ratio,
            self.rotation @ other.rotation,
            self.ratio * (self.rotation @ other.translation) + self.translation,
        )


@dataclass(frozen=True, eq=False)
class Cylinder:
    word: tuple
    ratio: float
    rotation: np.ndarray
    translation: np.ndarray
    weight: float
    center: np.ndarray
    radius: float

    @property
    def map(self):
        return SimilarityMap(self.ratio, self.rotation, self.translation)


def word_index(word, n_symbols):
    """Lexicographic rank of ``word`` among words of the same length."""
    idx = 0
    for sym in word:
        idx = idx * n_symbols + int(sym)
    return idx


class Ifs:
    """A self-similar IFS satisfying the strong separation condition.

    Construction computes the similarity dimension, the natural weights,
    a bounding ball and diameter of the attractor and a certified lower
    bound on the separation constant; it raises :class:`SeparationError`
    when separation cannot be certified.
    """

    def __init__(self, maps, *, separation_rtol=0.01, max_pairs=400_000):
        maps = list(maps)
        if len(maps) < 2:
            raise IFSError("an IFS needs at least two maps")
        n = maps[0].dim
        if any(m.dim != n for m in maps):
            raise IFSError("maps act on different ambient dimensions")
        self.maps = tuple(maps)
        self.ambient_dim = n
        self.n_maps = len(maps)
        self.ratios = np.array([m.ratio for m in maps])
        self.rotations = np.stack([m.rotation for m in maps])
        self.translations = np.stack([m.translation for m in maps])
        for arr in (self.ratios, self.rotations, self.translations):
            arr.flags.writeable = False
        self.rotation_free = bool(
            np.max(np.abs(self.rotations - np.eye(n))) <= ORTHO_TOL
        )
        self.sim_dim = similarity_dimension(self.ratios)
        self.weights = self.ratios**self.sim_dim
        self.weights.flags.writeable = False
        self.min_ratio = float(self.ratios.min())
        self.anchor = maps[0].fixed_point()
        self._bounding_ball()
        self._sample_extent()
        self.separation = separation_constant(
            self, rtol=separation_rtol, max_pairs=max_pairs
        )
        self._coder = None

    # -- geometry -------------------------------------------------------
    def _bounding_ball(self):
        fixed = np.stack([m.fixed_point() for m in self.maps])
        c = fixed.mean(axis=0)
        # phi_l(B(c, R)) inside B(c, R) for every l certifies K inside B(c, R)
        r0 = max(
            np.linalg.norm(m(c) - c) / (1.0 - m.ratio) for m in self.maps
        )
        depth = self._sample_depth()
        centers = self.images(c, depth)
        ratios = self.level_ratios(depth)
        radius = float(np.max(np.linalg.norm(centers - c, axis=1) + ratios * r0))
        self.hull_center = c
        self.hull_radius = min(r0, radius)
        self.invariant_radius = r0

    def _sample_depth(self, budget=_SAMPLE_BUDGET):
        return max(1, int(math.log(budget) / math.log(self.n_maps)))

    def _sample_extent(self):
        depth = self._sample_depth()
        pts = self.images(self.anchor, depth)
        slack = float(self.ratios.max() ** depth * self.hull_radius)
        if len(pts) > 1:
            span = float(pdist(pts).max()) if self.ambient_dim > 1 else float(
                np.ptp(pts[:, 0])
            )
        else:
            span = 0.0
        self.diameter = span + 2.0 * slack
        self.bounding_box = np.stack([pts.min(axis=0) - slack, pts.max(axis=0) + slack])
        if not self.diameter > 0:
            raise IFSError("degenerate attractor")
        # the bounding ball around a point of conv(K) never needs radius > diam
        self.hull_radius = min(self.hull_radius, self.diameter)

    # -- symbolic structure ----------------------------------------------
    def images(self, points, depth):
        """``phi_w(p)`` for every word of length ``depth`` and every point.

        Output rows are ordered by word (lexicographic) and then by input
        point.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        for _ in range(depth):
            if self.rotation_free:
                blocks = [r * pts + a for r, a in zip(self.ratios, self.translations)]
            else:
                blocks = [
                    r * (pts @ h.T) + a
                    for r, h, a in zip(self.ratios, self.rotations, self.translations)
                ]
            pts = np.concatenate(blocks)
        return pts

    def level_ratios(self, depth):
        out = np.ones(1)
        for _ in range(depth):
            out = np.concatenate([r * out for r in self.ratios])
        return out

    def level_weights(self, depth):
        out = np.ones(1)
        for _ in range(depth):
            out = np.concatenate([p * out for p in self.weights])
        return out

    def compose(self, word):
        """Ratio, rotation and translation of ``phi_word``."""
        ratio, rot, trans = 1.0, np.eye(self.ambient_dim), np.zeros(self.ambient_dim)
        for sym in word:
            trans = trans + ratio * (rot @ self.translations[sym])
            rot = rot @ self.rotations[sym]
            ratio *= self.ratios[sym]
        return ratio, rot, trans

    def cylinder(self, word):
        word = tuple(int(s) for s in word)
        if any(not 0 <= s < self.n_maps for s in word):
            raise IFSError(f"word {word} uses unknown symbols")
        ratio, rot, trans = self.compose(word)
        center = ratio * (rot @ self.hull_center) + trans
        return Cylinder(
            word=word,
            ratio=ratio,
            rotation=rot,
            translation=trans,
            weight=float(np.prod([self.weights[s] for s in word])) if word else 1.0,
            center=center,
            radius=ratio * self.hull_radius,
        )

    def point_from_address(self, address):
        """``phi_address(anchor)``; ``address`` of shape (L,) or (N, L)."""
        addr = np.asarray(address, dtype=np.int64)
        single = addr.ndim == 1
        addr = np.atleast_2d(addr)
        y = np.tile(self.anchor, (addr.shape[0], 1))
        for col in range(addr.shape[1] - 1, -1, -1):
            sym = addr[:, col]
            if self.rotation_free:
                y = self.ratios[sym][:, None] * y + self.translations[sym]
            else:
                y = (
                    self.ratios[sym][:, None]
                    * np.einsum("nij,nj->ni", self.rotations[sym], y)
                    + self.translations[sym]
                )
        return y[0] if single else y

    def sample_addresses(self, n, length, rng=None):
        """I.i.d. symbols with probabilities ``weights``: points drawn from mu."""
        rng = np.random.default_rng(rng)
        return rng.choice(self.n_maps, size=(n, length), p=self.weights)

    def __repr__(self):
        return (
            f"Ifs(n={self.ambient_dim}, maps={self.n_maps}, s={self.sim_dim:.6g}, "
            f"rho={self.separation:.6g})"
        )


def build_ifs(maps, **kwargs):
    """Validate ``maps`` and return the :class:`Ifs` they generate."""
    return Ifs(maps, **kwargs)


def _children(ifs, ratio, rot, trans):
    """All one-symbol extensions of a stack of cylinders (symbol-major)."""
    k = len(ratio)
    r = np.concatenate([ratio * lam for lam in ifs.ratios])
    h = np.concatenate([rot @ g for g in ifs.rotations])
    t = np.concatenate([
        trans + ratio[:, None] * np.einsum("kij,j->ki", rot, a) for a in ifs.translations
    ])
    return r, h, t, np.tile(np.arange(k), ifs.n_maps)


def _apply(ratio, rot, trans, p):
    return ratio[:, None] * np.einsum("kij,j->ki", rot, p) + trans


def separation_constant(ifs, rtol=0.01, max_pairs=400_000):
    """Certified lower bound on the minimal gap between first-level images.

    Pairs of cylinders from different first-level branches are refined
    level by level. A pair's hull balls give the lower bound
    ``|c_u - c_v| - r_u - r_v`` and distances between cylinder anchors
    (points of the attractor) an upper bound on the gap; pairs whose lower
    bound exceeds the upper bound are retired. Refinement stops once the
    bounds agree to ``rtol`` or the number of live pairs would exceed
    ``max_pairs``.
    """
    n, R = ifs.n_maps, ifs.hull_radius
    i, j = np.triu_indices(n, 1)
    A = (ifs.ratios[i].copy(), ifs.rotations[i].copy(), ifs.translations[i].copy())
    B = (ifs.ratios[j].copy(), ifs.rotations[j].copy(), ifs.translations[j].copy())
    upper, best, retired = math.inf, -math.inf, math.inf
    while True:
        ca, cb = _apply(*A, ifs.hull_center), _apply(*B, ifs.hull_center)
        aa, ab = _apply(*A, ifs.anchor), _apply(*B, ifs.anchor)
        lbs = np.linalg.norm(ca - cb, axis=1) - (A[0] + B[0]) * R
        upper = min(upper, float(np.linalg.norm(aa - ab, axis=1).min()))
        best = max(best, min(float(lbs.min()), retired))
        if best > 0 and upper - best <= rtol * best:
            return best
        keep = lbs < upper
        if np.any(~keep):
            retired = min(retired, float(lbs[~keep].min()))
        A = tuple(x[keep] for x in A)
        B = tuple(x[keep] for x in B)
        if len(A[0]) * n > max_pairs or len(A[0]) == 0:
            break
        # split the larger cylinder of each pair
        left = A[0] >= B[0]
        ra, ha, ta, ia = _children(ifs, *(x[left] for x in A))
        rb, hb, tb, ib = _children(ifs, *(x[~left] for x in B))
        A = tuple(np.concatenate([u, x[~left][ib]]) for u, x in zip((ra, ha, ta), A))
        B = tuple(np.concatenate([x[left][ia], u]) for u, x in zip((rb, hb, tb), B))
    if best > 0:
        logger.warning(
            "separation bound %.6g not within rtol=%g of %.6g (pair budget %d)",
            best, rtol, upper, max_pairs,
        )
        return best
    if upper <= 1e-6 * ifs.diameter:
        raise SSCViolationError(
            f"first-level images meet (attractor points {upper:.3g} apart)"
        )
    raise SSCUndecidedError(
        f"no positive separation bound within {max_pairs} pairs "
        f"(bound {best:.3g}, observed gap <= {upper:.3g})"
    )


class _Coder:
    """Nearest-anchor lookup deciding the first symbol of a point near K."""

    def __init__(self, ifs):
        err_target = ifs.separation / 8.0
        depth = 1
        while ifs.ratios.max() ** depth * ifs.diameter > err_target and depth < 64:
            depth += 1
        if ifs.n_maps**depth > 2**22:
            raise CodingError("coding table would exceed the atom budget")
        pts = ifs.images(ifs.anchor, depth)
        per_branch = ifs.n_maps ** (depth - 1)
        self.labels = np.repeat(np.arange(ifs.n_maps), per_branch)
        self.error = float(ifs.ratios.max() ** depth * ifs.diameter)
        self.tree = cKDTree(pts)
        self.tolerance = ifs.separation / 4.0

    def first_symbol(self, y):
        dist, idx = self.tree.query(y)
        if dist > self.tolerance + self.error:
            raise CodingError(
                f"point is {dist:.3g} from the attractor (tolerance {self.tolerance:.3g})"
            )
        return int(self.labels[idx])


def code_of_point(ifs, x, depth):
    """The word ``w_depth(x)`` of the depth-``depth`` cylinder containing x.

    Works in renormalized coordinates: at each level the point is mapped
    back through the chosen map, so the acceptance tolerance rho * r_w / 4
    becomes rho / 4. Floating point limits the usable depth to roughly
    ``log(eps) / log(max ratio)``; deeper codes need symbolic addresses.
    """
    if ifs._coder is None:
        ifs._coder = _Coder(ifs)
    y = np.asarray(x, dtype=float).reshape(ifs.ambient_dim)
    word = []
    for _ in range(depth):
        sym = ifs._coder.first_symbol(y)
        word.append(sym)
        y = ifs.maps[sym].inverse(y)
    return tuple(word)


def attractor_atoms(ifs, depth, max_atoms=DEFAULT_ATOM_BUDGET):
    """Depth-``depth`` discretization of the natural measure.

    One atom per word ``w`` at ``phi_w(anchor)`` with weight ``p_w``;
    resolution is the largest atom support diameter ``max r_w * diam K``.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if ifs.n_maps**depth > max_atoms:
        raise IFSError(
            f"{ifs.n_maps}**{depth} atoms exceed the budget of {max_atoms}"
        )
    points = ifs.images(ifs.anchor, depth)
    weights = ifs.level_weights(depth)
    resolution = float(ifs.ratios.max() ** depth * ifs.diameter)
    return DiscreteMeasure(
        points, weights, resolution, tree=(ifs.n_maps, depth)
    )


# -- common families ------------------------------------------------------

def cantor_ifs(rho):
    """``{x -> rho x, x -> rho x + 1 - rho}`` on the line."""
    if not 0 < rho < 0.5:
        raise ValueError("need 0 < rho < 1/2")
    eye = np.eye(1)
    return Ifs([SimilarityMap(rho, eye, [0.0]), SimilarityMap(rho, eye, [1.0 - rho])])


def corner_ifs(n, ratio, rotations=None, **kwargs):
    """``2**n`` maps sending the unit cube onto its corner sub-cubes.

    ``rotations`` (one orthogonal matrix per corner, optional) act about
    the cube centre, so each corner image is still an axis-parallel cube
    and separation holds whenever ``ratio < 1/2``.
    """
    corners = list(itertools.product([0.0, 1.0 - ratio], repeat=n))
    centre = np.full(n, 0.5)
    if rotations is None:
        rotations = [np.eye(n)] * len(corners)
    maps = []
    for corner, h in zip(corners, rotations):
        h = np.asarray(h, dtype=float)
        # x -> ratio * (h (x - c) + c) + corner
        maps.append(SimilarityMap(ratio, h, ratio * (centre - h @ centre) + np.array(corner)))
    return Ifs(maps, **kwargs)


# -- file format ----------------------------------------------------------

def _numbers(text):
    # whitespace separated decimals or fractions such as 2/3
    return np.array([float(Fraction(tok)) for tok in text.split()])


def read_ifs(path, **kwargs):
    """Read an IFS definition (``[ifs]`` plus one ``[map.*]`` per map)."""
    cfg = configparser.ConfigParser()
    with open(path) as fh:
        cfg.read_file(fh)
    return ifs_from_config(cfg, **kwargs)


def ifs_from_config(cfg, **kwargs):
    try:
        n = cfg.getint("ifs", "ambient_dim")
    except (configparser.Error, ValueError) as exc:
        raise IFSError(f"bad [ifs] section: {exc}") from None
    maps = []
    for name in sorted((s for s in cfg.sections() if s.startswith("map.")),
                       key=lambda s: int(s.split(".", 1)[1])):
        sec = cfg[name]
        try:
            rot = sec.get("rotation")
            rotation = np.eye(n) if rot is None else _numbers(rot).reshape(n, n)
            translation = _numbers(sec["translation"])
            ratio = float(Fraction(sec["ratio"].strip()))
        except (KeyError, ValueError, ZeroDivisionError) as exc:
            raise IFSError(f"{name}: {exc}") from None
        if translation.size != n:
            raise IFSError(f"{name}: translation has {translation.size} entries, need {n}")
        maps.append(SimilarityMap(ratio, rotation, translation))
    return Ifs(maps, **kwargs)


def write_ifs(ifs, path):
    cfg = configparser.ConfigParser()
    cfg["ifs"] = {"ambient_dim": str(ifs.ambient_dim)}
    for i, m in enumerate(ifs.maps):
        cfg[f"map.{i}"] = {
            "ratio": repr(m.ratio),
            "rotation": " ".join(repr(float(v)) for v in m.rotation.ravel()),
            "translation": " ".join(repr(float(v)) for v in m.translation),
        }
    with open(path, "w") as fh:
        cfg.write(fh)
