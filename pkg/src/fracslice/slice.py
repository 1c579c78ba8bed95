"""Conditional measures on slices, density traces and slice dimensions.

Two independent routes give the conditional mass of a cylinder on the
slice ``x + V``:

* the direct route divides the mass of the cylinder inside a thin slab
  around the slice by the mass of the whole slab;
* the recursion route multiplies ``r_w ** (s - m)`` by the ratio of the
  projected lower densities at ``T^k(x, h)`` and at ``(x, h)``.

Both use the same finite-scale density estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import OrbitTrace, ProductSystem, SkewProduct, direction
from .groups import Subspace
from .ifs import Ifs
from .measure import (
    DensityParams,
    EstimationError,
    F_estimate,
    ProductCantorMeasure,
    profile_from_masses,
)

__all__ = [
    "EmptySlabError",
    "RecursionUnavailableError",
    "DirectMass",
    "SliceMeasure",
    "Thresholds",
    "SliceEstimate",
    "conditional_mass_direct",
    "conditional_mass_recursion",
    "recursion_masses",
    "F_hat",
    "density_trace",
    "classify",
    "summarize_trace",
    "product_cylinder_lower_bound",
    "lemma17_check",
    "slice_box_dimension",
    "box_counts",
]

LABELS = ("H-positive-evidence", "H-zero-evidence", "P-infinite-evidence", "inconclusive")


class EmptySlabError(EstimationError):
    """The slab around the slice holds no mass at the finest valid scale."""


class RecursionUnavailableError(EstimationError):
    """The density at the base point vanishes or cannot be estimated."""


@dataclass(frozen=True)
class DirectMass:
    value: float
    variation: float
    scales: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)


def conditional_mass_direct(mu, x, V, word, params=DensityParams(), allow_empty=False):
    """Slab estimate of the conditional mass of cylinder ``word`` on ``x + V``.

    Parameters
    ----------
    mu : DiscreteMeasure or ProductCantorMeasure
        For a product measure ``word`` is a pair ``(x_word, y_word)``.
    params : DensityParams
        The slab half-widths are the valid part of this ladder.

    Returns
    -------
    DirectMass
        ``value`` is the ratio at the finest valid scale; ``variation`` is
        the spread of the ratio over the three finest valid scales.
    """
    scales = params.ladder(mu.resolution)
    valid = scales >= params.guard * mu.resolution * (1 - 1e-12)
    if not valid.any():
        raise EstimationError("no slab width above the resolution guard")
    scales = scales[valid]
    full = mu.slab_masses(x, V, scales)
    if _is_root(word):
        part = full
    else:
        part = mu.slab_masses(x, V, scales, cylinder=word)
    if full[-1] <= 0:
        if allow_empty:
            return DirectMass(0.0, 0.0, scales, np.zeros_like(scales))
        raise EmptySlabError("slab around the slice carries no mass")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(full > 0, part / full, np.nan)
    tail = ratios[-3:]
    tail = tail[np.isfinite(tail)]
    return DirectMass(float(ratios[-1]), float(np.ptp(tail)) if len(tail) else 0.0,
                      scales, ratios)


def _is_root(word):
    if word is None:
        return True
    if len(word) == 2 and all(isinstance(p, tuple) for p in word):
        return len(word[0]) == 0 and len(word[1]) == 0
    return len(word) == 0


def F_hat(system, mu, state, V, params=DensityParams()):
    """Density profile whose ``theta_lower_hat`` estimates F at ``state``.

    For the skew product this is the lower ``m``-density of the projection
    onto ``(hV)``-perp; for the product system the lower 1-density of the
    projection onto ``W^t`` (``V`` is ignored there: the state fixes it).
    """
    if isinstance(system, ProductSystem):
        Vt = direction(system, state.t)
        scales = params.ladder(mu.resolution)
        masses = mu.slab_masses(state.z, Vt, scales)
        return profile_from_masses(masses, scales, 1, mu.resolution, params.guard)
    return F_estimate(mu, state.x, state.h, V, params)


@dataclass(frozen=True)
class RecursionMass:
    value: float
    word: tuple
    ratio: float
    F0: float
    Fk: float


def conditional_mass_recursion(system, mu, state, V, k, params=DensityParams()):
    """``F(x, h)^{-1} r_w^{s - m} F(T^k(x, h))`` with ``w = w_k(x)``.

    ``system`` is a :class:`SkewProduct`; F is estimated by
    ``theta_lower_hat`` at both ends.
    """
    return recursion_masses(system, mu, state, V, k, params)[-1]


def recursion_masses(system, mu, state, V, k_max, params=DensityParams()):
    """Recursion masses of ``w_0(x), ..., w_k_max(x)`` sharing one F(x, h)."""
    ifs = system.ifs
    m = V.codim
    out = [RecursionMass(1.0, (), 1.0, math.nan, math.nan)]
    if k_max == 0:
        return out
    try:
        F0 = F_hat(system, mu, state, V, params).theta_lower_hat
    except EstimationError as exc:
        raise RecursionUnavailableError(str(exc)) from None
    if not F0 > 0:
        raise RecursionUnavailableError("estimated density at the base point is zero")
    end = state
    for k in range(1, k_max + 1):
        end = system.step(end)
        word = system.word(state, k)
        Fk = F_hat(system, mu, end, V, params).theta_lower_hat
        r_w = float(np.prod(ifs.ratios[list(word)]))
        out.append(RecursionMass(r_w ** (ifs.sim_dim - m) * Fk / F0, word, r_w, F0, Fk))
    return out


@dataclass
class SliceMeasure:
    """Conditional cylinder masses on the slice ``base_x + subspace``."""

    base_x: np.ndarray
    subspace: Subspace
    method: str
    masses: dict = field(default_factory=dict)
    variations: dict = field(default_factory=dict)

    def mass(self, word):
        word = tuple(word)
        return 1.0 if not word else self.masses[word]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["word", "mass", "method", "variation"])
            for w in sorted(self.masses, key=lambda w: (len(w), w)):
                out.writerow(["".join(map(str, w)), repr(float(self.masses[w])),
                              self.method, repr(float(self.variations.get(w, 0.0)))])


def slice_masses(system, mu, state, V, k_max, method="direct", params=DensityParams()):
    """:class:`SliceMeasure` of the nested cylinders ``w_0(x), ..., w_k_max(x)``."""
    sm = SliceMeasure(np.asarray(state.x), V, method)
    for k in range(1, k_max + 1):
        if method == "direct":
            w = system.word(state, k)
            hV = V.rotated(state.h)
            d = conditional_mass_direct(mu, state.x, hV, w, params)
            sm.masses[w], sm.variations[w] = d.value, d.variation
        elif method == "recursion":
            if k == 1:
                for r in recursion_masses(system, mu, state, V, k_max, params)[1:]:
                    sm.masses[r.word] = r.value
        else:
            raise ValueError(f"unknown method {method!r}")
    return sm


def density_trace(system, mu, start, V, n_steps, params=DensityParams()):
    """F estimates along ``start, T start, ..., T^(n_steps - 1) start``.

    Estimation failures are recorded per step (F set to NaN).
    """
    states, words, ratios = [], [], []
    lo, hi, errors = [], [], []
    state = start
    ifs = system.ifs if isinstance(system, SkewProduct) else None
    for k in range(n_steps):
        states.append(state)
        if isinstance(system, ProductSystem):
            words.append(system.words(start, k))
            l = len(words[-1][0])
            ratios.append(system.a**l * system.b**k)
        else:
            w = system.word(start, k)
            words.append(w)
            ratios.append(float(np.prod(ifs.ratios[list(w)])) if w else 1.0)
        try:
            prof = F_hat(system, mu, state, V, params)
            lo.append(prof.theta_lower_hat)
            hi.append(prof.theta_upper_hat)
        except (EstimationError, ValueError) as exc:
            lo.append(math.nan)
            hi.append(math.nan)
            errors.append((k, str(exc)))
        if k + 1 < n_steps:
            state = system.step(state)
    return OrbitTrace(states, words, np.array(ratios), np.array(lo), np.array(hi), errors)


@dataclass(frozen=True)
class Thresholds:
    """Heuristic thresholds turning an F trace into a regime label."""

    blowup_factor: float = 10.0
    trend_fraction: float = 1 / 3
    min_length: int = 30


def summarize_trace(F, thresholds=Thresholds()):
    """Running extremes and trend flags of an F trace (NaNs dropped)."""
    F = np.asarray(F, dtype=float)
    F = F[np.isfinite(F)]
    if len(F) < thresholds.min_length:
        raise ValueError(
            f"trace has {len(F)} usable values, need {thresholds.min_length}"
        )
    run_max = np.maximum.accumulate(F)
    run_min = np.minimum.accumulate(F)
    cut = len(F) - max(1, int(math.ceil(thresholds.trend_fraction * len(F))))
    med = float(np.median(F))
    k = np.arange(len(F))
    tail = slice(cut, None)
    logmax = np.log(np.maximum(run_max, 1e-300))
    logmin = np.log(np.maximum(run_min, 1e-300))
    return {
        "median": med,
        "max": float(run_max[-1]),
        "min": float(run_min[-1]),
        "max_growing": bool(run_max[-1] > run_max[cut - 1]),
        "min_falling": bool(run_min[-1] < run_min[cut - 1]),
        "max_slope": float(np.polyfit(k[tail], logmax[tail], 1)[0]) if len(F) - cut > 1 else 0.0,
        "min_slope": float(np.polyfit(k[tail], logmin[tail], 1)[0]) if len(F) - cut > 1 else 0.0,
    }


def classify(F, thresholds=Thresholds(), return_summary=False):
    """Regime label of an F trace.

    * H-zero-evidence: the running max exceeds ``blowup_factor`` times the
      median and rose during the final ``trend_fraction`` of the trace;
    * P-infinite-evidence: the running min is below the median over
      ``blowup_factor`` and fell during the final stretch;
    * H-positive-evidence: neither running extreme moved in the final
      stretch;
    * inconclusive otherwise.

    ``F`` may be an :class:`OrbitTrace` (its ``F_lower`` is used).
    """
    if isinstance(F, OrbitTrace):
        F = F.F_lower
    s = summarize_trace(F, thresholds)
    bf = thresholds.blowup_factor
    s["h_zero"] = s["max_growing"] and s["max"] > bf * s["median"]
    s["p_infinite"] = s["min_falling"] and s["min"] < s["median"] / bf
    if s["h_zero"]:
        label = LABELS[1]
    elif s["p_infinite"]:
        label = LABELS[2]
    elif not s["max_growing"] and not s["min_falling"]:
        label = LABELS[0]
    else:
        label = LABELS[3]
    return (label, s) if return_summary else label


@dataclass
class SliceEstimate:
    """Per-slice diagnostics; the thresholds are echoed with the label."""

    box_dim_hat: float
    trace_summary: dict
    classification: str
    thresholds: Thresholds
    notes: str = ""

    def row(self):
        out = {"box_dim_hat": self.box_dim_hat, "classification": self.classification}
        out.update({k: v for k, v in self.trace_summary.items()})
        out.update({f"threshold_{k}": v for k, v in asdict(self.thresholds).items()})
        out["notes"] = self.notes
        return out


# ---------------------------------------------------------------------------
# product Cantor system


def product_cylinder_lower_bound(system, mu, state, k, params=DensityParams()):
    """Lower bound and direct estimate of the slice mass of a product cylinder.

    The cylinder is ``C_{a, w_l(x)} x C_{b, w_k(y)}`` with
    ``l = floor(t0 + k alpha)`` and the slice is ``z + V^{t0}``. The bound is
    ``(a / 2) 2^(-l-k) b^(-k) F(T^k(z, t0)) / F(z, t0)``.

    Returns
    -------
    dict
        ``lower_bound``, ``direct``, ``slack`` (variation of the direct
        estimate) and ``holds`` (``direct >= lower_bound - slack``).
    """
    if not isinstance(mu, ProductCantorMeasure):
        raise TypeError("needs a ProductCantorMeasure")
    wx, wy = system.words(state, k)
    l = len(wx)
    F0 = F_hat(system, mu, state, None, params).theta_lower_hat
    end = state
    for _ in range(k):
        end = system.step(end)
    Fk = F_hat(system, mu, end, None, params).theta_lower_hat
    if not F0 > 0:
        raise EstimationError("estimated density at the base point is zero")
    beta = 1.0 / F0
    bound = beta * (system.a / 2) * 2.0 ** (-l - k) * system.b**-k * Fk
    d = conditional_mass_direct(mu, state.z, direction(system, state.t), (wx, wy), params)
    return {
        "k": k,
        "l": l,
        "lower_bound": bound,
        "direct": d.value,
        "slack": d.variation,
        "holds": bool(d.value >= bound - d.variation),
        "F0": F0,
        "Fk": Fk,
    }


def _word_interval(word, rho):
    left, width = 0.0, 1.0
    for s in word:
        left += s * (1 - rho) * width
        width *= rho
    return left, width


def lemma17_check(mu, w1, w2, u1=(), u2=()):
    """``mu(g(B))`` and ``2^(-n1-n2) mu(B)`` for ``B = C_{a,u1} x C_{b,u2}``.

    ``g = (f_{a,w1}, f_{b,w2})`` so ``g(B) = C_{a,w1 u1} x C_{b,w2 u2}``. Both
    masses are measured geometrically as masses of boxes padded by half the
    gap between sibling cylinders, which isolates each cylinder exactly.
    """
    w1, w2, u1, u2 = map(tuple, (w1, w2, u1, u2))
    if len(w1) < 1 or len(w2) < 1:
        raise ValueError("need n1, n2 >= 1")

    def box(wx, wy):
        (xl, xw), (yl, yw) = _word_interval(wx, mu.a), _word_interval(wy, mu.b)
        # nearest foreign atoms sit at least a sibling gap away
        px, py = 0.5 * (1 - 2 * mu.a) * xw, 0.5 * (1 - 2 * mu.b) * yw
        return mu.box_mass(xl - px, xl + xw + px, yl - py, yl + yw + py)

    lhs = box(w1 + u1, w2 + u2)
    rhs = 2.0 ** (-len(w1) - len(w2)) * box(u1, u2)
    return lhs, rhs


# ---------------------------------------------------------------------------
# box dimension of slices


def _fit_slope(log_inv_scale, log_count, drop=2):
    x, y = np.asarray(log_inv_scale)[drop:], np.asarray(log_count)[drop:]
    if len(x) < 2:
        raise ValueError("need at least two depths after dropping the coarsest")
    return float(np.polyfit(x, y, 1)[0])


def box_counts(obj, x, V, depths):
    """Number of depth-``d`` pieces whose hull meets the slab around ``x + V``.

    The slab's half-width equals the hull radius at that depth. ``obj`` is
    an :class:`Ifs` (pieces are cylinders) or a :class:`ProductSystem`
    (pieces are rectangles ``a^d x b^j`` with ``j = round(d / alpha)``).

    Returns
    -------
    scales, counts : arrays
    """
    depths = list(depths)
    if isinstance(obj, Ifs):
        return _ifs_box_counts(obj, x, V, depths)
    if isinstance(obj, ProductSystem):
        return _product_box_counts(obj, x, V, depths)
    raise TypeError("expected an Ifs or a ProductSystem")


def _ifs_box_counts(ifs, x, V, depths):
    n = ifs.ambient_dim
    x = np.asarray(x, dtype=float).reshape(n)
    basis = V.basis_Vperp
    R, R0 = ifs.hull_radius, ifs.invariant_radius
    rmax = float(ifs.ratios.max())
    ratio = np.ones(1)
    rot = np.eye(n)[None]
    trans = np.zeros((1, n))
    counts, scales = [], []
    for d in range(max(depths) + 1):
        centers = np.einsum("kij,j->ki", rot, ifs.hull_center) * ratio[:, None] + trans
        dist = np.linalg.norm((centers - x) @ basis, axis=1)
        if d in depths:
            counts.append(int(np.count_nonzero(dist <= 2 * ratio * R)))
            scales.append(rmax**d)
        if d == max(depths):
            break
        # children of a pruned cylinder can never meet their own slab
        keep = dist <= ratio * (2 * rmax * R + R0)
        ratio, rot, trans = ratio[keep], rot[keep], trans[keep]
        if len(ratio) == 0:
            raise ValueError("slice misses the attractor")
        trans = np.concatenate([
            trans + ratio[:, None] * np.einsum("kij,j->ki", rot, a)
            for a in ifs.translations
        ])
        ratio = np.concatenate([ratio * r for r in ifs.ratios])
        rot = np.concatenate([rot @ h for h in ifs.rotations])
    if counts[0] == 0:
        raise ValueError("slice misses the attractor")
    return np.array(scales), np.array(counts)


def _product_box_counts(system, z, V, depths):
    a, b, alpha = system.a, system.b, system.alpha
    z = np.asarray(z, dtype=float).reshape(2)
    nrm = V.basis_Vperp[:, 0]
    x0 = np.zeros(1)
    y0 = np.zeros(1)
    jprev = 0
    counts, scales = [], []
    for d in range(max(depths) + 1):
        j = int(round(d / alpha))
        # refine y from depth jprev to j
        for _ in range(j - jprev):
            w = b ** (jprev)
            y0 = np.concatenate([y0, y0 + (1 - b) * w])
            x0 = np.concatenate([x0, x0])
            jprev += 1
        wx, wy = a**d, b**j
        rad = 0.5 * math.hypot(wx, wy)
        cx, cy = x0 + wx / 2, y0 + wy / 2
        dist = np.abs(nrm[0] * (cx - z[0]) + nrm[1] * (cy - z[1]))
        if d in depths:
            counts.append(int(np.count_nonzero(dist <= 2 * rad)))
            scales.append(wx)
        if d == max(depths):
            break
        keep = dist <= 3 * rad
        x0, y0 = x0[keep], y0[keep]
        if len(x0) == 0:
            raise ValueError("slice misses the product set")
        x0 = np.concatenate([x0, x0 + (1 - a) * wx])
        y0 = np.concatenate([y0, y0])
    return np.array(scales), np.array(counts)


def slice_box_dimension(obj, x, V, depth_range, return_counts=False):
    """Least-squares slope of ``log count`` against ``-log scale``.

    The two coarsest depths of ``depth_range`` are left out of the fit.
    """
    scales, counts = box_counts(obj, x, V, depth_range)
    if np.any(counts == 0):
        raise ValueError("empty slice at some depth")
    slope = _fit_slope(-np.log(scales), np.log(counts))
    return (slope, scales, counts) if return_counts else slope
