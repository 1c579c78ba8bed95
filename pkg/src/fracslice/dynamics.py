"""The skew product on ``K x H`` and the product Cantor system.

States carry a symbolic address: the coordinates of a point on the
attractor are ``phi_{address}(anchor)``, and one step of either system
drops a leading symbol. Evaluating addresses forward is numerically
stable, whereas applying inverse maps to floating point coordinates
amplifies rounding by ``1 / ratio`` per step.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .groups import Subspace, close_group, haar_sample_H, reorthonormalize
from .ifs import CodingError, code_of_point

logger = logging.getLogger(__name__)

__all__ = [
    "SkewState",
    "SkewProduct",
    "step_T",
    "ProductSystem",
    "ProductState",
    "step_T_product",
    "direction",
    "renormalize_direction",
    "measure_preservation_check",
    "birkhoff_average",
    "ergodicity_diagnostic",
    "OrbitTrace",
]

# symbols beyond this relative precision do not move a double
_COORD_EPS = 1e-20


def _coord_len(max_ratio):
    return int(math.ceil(math.log(_COORD_EPS) / math.log(max_ratio)))


def _frozen(a):
    a = np.asarray(a, dtype=np.int64)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# skew product on K x H


@dataclass(frozen=True, eq=False)
class SkewState:
    """A point ``(x, h)`` of ``K x H``.

    ``address[pos:]`` (when present) codes ``x``; an exhausted address
    stands for the infinite tail ``000...``, i.e. the anchor.
    """

    x: np.ndarray
    h: np.ndarray
    address: np.ndarray | None = None
    pos: int = 0
    h_index: int | None = None

    @property
    def tail(self):
        return None if self.address is None else self.address[self.pos:]


class SkewProduct:
    """``T(x, h) = (phi_{w_1(x)}^{-1} x, h_{w_1(x)}^{-1} h)`` on ``K x H``.

    Parameters
    ----------
    ifs : Ifs
    H : RotationGroup, optional
        Defaults to the closure of the IFS rotations.
    """

    def __init__(self, ifs, H=None):
        self.ifs = ifs
        self.H = H if H is not None else close_group(list(ifs.rotations))
        if self.H.is_finite:
            self.gen_index = np.array([self.H.index_of(r) for r in ifs.rotations])
            self.gen_inv_index = self.H.inverse[self.gen_index]
        else:
            self.gen_index = self.gen_inv_index = None
        self._coord_len = _coord_len(float(ifs.ratios.max()))

    def point(self, address, pos=0):
        tail = address[pos:pos + self._coord_len]
        if len(tail) == 0:
            return self.ifs.anchor.copy()
        return self.ifs.point_from_address(tail)

    def state_from_address(self, address, h=None, h_index=None):
        address = _frozen(address)
        if h is None:
            h = np.eye(self.ifs.ambient_dim) if h_index is None else self.H.elements[h_index]
        if h_index is None and self.H.is_finite:
            try:
                h_index = self.H.index_of(h)
            except KeyError:
                h_index = None
        return SkewState(self.point(address), np.asarray(h, float), address, 0, h_index)

    def sample_state(self, rng, length):
        """Draw ``(x, h)`` from ``mu x xi_H`` with an address of ``length`` symbols."""
        rng = np.random.default_rng(rng)
        address = self.ifs.sample_addresses(1, length, rng)[0]
        if self.H.is_finite:
            idx = int(rng.integers(len(self.H)))
            return self.state_from_address(address, self.H.elements[idx], idx)
        return self.state_from_address(address, haar_sample_H(self.H, rng))

    def first_symbol(self, state):
        if state.address is not None:
            return int(state.address[state.pos]) if state.pos < len(state.address) else 0
        return code_of_point(self.ifs, state.x, 1)[0]

    def word(self, state, k):
        """``w_k(x)``, from the address when available."""
        if state.address is not None:
            tail = state.address[state.pos:state.pos + k]
            return tuple(int(s) for s in tail) + (0,) * (k - len(tail))
        return code_of_point(self.ifs, state.x, k)

    def step(self, state):
        sym = self.first_symbol(state)
        h = reorthonormalize(self.ifs.rotations[sym].T @ state.h)
        h_index = state.h_index
        if h_index is not None:
            h_index = int(self.H.table[self.gen_inv_index[sym], h_index])
        if state.address is not None:
            pos = state.pos + 1
            return SkewState(self.point(state.address, pos), h, state.address, pos, h_index)
        x = self.ifs.maps[sym].inverse(state.x)
        return SkewState(x, h, None, 0, h_index)

    def orbit(self, state, n_steps):
        """``[state, T state, ..., T^n_steps state]``."""
        out = [state]
        for _ in range(n_steps):
            out.append(self.step(out[-1]))
        return out

    def power_closed_form(self, state, k, dps=60):
        """``T^k(x, h) = (phi_w^{-1} x, h_w^{-1} h)``, ``w = w_k(x)``.

        ``x`` is rebuilt from its address and ``phi_w^{-1}`` applied in
        ``dps``-digit arithmetic, so the comparison with stepped orbits is
        not limited by the growth of ``1 / r_w``.
        """
        w = self.word(state, k)
        ifs = self.ifs
        with mpmath.workdps(dps):
            if state.address is not None:
                x = _mp_address_point(ifs, state.address[state.pos:])
            else:
                x = mpmath.matrix([float(v) for v in state.x])
            for sym in w:
                rot = mpmath.matrix(ifs.rotations[sym].tolist())
                trans = mpmath.matrix(ifs.translations[sym].tolist())
                x = rot.T * (x - trans) / mpmath.mpf(float(ifs.ratios[sym]))
            x_out = np.array([float(v) for v in x])
        h = state.h
        hw = np.eye(ifs.ambient_dim)
        for sym in w:
            hw = hw @ ifs.rotations[sym]
        return x_out, hw.T @ h, w


def _mp_address_point(ifs, tail):
    y = mpmath.matrix([float(v) for v in ifs.anchor])
    for sym in reversed([int(s) for s in tail]):
        rot = mpmath.matrix(ifs.rotations[sym].tolist())
        trans = mpmath.matrix(ifs.translations[sym].tolist())
        y = mpmath.mpf(float(ifs.ratios[sym])) * (rot * y) + trans
    return y


def step_T(system, state):
    """One step of the skew product (``system`` is a :class:`SkewProduct`)."""
    return system.step(state)


# ---------------------------------------------------------------------------
# product Cantor system


class ProductSystem:
    """The system ``T(x, y, t)`` on ``C_a x C_b x [0, 1)``.

    ``y`` is always shifted one symbol, ``t`` rotates by
    ``alpha = log b / log a`` and ``x`` is shifted exactly when the rotation
    wraps around, so after ``k`` steps it has been shifted
    ``floor(t_0 + k alpha)`` times.
    """

    def __init__(self, a=0.25, b=1 / 3, tau=1.0):
        if not 0 < a < b < 0.5:
            raise ValueError("need 0 < a < b < 1/2")
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.a, self.b, self.tau = float(a), float(b), float(tau)
        self.d_a = math.log(2) / math.log(1 / a)
        self.d_b = math.log(2) / math.log(1 / b)
        self.alpha = math.log(b) / math.log(a)
        self.eta = self.d_a + self.d_b - 1.0
        frac = Fraction(self.alpha).limit_denominator(50)
        if abs(self.alpha - float(frac)) < 1e-6:
            logger.warning("alpha = %.12g is close to the rational %s", self.alpha, frac)
        n = max(_coord_len(self.a), _coord_len(self.b))
        self._coord_len = n
        self._pow_a = (1 - self.a) * self.a ** np.arange(n)
        self._pow_b = (1 - self.b) * self.b ** np.arange(n)

    def cantor_point(self, bits, rho):
        pw = self._pow_a if rho == self.a else self._pow_b
        bits = np.asarray(bits)[..., : self._coord_len]
        return bits @ pw[: bits.shape[-1]]

    def state_from_addresses(self, x_address, y_address, t):
        xa, ya = _frozen(x_address), _frozen(y_address)
        return ProductState(
            float(self.cantor_point(xa, self.a)),
            float(self.cantor_point(ya, self.b)),
            float(t), xa, ya,
        )

    def sample_state(self, rng, length):
        """Draw ``(x, y, t)`` from ``mu_a x mu_b x Lebesgue``."""
        rng = np.random.default_rng(rng)
        bits = rng.integers(0, 2, size=(2, length))
        return self.state_from_addresses(bits[0], bits[1], rng.random())

    def step(self, state):
        t = state.t + self.alpha
        wrap = t >= 1.0
        if wrap:
            t -= 1.0
        if state.y_address is not None:
            py = state.py + 1
            y = float(self.cantor_point(state.y_address[py:], self.b))
        else:
            y, py = _cantor_shift(state.y, self.b), 0
        px, x = state.px, state.x
        if wrap:
            if state.x_address is not None:
                px += 1
                x = float(self.cantor_point(state.x_address[px:], self.a))
            else:
                x = _cantor_shift(state.x, self.a)
        return ProductState(x, y, t, state.x_address, state.y_address, px, py,
                            state.wraps + int(wrap), state.steps + 1)

    def orbit(self, state, n_steps):
        out = [state]
        for _ in range(n_steps):
            out.append(self.step(out[-1]))
        return out

    def words(self, state, k):
        """``(w_l(x), w_k(y))`` with ``l = floor(t + k alpha)`` of the next k steps."""
        l = 0
        t = state.t
        for _ in range(k):
            t += self.alpha
            if t >= 1.0:
                t -= 1.0
                l += 1
        return _prefix(state.x_address, state.px, l), _prefix(state.y_address, state.py, k)

    def power_closed_form(self, state, k, dps=60):
        """``(f_{a,w_l(x)}^{-1} x, f_{b,w_k(y)}^{-1} y, R^k t)`` in extended precision."""
        wx, wy = self.words(state, k)
        l, tk = renormalize_direction(self, state.t, k)[:2]
        with mpmath.workdps(dps):
            x = _mp_cantor(state.x_address[state.px:], self.a)
            y = _mp_cantor(state.y_address[state.py:], self.b)
            for s in wx:
                x = (x - s * (1 - mpmath.mpf(self.a))) / mpmath.mpf(self.a)
            for s in wy:
                y = (y - s * (1 - mpmath.mpf(self.b))) / mpmath.mpf(self.b)
            return float(x), float(y), tk, l


def _prefix(address, pos, k):
    tail = address[pos:pos + k]
    return tuple(int(s) for s in tail) + (0,) * (k - len(tail))


def _mp_cantor(bits, rho):
    rho = mpmath.mpf(rho)
    acc = mpmath.mpf(0)
    for s in reversed([int(b) for b in bits]):
        acc = rho * acc + s * (1 - rho)
    return acc


def _cantor_shift(x, rho, tol=1e-9):
    if x <= rho + tol:
        return x / rho
    if x >= 1 - rho - tol:
        return (x - 1 + rho) / rho
    raise CodingError(f"{x} lies in the gap of C_{rho}")


@dataclass(frozen=True, eq=False)
class ProductState:
    x: float
    y: float
    t: float
    x_address: np.ndarray | None = field(default=None, repr=False)
    y_address: np.ndarray | None = field(default=None, repr=False)
    px: int = 0
    py: int = 0
    wraps: int = 0
    steps: int = 0

    @property
    def z(self):
        return np.array([self.x, self.y])


def step_T_product(system, state):
    """One step of the product Cantor system."""
    return system.step(state)


def direction(system, t):
    """``V^t``: the line orthogonal to ``W^t = R (1, tau a^t)``."""
    if not 0 <= t < 1:
        raise ValueError("t must lie in [0, 1)")
    c = system.tau * system.a**t
    v = np.array([c, -1.0]) / math.hypot(c, 1.0)
    w = np.array([1.0, c]) / math.hypot(c, 1.0)
    return Subspace(v.reshape(2, 1), w.reshape(2, 1))


def _line_angle(u, v):
    cross = abs(u[0] * v[1] - u[1] * v[0])
    dot = abs(u[0] * v[0] + u[1] * v[1])
    return math.atan2(cross, dot)


def renormalize_direction(system, t0, k):
    """Check that ``L^{-1} V^{t0} = V^{R^k t0}`` with ``L = diag(a^l, b^k)``.

    Returns
    -------
    l : int
        ``floor(t0 + k alpha)``, counted from the stepwise rotation.
    t_k : float
        ``R^k(t0)`` stepped one rotation at a time.
    residual : float
        Angle between the two lines. ``L`` is applied as an explicit
        matrix for ``k <= 30`` and through logarithms beyond.
    """
    if not 0 <= t0 < 1:
        raise ValueError("t0 must lie in [0, 1)")
    t, l = t0, 0
    for _ in range(k):
        t += system.alpha
        if t >= 1.0:
            t -= 1.0
            l += 1
    target = np.array([system.tau * system.a**t, -1.0])
    v0 = np.array([system.tau * system.a**t0, -1.0])
    if k <= 30:
        L = np.diag([system.a**l, system.b**k])
        v = np.linalg.solve(L, v0)
    else:
        # first coordinate over second, times -1: tau a^t0 b^k / a^l
        log_c = (math.log(system.tau) + t0 * math.log(system.a)
                 + k * math.log(system.b) - l * math.log(system.a))
        v = np.array([math.exp(log_c), -1.0])
    return l, t, _line_angle(v, target)


# ---------------------------------------------------------------------------
# invariance and ergodicity diagnostics


def measure_preservation_check(system, depth=2, n_orbits=1000, horizon=1000,
                               rng=None, t_bins=4):
    """Occupation frequencies of cylinder cells along sampled orbits.

    For a :class:`SkewProduct` the cells are (depth-``depth`` word, group
    element) with expected frequency ``p_w / |H|``; for a
    :class:`ProductSystem` they are (x word, y word, t bin) with expected
    frequency ``4**-depth / t_bins``. Starts are drawn from the invariant
    measure and orbits are advanced symbolically.

    Returns
    -------
    dict
        ``discrepancy`` (max absolute deviation), ``bound``
        (``4 / sqrt(n_orbits * horizon)``) and per-cell arrays.
    """
    rng = np.random.default_rng(rng)
    total = n_orbits * horizon
    if isinstance(system, SkewProduct):
        out = _skew_occupation(system, depth, n_orbits, horizon, rng)
    elif isinstance(system, ProductSystem):
        out = _product_occupation(system, depth, n_orbits, horizon, rng, t_bins)
    else:
        raise TypeError("unknown system")
    freq = out["counts"] / total
    out["frequency"] = freq
    out["discrepancy"] = float(np.max(np.abs(freq - out["expected"])))
    out["bound"] = 4.0 / math.sqrt(total)
    out["samples"] = total
    out["ok"] = out["discrepancy"] < out["bound"]
    return out


def _window_rank(symbols, j, depth, base):
    idx = np.zeros(symbols.shape[0], dtype=np.int64)
    for c in range(depth):
        idx = idx * base + symbols[:, j + c]
    return idx


def _skew_occupation(system, depth, n_orbits, horizon, rng):
    H = system.H
    if not H.is_finite:
        raise ValueError("occupation check needs a finite rotation group")
    ifs = system.ifs
    n_sym, k = ifs.n_maps, len(H)
    addr = ifs.sample_addresses(n_orbits, horizon + depth, rng)
    g = rng.integers(k, size=n_orbits)
    table, step_inv = H.table, system.gen_inv_index
    counts = np.zeros(n_sym**depth * k)
    for j in range(horizon):
        w = _window_rank(addr, j, depth, n_sym)
        counts += np.bincount(w * k + g, minlength=counts.size)
        g = table[step_inv[addr[:, j]], g]
    expected = np.repeat(ifs.level_weights(depth), k) / k
    return {"counts": counts, "expected": expected, "group_size": k}


def _product_occupation(system, depth, n_orbits, horizon, rng, t_bins):
    n_x = int(math.ceil(horizon * system.alpha)) + 2
    xa = rng.integers(0, 2, size=(n_orbits, n_x + depth))
    ya = rng.integers(0, 2, size=(n_orbits, horizon + depth))
    t = rng.random(n_orbits)
    px = np.zeros(n_orbits, dtype=np.int64)
    cells = 4**depth * t_bins
    counts = np.zeros(cells)
    rows = np.arange(n_orbits)
    for j in range(horizon):
        wx = np.zeros(n_orbits, dtype=np.int64)
        for c in range(depth):
            wx = 2 * wx + xa[rows, px + c]
        wy = _window_rank(ya, j, depth, 2)
        tb = np.minimum((t * t_bins).astype(np.int64), t_bins - 1)
        counts += np.bincount((wx * 2**depth + wy) * t_bins + tb, minlength=cells)
        t = t + system.alpha
        wrap = t >= 1.0
        t[wrap] -= 1.0
        px += wrap
    expected = np.full(cells, 1.0 / cells)
    return {"counts": counts, "expected": expected, "t_bins": t_bins}


def birkhoff_average(system, f, start, N):
    """``(1/N) sum_{k<N} f(T^k start)``."""
    acc = 0.0
    state = start
    for _ in range(N):
        acc += float(f(state))
        state = system.step(state)
    return acc / N


def ergodicity_diagnostic(system, f, starts, N, batches=10):
    """Consistency of Birkhoff averages from independent starts.

    Each orbit is cut into ``batches`` blocks; the standard error of its
    average is estimated from the block means. The diagnostic passes when
    every average lies within three standard errors of the pooled mean.
    It is a consistency check, not a proof of ergodicity.
    """
    means, ses = [], []
    block = N // batches
    for s in starts:
        vals = np.empty(block * batches)
        state = s
        for i in range(len(vals)):
            vals[i] = f(state)
            state = system.step(state)
        bm = vals.reshape(batches, block).mean(axis=1)
        means.append(bm.mean())
        ses.append(bm.std(ddof=1) / math.sqrt(batches))
    means, ses = np.array(means), np.array(ses)
    pooled = float(means.mean())
    spread = np.abs(means - pooled)
    return {
        "averages": means,
        "pooled": pooled,
        "std_err": ses,
        "consistent": bool(np.all(spread <= 3 * np.maximum(ses, 1e-12))),
    }


# ---------------------------------------------------------------------------
# traces


@dataclass
class OrbitTrace:
    """An orbit with per-step words, ratios and F estimates."""

    states: list
    cylinder_words: list
    ratios: np.ndarray
    F_lower: np.ndarray
    F_upper: np.ndarray
    errors: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            first = self.states[0]
            if isinstance(first, ProductState):
                coords = ["x", "y", "t"]
            else:
                coords = [f"x{i}" for i in range(len(first.x))]
            out.writerow(["k", *coords, "word", "r_w", "F_lower_hat", "F_upper_hat"])
            for k, st in enumerate(self.states):
                if isinstance(st, ProductState):
                    vals = [st.x, st.y, st.t]
                else:
                    vals = list(st.x)
                word = self.cylinder_words[k]
                out.writerow([
                    k, *(repr(float(v)) for v in vals), _word_str(word),
                    repr(float(self.ratios[k])), repr(float(self.F_lower[k])),
                    repr(float(self.F_upper[k])),
                ])


def _word_str(word):
    if word and isinstance(word[0], tuple):
        return "|".join("".join(str(s) for s in part) for part in word)
    return "".join(str(s) for s in word)
