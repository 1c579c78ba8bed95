"""The acceptance suite: eleven numbered criteria with stated tolerances.

Every criterion writes its raw numbers to a CSV file; the determinism
criterion repeats the suite into a second directory and compares the CSV
bytes. Timings are printed but never written to CSV.
"""

from __future__ import annotations

import filecmp
import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import rng_stream
from .dynamics import (
    ProductSystem,
    SkewProduct,
    measure_preservation_check,
    renormalize_direction,
)
from .groups import close_group, convolution_identity_check, planar_rotation, sample_grassmann
from .ifs import attractor_atoms, corner_ifs, similarity_dimension
from .measure import DensityParams, ProductCantorMeasure, frostman_check
from .scenarios import _write_rows
from .slice import (
    EstimationError,
    classify,
    conditional_mass_direct,
    density_trace,
    lemma17_check,
    product_cylinder_lower_bound,
    recursion_masses,
    slice_box_dimension,
)
from .groups import coordinate_subspace

__all__ = ["CriterionResult", "CRITERIA", "run_acceptance", "format_table"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _csv(out_dir, name, rows):
    if out_dir is not None:
        _write_rows(os.path.join(out_dir, f"{name}.csv"), rows)


def _square(rotated=False):
    rot = [planar_rotation(math.pi / 2)] * 4 if rotated else None
    return corner_ifs(2, 1 / 3, rotations=rot)


# -- criteria ---------------------------------------------------------------

def c01_dimensions(seed, out_dir):
    s4 = similarity_dimension([0.25, 0.25])
    s3 = similarity_dimension([1 / 3, 1 / 3])
    e4, e3 = abs(s4 - 0.5), abs(s3 - math.log(2) / math.log(3))
    _csv(out_dir, "c01_dimensions", [
        {"ratios": "1/4,1/4", "s": s4, "error": e4},
        {"ratios": "1/3,1/3", "s": s3, "error": e3},
    ])
    ok = e4 <= 1e-12 and e3 <= 1e-12
    return ok, f"max error {max(e4, e3):.2e} (tol 1e-12)"


def _finite_groups():
    groups = []
    for n in range(1, 25):
        groups.append(("cyclic", n, [planar_rotation(2 * math.pi / n)]))
    refl = np.diag([1.0, -1.0])
    for n in range(1, 13):
        groups.append(("dihedral", 2 * n, [planar_rotation(2 * math.pi / n), refl]))
    rx = np.array([[1.0, 0, 0], [0, 0, -1], [0, 1, 0]])
    rz = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    groups.append(("cube", 24, [rx, rz]))
    return groups


def c02_convolution(seed, out_dir):
    rng = rng_stream(seed, "lemma7")
    groups = _finite_groups()
    closed = {}
    rows, worst, ok = [], 0.0, True
    for trial in range(50):
        name, size, gens = groups[int(rng.integers(len(groups)))]
        key = (name, size)
        if key not in closed:
            closed[key] = close_group(gens)
        Q = closed[key]
        k = len(Q)
        raw = rng.integers(0, 10, size=k)
        raw[int(rng.integers(k))] += 1
        eta = [Fraction(int(v), int(raw.sum())) for v in raw]
        E = [int(i) for i in np.flatnonzero(rng.random(k) < rng.random())]
        lhs, rhs = convolution_identity_check(Q, eta, E)
        err = abs(float(lhs - rhs))
        worst = max(worst, err)
        ok &= lhs == rhs or err <= 1e-12
        rows.append({"trial": trial, "group": name, "order": k, "subset_size": len(E),
                     "lhs": str(lhs), "rhs": str(rhs), "error": err})
    _csv(out_dir, "c02_convolution", rows)
    return ok, f"50 triples, max |lhs - rhs| = {worst:.2e} (tol 1e-12)"


def c03_lemma17(seed, out_dir):
    rng = rng_stream(seed, "lemma17")
    mu = ProductCantorMeasure(0.25, 1 / 3, 12, 12)
    rows, worst = [], 0.0
    for trial in range(50):
        n1, n2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        m1, m2 = int(rng.integers(0, 13 - n1)), int(rng.integers(0, 13 - n2))
        w1, w2 = tuple(rng.integers(0, 2, n1)), tuple(rng.integers(0, 2, n2))
        u1, u2 = tuple(rng.integers(0, 2, m1)), tuple(rng.integers(0, 2, m2))
        lhs, rhs = lemma17_check(mu, w1, w2, u1, u2)
        worst = max(worst, abs(lhs - rhs))
        rows.append({"trial": trial, "w1": _w(w1), "w2": _w(w2), "u1": _w(u1),
                     "u2": _w(u2), "lhs": lhs, "rhs": rhs})
    _csv(out_dir, "c03_lemma17", rows)
    return worst <= 1e-12, f"50 triples, max error {worst:.2e} (tol 1e-12)"


def _w(word):
    return "".join(str(int(s)) for s in word) or "-"


def c04_renormalization(seed, out_dir):
    rng = rng_stream(seed, "renormalization")
    systems = [ProductSystem(0.25, 1 / 3, tau) for tau in (1.0, 0.25, 4.0)]
    rows, worst = [], 0.0
    for trial in range(200):
        sys_ = systems[trial % 3]
        t0, k = float(rng.random()), int(rng.integers(0, 41))
        l, tk, res = renormalize_direction(sys_, t0, k)
        worst = max(worst, res)
        rows.append({"trial": trial, "tau": sys_.tau, "t0": t0, "k": k, "l": l,
                     "t_k": tk, "residual": res})
    _csv(out_dir, "c04_renormalization", rows)
    return worst < 1e-10, f"200 pairs, max residual {worst:.2e} rad (tol 1e-10)"


def c05_frostman(seed, out_dir):
    mu = ProductCantorMeasure(0.25, 1 / 3, 12, 12)
    rep = frostman_check(mu, 0.25, 1 / 3, 8, 200, rng_stream(seed, "frostman"))
    _csv(out_dir, "c05_frostman", [{k: v for k, v in rep.items()}])
    return rep["violations"] == 0, (
        f"{rep['violations']} violations in {rep['checked']} balls, "
        f"max mass/bound {rep['max_ratio']:.3f}"
    )


def lemma13_errors(depth, samples, seed, k_max=4, params=DensityParams()):
    """Relative errors recursion vs direct on the ratio-1/3 four-corner IFS."""
    ifs = _square()
    system = SkewProduct(ifs)
    mu = attractor_atoms(ifs, depth)
    rng = rng_stream(seed, "lemma13")
    rows = []
    for i in range(samples):
        state = system.sample_state(rng, 60)
        V = sample_grassmann(2, 1, rng)
        try:
            rec = recursion_masses(system, mu, state, V, k_max, params)
        except EstimationError:
            rec = None
        for k in range(1, k_max + 1):
            word = system.word(state, k)
            try:
                d = conditional_mass_direct(mu, state.x, V, word, params)
                r = rec[k].value if rec is not None else math.nan
                err = abs(r - d.value) / d.value if d.value > 0 else math.inf
            except EstimationError:
                d, r, err = None, math.nan, math.inf
            rows.append({"depth": depth, "sample": i, "k": k, "word": _w(word),
                         "recursion": r, "direct": d.value if d else math.nan,
                         "direct_variation": d.variation if d else math.nan,
                         "rel_error": err if math.isfinite(err) else math.inf})
        mu._proj_cache.clear()
    return rows


def c06_lemma13(seed, out_dir):
    rows9 = lemma13_errors(9, 100, seed)
    rows12 = lemma13_errors(12, 100, seed)
    _csv(out_dir, "c06_lemma13", rows9 + rows12)
    e9 = np.array([r["rel_error"] for r in rows9])
    e12 = np.array([r["rel_error"] for r in rows12])
    m9, m12 = float(np.median(e9)), float(np.median(e12))
    ok = m12 <= 0.25 and m9 <= 0.25 and m12 <= m9
    return ok, f"median rel. error depth 9 = {m9:.3f}, depth 12 = {m12:.3f} (tol 0.25, 12 <= 9)"


def c07_closed_form(seed, out_dir):
    rng = rng_stream(seed, "closed-form")
    skew = SkewProduct(_square(rotated=True))
    prod = ProductSystem(0.25, 1 / 3, 1.0)
    rows, worst = [], 0.0
    for i in range(100):
        st = skew.sample_state(rng, 80)
        orbit = skew.orbit(st, 30)
        for k in sorted({int(rng.integers(1, 30)), 30}):
            x, h, _ = skew.power_closed_form(st, k)
            ex = float(np.abs(x - orbit[k].x).max())
            eh = float(np.abs(h - orbit[k].h).max())
            worst = max(worst, ex, eh)
            rows.append({"system": "skew", "start": i, "k": k, "x_error": ex, "h_error": eh})
        ps = prod.sample_state(rng, 80)
        orbit = prod.orbit(ps, 30)
        for k in sorted({int(rng.integers(1, 30)), 30}):
            x, y, tk, l = prod.power_closed_form(ps, k)
            e = max(abs(x - orbit[k].x), abs(y - orbit[k].y), abs(tk - orbit[k].t))
            e = e if l == orbit[k].wraps else math.inf
            worst = max(worst, e)
            rows.append({"system": "product", "start": i, "k": k, "x_error": e, "h_error": 0.0})
    _csv(out_dir, "c07_closed_form", rows)
    return worst <= 1e-9, f"200 orbits, k <= 30, max deviation {worst:.2e} (tol 1e-9)"


def c08_invariance(seed, out_dir):
    rng = rng_stream(seed, "invariance")
    skew = SkewProduct(_square(rotated=True))
    prod = ProductSystem(0.25, 1 / 3, 1.0)
    r1 = measure_preservation_check(skew, 2, 1000, 1000, rng)
    r2 = measure_preservation_check(prod, 2, 1000, 1000, rng)
    rows = []
    for name, r in (("skew", r1), ("product", r2)):
        for cell, (f, e) in enumerate(zip(r["frequency"], r["expected"])):
            rows.append({"system": name, "cell": cell, "frequency": f, "expected": e})
    _csv(out_dir, "c08_invariance", rows)
    ok = r1["discrepancy"] < r1["bound"] and r2["discrepancy"] < r2["bound"]
    return ok, (f"discrepancy skew {r1['discrepancy']:.2e}, product {r2['discrepancy']:.2e}, "
                f"bound {r1['bound']:.2e}")


def c09_box_dimension(seed, out_dir):
    rng = rng_stream(seed, "box-dimension")
    prod = ProductSystem(0.25, 1 / 3, 1.0)
    rows, generic, axis = [], [], []
    for i in range(50):
        z = prod.sample_state(rng, 80).z
        V = sample_grassmann(2, 1, rng)
        s = slice_box_dimension(prod, z, V, range(2, 21))
        generic.append(s)
        rows.append({"slice": i, "kind": "generic", "x": z[0], "y": z[1],
                     "v0": V.basis_V[0, 0], "v1": V.basis_V[1, 0], "slope": s})
    vertical = coordinate_subspace(2, [1])
    for i in range(10):
        z = prod.sample_state(rng, 80).z
        s = slice_box_dimension(prod, z, vertical, range(2, 13))
        axis.append(s)
        rows.append({"slice": i, "kind": "axis", "x": z[0], "y": z[1],
                     "v0": 0.0, "v1": 1.0, "slope": s})
    _csv(out_dir, "c09_box_dimension", rows)
    g, a = float(np.mean(generic)), float(np.mean(axis))
    ok = abs(g - prod.eta) <= 0.05 and abs(a - prod.d_b) <= 0.05
    return ok, (f"generic mean slope {g:.4f} (target {prod.eta:.4f} +- 0.05), "
                f"axis {a:.4f} (target {prod.d_b:.4f} +- 0.05)")


def theorem6_evidence(seed, traces=100, steps=30, bounds=200, k_max=4):
    prod = ProductSystem(0.25, 1 / 3, 1.0)
    mu = ProductCantorMeasure(0.25, 1 / 3, 12, 12)
    params = DensityParams()
    rng = rng_stream(seed, "theorem6")
    trace_rows, bound_rows = [], []
    for i in range(traces):
        st = prod.sample_state(rng, steps + 80)
        tr = density_trace(prod, mu, st, None, steps, params)
        label, s = classify(tr, return_summary=True)
        trace_rows.append({"trace": i, "t0": st.t, "label": label, "median": s["median"],
                           "max": s["max"], "min": s["min"],
                           "max_growing": s["max_growing"], "min_falling": s["min_falling"]})
    rng_k = rng_stream(seed, "theorem6-k")
    for j in range(bounds):
        st = prod.sample_state(rng, k_max + 80)
        k = int(rng_k.integers(0, k_max + 1))
        r = product_cylinder_lower_bound(prod, mu, st, k, params)
        bound_rows.append({"sample": j, **r})
    return trace_rows, bound_rows


def c10_theorem6(seed, out_dir):
    trace_rows, bound_rows = theorem6_evidence(seed)
    _csv(out_dir, "c10_traces", trace_rows)
    _csv(out_dir, "c10_bounds", bound_rows)
    frac = float(np.mean([r["label"] == "H-zero-evidence" for r in trace_rows]))
    rate = float(np.mean([r["holds"] for r in bound_rows]))
    ok = frac >= 0.6 and rate >= 0.95
    return ok, (f"H-zero-evidence fraction {frac:.2f} (need >= 0.60), "
                f"lower-bound pass rate {rate:.3f} (need >= 0.95)")


CRITERIA = [
    (1, "Moran dimension identities", c01_dimensions),
    (2, "convolution identity on finite groups", c02_convolution),
    (3, "cylinder scaling on the product measure", c03_lemma17),
    (4, "direction renormalization", c04_renormalization),
    (5, "Frostman bound", c05_frostman),
    (6, "recursion vs direct slice masses", c06_lemma13),
    (7, "skew product closed form", c07_closed_form),
    (8, "measure preservation", c08_invariance),
    (9, "slice box dimension", c09_box_dimension),
    (10, "product system regime evidence", c10_theorem6),
]


def run_criteria(seed, out_dir, only=None, echo=None):
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    results = []
    for number, name, fn in CRITERIA:
        if only is not None and number not in only:
            continue
        t0 = time.perf_counter()
        ok, detail = fn(seed, out_dir)
        res = CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)
        results.append(res)
        if echo is not None:
            echo(res.line())
    if out_dir is not None:
        _write_rows(os.path.join(out_dir, "acceptance.csv"), [
            {"criterion": r.number, "name": r.name, "passed": r.passed, "detail": r.detail}
            for r in results
        ])
    return results


def compare_outputs(dir_a, dir_b):
    """Names of CSV files that differ (or exist on one side only)."""
    a = sorted(f for f in os.listdir(dir_a) if f.endswith(".csv"))
    b = sorted(f for f in os.listdir(dir_b) if f.endswith(".csv"))
    diff = sorted(set(a) ^ set(b))
    for f in sorted(set(a) & set(b)):
        if not filecmp.cmp(os.path.join(dir_a, f), os.path.join(dir_b, f), shallow=False):
            diff.append(f)
    return diff, len(a)


def run_acceptance(seed=7, out_dir="selftest", only=None, determinism=True, echo=print):
    """Run criteria 1-10 into ``out_dir/run1`` and, for criterion 11, again
    into ``out_dir/run2``, comparing every CSV byte for byte."""
    run1 = os.path.join(out_dir, "run1")
    results = run_criteria(seed, run1, only, echo)
    if determinism:
        t0 = time.perf_counter()
        run2 = os.path.join(out_dir, "run2")
        run_criteria(seed, run2, only, None)
        diff, n = compare_outputs(run1, run2)
        res = CriterionResult(
            11, "determinism", not diff and n > 0,
            f"{n} CSV files compared, {len(diff)} differ" + (f": {diff}" if diff else ""),
            time.perf_counter() - t0,
        )
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results


def format_table(results):
    return "\n".join(r.line() for r in results)
