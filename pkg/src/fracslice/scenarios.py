"""Configured experiments, their run records and plot scripts.

A scenario is described by an INI file; every run writes the echoed
configuration, per-sample CSV rows and a summary CSV. Wall time goes to a
separate text file so that CSV output depends only on (config, seed,
version).
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from ._validation import rng_stream
from .dynamics import ProductSystem, SkewProduct, renormalize_direction
from .groups import sample_grassmann
from .ifs import IFSError, attractor_atoms, cantor_ifs, corner_ifs, read_ifs
from .measure import DensityParams, ProductCantorMeasure, frostman_check
from .slice import (
    Thresholds,
    classify,
    density_trace,
    lemma17_check,
    product_cylinder_lower_bound,
    slice_box_dimension,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "RunRecord",
    "load_config",
    "build_ifs_from_config",
    "run_scenario",
    "run_corollary2_scenario",
    "run_corollary5_scenario",
    "run_theorem6_scenario",
    "run_identity_scenario",
    "run_custom_scenario",
    "emit_plots",
]

KINDS = ("corollary2", "corollary5", "theorem6", "identity-suite", "custom")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _number(text):
    text = str(text).strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


@dataclass
class ScenarioConfig:
    """All knobs of a run, with defaults for the shipped scenarios."""

    kind: str = "theorem6"
    seed: int = 7
    out: str = "runs"
    samples: int = 100
    steps: int = 30
    # density ladder
    levels: int = 6
    guard: float = 10.0
    eps0: float | None = None
    # classification
    blowup_factor: float = 10.0
    trend_fraction: float = 1 / 3
    min_length: int = 30
    # self-similar family
    ifs_kind: str = "corners"
    ifs_dim: int = 3
    ifs_ratio: float = 0.45
    ifs_rotation_order: int = 4
    ifs_path: str = ""
    ifs_depth: int = 7
    codim: int = 1
    # product family
    a: float = 0.25
    b: float = 1 / 3
    tau: float = 1.0
    depth_x: int = 12
    depth_y: int = 12
    k_max: int = 4
    bound_samples: int = 200
    box_depths: tuple = (2, 20)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def density(self):
        return DensityParams(self.levels, self.guard, self.eps0)

    @property
    def thresholds(self):
        return Thresholds(self.blowup_factor, self.trend_fraction, self.min_length)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        checks = [
            (self.samples >= 1, "samples must be >= 1"),
            (self.steps >= 1, "steps must be >= 1"),
            (self.levels >= 4, "levels must be >= 4"),
            (self.guard > 0, "guard must be positive"),
            (self.eps0 is None or self.eps0 > 0, "eps0 must be positive"),
            (self.blowup_factor > 1, "blowup_factor must exceed 1"),
            (0 < self.trend_fraction < 1, "trend_fraction must lie in (0, 1)"),
            (self.min_length >= 3, "min_length must be >= 3"),
            (0 < self.a < self.b < 0.5, "need 0 < a < b < 1/2"),
            (self.tau > 0, "tau must be positive"),
            (1 <= self.depth_x <= 24 and 1 <= self.depth_y <= 24, "depths must lie in [1, 24]"),
            (0 < self.ifs_ratio < 1, "ifs ratio must lie in (0, 1)"),
            (self.ifs_rotation_order >= 1, "rotation_order must be >= 1"),
            (self.k_max >= 0, "k_max must be >= 0"),
            (self.box_depths[0] + 3 <= self.box_depths[1], "box depth range too short"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_ini(self):
        cfg = configparser.ConfigParser()
        cfg["scenario"] = {"kind": self.kind, "seed": str(self.seed), "out": self.out}
        cfg["sampling"] = {"samples": str(self.samples), "steps": str(self.steps),
                           "k_max": str(self.k_max), "bound_samples": str(self.bound_samples)}
        cfg["density"] = {"levels": str(self.levels), "guard": repr(self.guard),
                          "eps0": "" if self.eps0 is None else repr(self.eps0)}
        cfg["thresholds"] = {"blowup_factor": repr(self.blowup_factor),
                             "trend_fraction": repr(self.trend_fraction),
                             "min_length": str(self.min_length)}
        cfg["ifs"] = {"kind": self.ifs_kind, "dim": str(self.ifs_dim),
                      "ratio": repr(self.ifs_ratio),
                      "rotation_order": str(self.ifs_rotation_order),
                      "path": self.ifs_path, "depth": str(self.ifs_depth),
                      "codim": str(self.codim)}
        cfg["product"] = {"a": repr(self.a), "b": repr(self.b), "tau": repr(self.tau),
                          "depth_x": str(self.depth_x), "depth_y": str(self.depth_y),
                          "box_depth_min": str(self.box_depths[0]),
                          "box_depth_max": str(self.box_depths[1])}
        return cfg

    def write(self, path):
        with open(path, "w") as fh:
            self.to_ini().write(fh)


_SCHEMA = {
    ("scenario", "kind"): ("kind", str),
    ("scenario", "seed"): ("seed", int),
    ("scenario", "out"): ("out", str),
    ("sampling", "samples"): ("samples", int),
    ("sampling", "steps"): ("steps", int),
    ("sampling", "k_max"): ("k_max", int),
    ("sampling", "bound_samples"): ("bound_samples", int),
    ("density", "levels"): ("levels", int),
    ("density", "guard"): ("guard", _number),
    ("density", "eps0"): ("eps0", _number),
    ("thresholds", "blowup_factor"): ("blowup_factor", _number),
    ("thresholds", "trend_fraction"): ("trend_fraction", _number),
    ("thresholds", "min_length"): ("min_length", int),
    ("ifs", "kind"): ("ifs_kind", str),
    ("ifs", "dim"): ("ifs_dim", int),
    ("ifs", "ratio"): ("ifs_ratio", _number),
    ("ifs", "rotation_order"): ("ifs_rotation_order", int),
    ("ifs", "path"): ("ifs_path", str),
    ("ifs", "depth"): ("ifs_depth", int),
    ("ifs", "codim"): ("codim", int),
    ("product", "a"): ("a", _number),
    ("product", "b"): ("b", _number),
    ("product", "tau"): ("tau", _number),
    ("product", "depth_x"): ("depth_x", int),
    ("product", "depth_y"): ("depth_y", int),
}



def load_config(path=None, overrides=None):
    """Read an INI file into a :class:`ScenarioConfig`.

    Unknown keys are rejected. ``overrides`` (a dict of field values) is
    applied last, e.g. for ``--seed`` on the command line.
    """
    values = {}
    if path is not None:
        cfg = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cfg.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        box = [None, None]
        for section in cfg.sections():
            for key, raw in cfg[section].items():
                if section == "product" and key in ("box_depth_min", "box_depth_max"):
                    box[key.endswith("max")] = int(raw)
                    continue
                if (section, key) not in _SCHEMA:
                    raise ConfigError(f"unknown key [{section}] {key}")
                name, conv = _SCHEMA[(section, key)]
                if raw.strip() == "" and name in ("eps0", "ifs_path"):
                    values[name] = None if name == "eps0" else ""
                    continue
                try:
                    values[name] = conv(raw)
                except (ValueError, ConfigError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
        if any(v is not None for v in box):
            lo, hi = ScenarioConfig.box_depths
            values["box_depths"] = (box[0] if box[0] is not None else lo,
                                    box[1] if box[1] is not None else hi)
    values.update(overrides or {})
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_ifs_from_config(config):
    """The self-similar IFS described by the ``[ifs]`` section."""
    c = config
    try:
        if c.ifs_kind == "file":
            return read_ifs(c.ifs_path)
        if c.ifs_kind == "cantor":
            return cantor_ifs(c.ifs_ratio)
        if c.ifs_kind == "corners":
            n = c.ifs_dim
            rot = np.eye(n)
            if c.ifs_rotation_order > 1:
                if n < 2:
                    raise ConfigError("rotations need dim >= 2")
                ang = 2 * math.pi / c.ifs_rotation_order
                rot[:2, :2] = [[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]]
            return corner_ifs(n, c.ifs_ratio, rotations=[rot] * 2**n)
    except IFSError as exc:
        raise ConfigError(f"invalid IFS: {exc}") from None
    raise ConfigError(f"unknown ifs kind {c.ifs_kind!r}")


@dataclass
class RunRecord:
    """Echoed config, per-sample rows, summary and auxiliary tables."""

    config: ScenarioConfig
    rows: list
    summary: dict
    tables: dict = field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.config.write(os.path.join(out_dir, "config.ini"))
        _write_rows(os.path.join(out_dir, "samples.csv"), self.rows)
        summary = dict(self.summary)
        summary["version"] = self.version
        _write_rows(os.path.join(out_dir, "summary.csv"),
                    [{"key": k, "value": _fmt(v)} for k, v in summary.items()])
        for name, rows in self.tables.items():
            _write_rows(os.path.join(out_dir, f"{name}.csv"), rows)
        with open(os.path.join(out_dir, "run_info.txt"), "w") as fh:
            fh.write(f"version {self.version}\nwall_time_seconds {self.wall_time:.3f}\n")
        return out_dir


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    return str(v)


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        fields = list(rows[0].keys())
        out = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        out.writeheader()
        for r in rows:
            out.writerow({k: _fmt(r[k]) for k in fields})


def _label_fractions(labels):
    from .slice import LABELS

    n = len(labels)
    return {f"fraction_{lab}": sum(1 for x in labels if x == lab) / n for lab in LABELS}


def _self_similar_run(config, target, require_s=True):
    ifs = build_ifs_from_config(config)
    if require_s and config.codim != 1:
        raise ConfigError("the corollary scenarios use m = 1")
    if not 1 <= config.codim < ifs.ambient_dim:
        raise ConfigError("codim must lie in [1, ambient_dim)")
    if require_s and not ifs.sim_dim > 2:
        raise ConfigError(f"similarity dimension {ifs.sim_dim:.5g} must exceed 2")
    system = SkewProduct(ifs)
    if not system.H.is_finite:
        raise ConfigError("the rotation group must be finite")
    mu = attractor_atoms(ifs, config.ifs_depth)
    rng_x = rng_stream(config.seed, "sampling")
    rng_v = rng_stream(config.seed, "subspaces")
    rng_h = rng_stream(config.seed, "haar")
    n = ifs.ambient_dim
    addr_len = config.steps + int(math.ceil(math.log(1e-20) / math.log(ifs.ratios.max())))
    rows, traces = [], []
    for i in range(config.samples):
        address = ifs.sample_addresses(1, addr_len, rng_x)[0]
        idx = int(rng_h.integers(len(system.H)))
        start = system.state_from_address(address, system.H.elements[idx], idx)
        V = sample_grassmann(n, config.codim, rng_v)
        tr = density_trace(system, mu, start, V, config.steps, config.density)
        label, s = classify(tr, config.thresholds, return_summary=True)
        rows.append({"sample": i, "h_index": idx, "label": label, "median": s["median"],
                     "max": s["max"], "min": s["min"], "max_growing": s["max_growing"],
                     "min_falling": s["min_falling"], "failed_steps": len(tr.errors)})
        for k in range(len(tr)):
            traces.append({"sample": i, "k": k, "F_lower_hat": tr.F_lower[k],
                           "F_upper_hat": tr.F_upper[k]})
    labels = [r["label"] for r in rows]
    summary = {"scenario": config.kind, "seed": config.seed, "samples": config.samples,
               "sim_dim": ifs.sim_dim, "group_size": len(system.H),
               "separation": ifs.separation, "atoms": mu.n_atoms,
               "resolution": mu.resolution}
    summary.update(_label_fractions(labels))
    summary["expected_label"] = target
    summary["p_infinite_flag_fraction"] = float(np.mean([
        r["min_falling"] and r["min"] < r["median"] / config.blowup_factor for r in rows
    ]))
    return RunRecord(config, rows, summary, {"traces": traces})


def run_corollary2_scenario(config):
    """Density traces on the default cube family; expectation H-positive."""
    t0 = time.perf_counter()
    rec = _self_similar_run(config, "H-positive-evidence")
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_corollary5_scenario(config):
    """Same family; reports the fraction with P-infinite evidence."""
    t0 = time.perf_counter()
    rec = _self_similar_run(config, "P-infinite-evidence")
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_theorem6_scenario(config):
    """Product Cantor system: traces, renormalization, bound and lemma checks."""
    t_start = time.perf_counter()
    c = config
    system = ProductSystem(c.a, c.b, c.tau)
    if not system.d_a + system.d_b > 1:
        raise ConfigError("need d_a + d_b > 1")
    mu = ProductCantorMeasure(c.a, c.b, c.depth_x, c.depth_y)
    rng = rng_stream(c.seed, "sampling")
    rng_k = rng_stream(c.seed, "bound")
    rng_w = rng_stream(c.seed, "words")
    rng_f = rng_stream(c.seed, "frostman")
    rng_v = rng_stream(c.seed, "subspaces")
    addr_len = c.steps + 80
    rows, traces, boxdim = [], [], []
    for i in range(c.samples):
        st = system.sample_state(rng, addr_len)
        tr = density_trace(system, mu, st, None, c.steps, c.density)
        label, s = classify(tr, c.thresholds, return_summary=True)
        V = sample_grassmann(2, 1, rng_v)
        slope, scales, counts = slice_box_dimension(
            system, st.z, V, range(c.box_depths[0], c.box_depths[1] + 1), True)
        residual = max(renormalize_direction(system, st.t, k)[2] for k in range(41))
        rows.append({"sample": i, "x": st.x, "y": st.y, "t": st.t, "label": label,
                     "median": s["median"], "max": s["max"], "min": s["min"],
                     "max_growing": s["max_growing"], "box_dim": slope,
                     "max_residual": residual})
        for k in range(len(tr)):
            traces.append({"sample": i, "k": k, "F_lower_hat": tr.F_lower[k],
                           "F_upper_hat": tr.F_upper[k]})
        for sc, cnt in zip(scales, counts):
            boxdim.append({"sample": i, "log_inv_scale": -math.log(sc),
                           "log_count": math.log(cnt)})
    bounds = []
    for j in range(c.bound_samples):
        st = system.sample_state(rng, addr_len)
        k = int(rng_k.integers(0, c.k_max + 1))
        r = product_cylinder_lower_bound(system, mu, st, k, c.density)
        bounds.append({"sample": j, **r})
    l17 = []
    for j in range(50):
        n1, n2 = int(rng_w.integers(1, 4)), int(rng_w.integers(1, 4))
        m1, m2 = int(rng_w.integers(0, 5)), int(rng_w.integers(0, 5))
        w1, w2 = tuple(rng_w.integers(0, 2, n1)), tuple(rng_w.integers(0, 2, n2))
        u1, u2 = tuple(rng_w.integers(0, 2, m1)), tuple(rng_w.integers(0, 2, m2))
        lhs, rhs = lemma17_check(mu, w1, w2, u1, u2)
        l17.append({"pair": j, "lhs": lhs, "rhs": rhs, "abs_error": abs(lhs - rhs)})
    frost = frostman_check(mu, c.a, c.b, 8, 200, rng_f)
    labels = [r["label"] for r in rows]
    summary = {"scenario": c.kind, "seed": c.seed, "samples": c.samples,
               "alpha": system.alpha, "eta": system.eta}
    summary.update(_label_fractions(labels))
    summary["max_renormalization_residual"] = max(r["max_residual"] for r in rows)
    summary["bound_pass_rate"] = float(np.mean([b["holds"] for b in bounds]))
    summary["lemma17_max_error"] = max(x["abs_error"] for x in l17)
    summary["frostman_violations"] = frost["violations"]
    summary["frostman_max_ratio"] = frost["max_ratio"]
    summary["mean_box_dim"] = float(np.mean([r["box_dim"] for r in rows]))
    rec = RunRecord(c, rows, summary, {"traces": traces, "boxdim": boxdim,
                                       "bounds": bounds, "lemma17": l17})
    rec.wall_time = time.perf_counter() - t_start
    return rec


def run_custom_scenario(config):
    """Traces on the configured IFS with no expected label (no s > 2 check)."""
    t0 = time.perf_counter()
    rec = _self_similar_run(config, "none", require_s=False)
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_identity_scenario(config):
    """The exact-identity acceptance criteria (1-5 and 7) as a run record."""
    from .acceptance import run_criteria

    t0 = time.perf_counter()
    results = run_criteria(config.seed, None, only={1, 2, 3, 4, 5, 7})
    rows = [{"criterion": r.number, "name": r.name, "passed": r.passed,
             "detail": r.detail} for r in results]
    summary = {"scenario": config.kind, "seed": config.seed,
               "passed": sum(r.passed for r in results), "total": len(results)}
    rec = RunRecord(config, rows, summary)
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_scenario(config):
    runners = {"corollary2": run_corollary2_scenario,
               "corollary5": run_corollary5_scenario,
               "theorem6": run_theorem6_scenario,
               "identity-suite": run_identity_scenario,
               "custom": run_custom_scenario}
    if config.kind not in runners:
        raise ConfigError(f"scenario kind {config.kind!r} has no runner")
    return runners[config.kind](config)


# ---------------------------------------------------------------------------
# plots

_TRACE_GP = """set datafile separator ','
set key off
set logscale y
set xlabel 'k'
set ylabel 'F lower estimate'
set title 'F along orbits'
plot '{csv}' every ::1 using 2:3 with linespoints pt 7 ps 0.3
"""

_PROFILE_GP = """set datafile separator ','
set key off
set logscale xy
set xlabel 'eps'
set ylabel 'density ratio'
plot '{csv}' every ::1 using 1:2 with linespoints
"""

_BOX_GP = """set datafile separator ','
set key off
set xlabel '-log scale'
set ylabel 'log count'
f(x) = s * x + c
fit f(x) '{csv}' every ::1 using 2:3 via s, c
plot '{csv}' every ::1 using 2:3 with points pt 7 ps 0.4, f(x)
"""


def emit_plots(record_dir):
    """Write gnuplot scripts for the CSVs present in ``record_dir``.

    Returns the list of scripts written; raises ``FileNotFoundError`` if
    the directory holds none of the plottable CSVs.
    """
    jobs = [("traces.csv", "traces.gp", _TRACE_GP),
            ("profile.csv", "profile.gp", _PROFILE_GP),
            ("boxdim.csv", "boxdim.gp", _BOX_GP)]
    written = []
    for csv_name, gp_name, template in jobs:
        if os.path.exists(os.path.join(record_dir, csv_name)):
            path = os.path.join(record_dir, gp_name)
            with open(path, "w") as fh:
                fh.write(template.format(csv=csv_name))
            written.append(path)
    if not written:
        raise FileNotFoundError(f"no plottable CSV files in {record_dir}")
    return written
