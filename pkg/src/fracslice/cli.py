"""Command-line front end: ``fracslice <command> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 a criterion or check failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import __version__
from ._validation import rng_stream
from .dynamics import ProductSystem, SkewProduct, direction
from .groups import sample_grassmann
from .ifs import IFSError, attractor_atoms, write_ifs
from .measure import EstimationError, ProductCantorMeasure, write_atoms_csv
from .scenarios import (
    KINDS,
    ConfigError,
    _write_rows,
    build_ifs_from_config,
    emit_plots,
    load_config,
    run_scenario,
)
from .slice import (
    F_hat,
    classify,
    density_trace,
    product_cylinder_lower_bound,
    slice_box_dimension,
    slice_masses,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
_DUMP_DEPTH = 8
_BOX_BUDGET = 2e5


def _config(args, **extra):
    overrides = dict(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    return load_config(args.config, overrides)


def _use_product(args, config):
    if args.system is not None:
        return args.system == "product"
    return config.kind == "theorem6"


def _setup(args, config):
    """System, measure, a sampled start and subspace for the single-shot commands."""
    rng = rng_stream(config.seed, "sampling")
    if _use_product(args, config):
        system = ProductSystem(config.a, config.b, config.tau)
        mu = ProductCantorMeasure(config.a, config.b, config.depth_x, config.depth_y)
        state = system.sample_state(rng, config.steps + 80)
        return system, mu, state, None
    ifs = build_ifs_from_config(config)
    system = SkewProduct(ifs)
    mu = attractor_atoms(ifs, config.ifs_depth)
    length = config.steps + int(math.ceil(math.log(1e-20) / math.log(ifs.ratios.max())))
    state = system.sample_state(rng, length)
    V = sample_grassmann(ifs.ambient_dim, config.codim, rng_stream(config.seed, "subspaces"))
    return system, mu, state, V


def _out_dir(config, name):
    path = os.path.join(config.out, name)
    os.makedirs(path, exist_ok=True)
    return path


def cmd_ifs(args):
    config = _config(args)
    ifs = build_ifs_from_config(config)
    print(f"maps {ifs.n_maps}  ambient_dim {ifs.ambient_dim}")
    print(f"similarity_dim {ifs.sim_dim:.12g}")
    print(f"rotation_free {ifs.rotation_free}")
    print(f"separation {ifs.separation:.6g}")
    print(f"diameter {ifs.diameter:.6g}")
    if args.out is not None:
        path = os.path.join(_out_dir(config, "ifs"), "ifs.ini")
        write_ifs(ifs, path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_project(args):
    config = _config(args)
    system, mu, state, V = _setup(args, config)
    if V is None:
        # the full depth-12 product has 2**24 atoms; dump a coarser copy
        V = direction(system, state.t)
        mu = ProductCantorMeasure(config.a, config.b, min(config.depth_x, _DUMP_DEPTH),
                                  min(config.depth_y, _DUMP_DEPTH)).as_discrete()
    nu = mu.projected(V)
    path = os.path.join(_out_dir(config, "project"), "projected.csv")
    write_atoms_csv(nu, path)
    print(f"projected {nu.n_atoms} atoms onto a {V.codim}-dimensional complement -> {path}")
    return EXIT_OK


def cmd_density(args):
    config = _config(args)
    system, mu, state, V = _setup(args, config)
    prof = F_hat(system, mu, state, V, config.density)
    path = os.path.join(_out_dir(config, "density"), "profile.csv")
    prof.to_csv(path)
    print(f"theta_lower_hat {prof.theta_lower_hat:.6g}")
    print(f"theta_upper_hat {prof.theta_upper_hat:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_orbit(args):
    config = _config(args)
    system, mu, state, V = _setup(args, config)
    tr = density_trace(system, mu, state, V, config.steps, config.density)
    label = classify(tr, config.thresholds)
    path = os.path.join(_out_dir(config, "orbit"), "traces.csv")
    tr.to_csv(path)
    print(f"steps {config.steps}  failed {len(tr.errors)}  label {label}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_slice(args):
    config = _config(args)
    system, mu, state, V = _setup(args, config)
    out = _out_dir(config, "slice")
    product = isinstance(system, ProductSystem)
    if product:
        # cylinder masses next to their lower bounds
        rows = [product_cylinder_lower_bound(system, mu, state, k, config.density)
                for k in range(config.k_max + 1)]
        _write_rows(os.path.join(out, "slice.csv"), rows)
        slope, scales, counts = slice_box_dimension(
            system, state.z, direction(system, state.t),
            range(config.box_depths[0], config.box_depths[1] + 1), True)
    else:
        sm = slice_masses(system, mu, state, V, config.k_max, args.method, config.density)
        sm.to_csv(os.path.join(out, "slice.csv"))
        # keep the expected number of pieces meeting the slab near _BOX_BUDGET
        ifs = system.ifs
        growth = max(ifs.sim_dim - V.codim, 0.1) * -math.log(ifs.ratios.max())
        hi = min(config.box_depths[1], 12, int(math.log(_BOX_BUDGET) / growth))
        hi = max(hi, config.box_depths[0] + 3)
        slope, scales, counts = slice_box_dimension(
            system.ifs, state.x, V, range(config.box_depths[0], hi + 1), True)
    with open(os.path.join(out, "boxdim.csv"), "w") as fh:
        fh.write("depth,log_inv_scale,log_count\n")
        for d, (sc, c) in enumerate(zip(scales, counts), start=config.box_depths[0]):
            fh.write(f"{d},{-math.log(sc)!r},{math.log(max(c, 1))!r}\n")
    print(f"box dimension slope {slope:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_scenario(args):
    config = _config(args, kind=args.kind)
    record = run_scenario(config)
    path = record.write(os.path.join(config.out, config.kind))
    for key, value in record.summary.items():
        print(f"{key} {value}")
    print(f"wrote {path} ({record.wall_time:.1f}s)")
    return EXIT_OK


def cmd_plot(args):
    for path in emit_plots(args.record):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_selftest(args):
    from .acceptance import run_acceptance

    seed = 7 if args.seed is None else args.seed
    out = args.out if args.out is not None else "selftest"
    only = None if not args.only else set(args.only)
    results = run_acceptance(seed, out, only=only, determinism=not args.no_determinism)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario INI file")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    single = argparse.ArgumentParser(add_help=False)
    single.add_argument("--system", choices=("ifs", "product"),
                        help="default: product for theorem6 configs, else the IFS")

    parser = argparse.ArgumentParser(prog="fracslice", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ifs", parents=[common], help="build and validate the configured IFS")
    p.set_defaults(func=cmd_ifs)
    p = sub.add_parser("project", parents=[common, single], help="project atoms onto V-perp")
    p.set_defaults(func=cmd_project)
    p = sub.add_parser("density", parents=[common, single], help="density profile at a sampled point")
    p.set_defaults(func=cmd_density)
    p = sub.add_parser("orbit", parents=[common, single], help="F trace along a sampled orbit")
    p.set_defaults(func=cmd_orbit)
    p = sub.add_parser("slice", parents=[common, single], help="slice masses and box dimension")
    p.add_argument("--method", choices=("direct", "recursion"), default="direct")
    p.set_defaults(func=cmd_slice)
    p = sub.add_parser("scenario", parents=[common], help="run a configured scenario")
    p.add_argument("kind", choices=KINDS)
    p.set_defaults(func=cmd_scenario)
    p = sub.add_parser("plot", help="write gnuplot scripts for a run directory")
    p.add_argument("record", metavar="DIR")
    p.set_defaults(func=cmd_plot)
    p = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", type=int, nargs="+", metavar="K",
                   help="restrict to these criteria (1-10)")
    p.add_argument("--no-determinism", action="store_true",
                   help="skip the second run used by the determinism check")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IFSError) as exc:
        print(f"fracslice: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"fracslice: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as exc:
        print(f"fracslice: estimation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
