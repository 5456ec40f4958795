"""``cyclab`` command line: one subcommand family per module, plus presets and config runs."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alpha import (
    GridSpec,
    approx_conjugate_on,
    check_complement_connected,
    empty_interior_ok,
    load_decomposition,
    save_decomposition,
    slit_decomposition,
)
from .cyclic import build_rho, cyclicity_test
from .errors import ConfigError, CyclabError
from .gauss import gaussian_sup_profile, load_grid, stirling_table
from .generators import GENERATORS, generate_measure
from .measure import (
    check_norm,
    function_to_json,
    load_function,
    load_measure,
    pushforward,
    reweight_measure,
    save_measure,
)
from .pipeline import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERDICT,
    PRESETS,
    ExperimentConfig,
    preset_config,
    run_pipeline,
    summary_json,
)
from .polyapprox import density_profile
from .rohlin import local_multiplicity, rohlin_decompose


def _degrees(text: str) -> list:
    """``"0:30"`` (inclusive range) or ``"1,2,4"``."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"bad degree list {text!r}") from exc


def _write_rows(path, header, rows):
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    finally:
        if path:
            out.close()


def _write_json(path, data):
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_mu(path):
    try:
        return load_measure(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load measure {path}: {exc}") from exc


def _load_fn(path, mu):
    try:
        return load_function(path, mu)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load function {path}: {exc}") from exc


# ---- measure --------------------------------------------------------------------


def cmd_measure_validate(args):
    mu = _load_mu(args.measure)
    print(f"atoms={len(mu)} total_mass={mu.total_mass!r} support_id={mu.support_id}")
    return EXIT_OK


def cmd_measure_pushforward(args):
    mu = _load_mu(args.measure)
    phi = _load_fn(args.fn, mu)
    save_measure(pushforward(mu, phi, args.tol), args.out)
    return EXIT_OK


def cmd_measure_reweight(args):
    mu = _load_mu(args.measure)
    h = _load_fn(args.fn, mu)
    save_measure(reweight_measure(mu, h, check_norm(args.p)), args.out)
    return EXIT_OK


def cmd_generate(args):
    params = {}
    for item in args.param or []:
        key, _, val = item.partition("=")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    save_measure(generate_measure(args.kind, params), args.out)
    return EXIT_OK


# ---- approximation ------------------------------------------------------------


def _builtin_target(mu, name):
    z = mu.points
    table = {
        "conj_z": np.conj(z),
        "abs_z2_exp": np.abs(z) ** 2 * np.exp(-np.abs(z)),
        "one": np.ones(len(mu), dtype=complex),
    }
    if name not in table:
        raise ConfigError(f"unknown target {name!r}; choose from {sorted(table)} or --target-fn")
    return table[name]


def cmd_approx(args):
    mu = _load_mu(args.measure)
    t = _load_fn(args.target_fn, mu) if args.target_fn else _builtin_target(mu, args.target)
    weight = _load_fn(args.weight_fn, mu) if args.weight_fn else None
    nodes = _load_fn(args.nodes_fn, mu) if args.nodes_fn else None
    degrees = _degrees(args.degrees) if args.degrees else list(range(args.degree_max + 1))
    prof = density_profile(t, mu, check_norm(args.p), degrees, weight, nodes=nodes)
    _write_rows(args.out, ("degree", "residual", "converged"),
                [(pt.degree, pt.residual, int(pt.converged)) for pt in prof])
    return EXIT_OK


# ---- gauss ----------------------------------------------------------------------


def cmd_gauss_bound(args):
    table = stirling_table(args.kmax)
    ok = all(r["empirical_sup"] <= r["bound"] + 1e-9 and r["bound"] <= r["cap"] + 1e-9
             for r in table)
    _write_rows(args.out, ("k", "empirical_sup", "argmax", "bound", "cap", "majorant_argmax"),
                [(r["k"], r["empirical_sup"], r["argmax"], r["bound"], r["cap"],
                  r["majorant_argmax"]) for r in table])
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_gauss_approx(args):
    try:
        grid = load_grid(args.grid)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load grid {args.grid}: {exc}") from exc
    degrees = _degrees(args.degrees) if args.degrees else list(range(args.degree_max + 1))
    fits = gaussian_sup_profile(grid, args.c, degrees, method=args.method)
    _write_rows(args.out, ("degree", "sup_error", "lower_bound", "outside_sup", "converged"),
                [(f.degree, f.sup_error, f.lower_bound, f.outside_sup, int(f.converged))
                 for f in fits])
    if args.tol is not None and min(f.sup_error for f in fits) >= args.tol:
        return EXIT_VERDICT
    return EXIT_OK


# ---- alpha / cyclic ----------------------------------------------------------


def _parse_grid(text, origin, mu):
    try:
        nx, ny, step = text.split(",")
        nx, ny, step = int(nx), int(ny), float(step)
    except ValueError as exc:
        raise ConfigError("--grid expects nx,ny,step") from exc
    if origin:
        ox, oy = (float(v) for v in origin.split(","))
        return GridSpec(complex(ox, oy), step, nx, ny)
    # centre the grid on the atoms' bounding box
    z = mu.points
    cx = (z.real.min() + z.real.max()) / 2
    cy = (z.imag.min() + z.imag.max()) / 2
    return GridSpec(complex(cx - nx * step / 2, cy - ny * step / 2), step, nx, ny)


def cmd_alpha_decompose(args):
    mu = _load_mu(args.measure)
    grid = _parse_grid(args.grid, args.origin, mu)
    dec = slit_decomposition(mu, grid, args.eps, args.levels)
    save_decomposition(dec, args.out)
    ok = all(check_complement_connected(dec, n) and empty_interior_ok(dec, n)
             for n in range(1, dec.n_levels + 1))
    for n, cov in enumerate(dec.coverage, start=1):
        print(f"level {n}: coverage={cov!r} pitch={dec.pitch[n - 1]!r}")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_cyclic_build_rho(args):
    mu = _load_mu(args.measure)
    dec = load_decomposition(args.decomp)
    fits = [approx_conjugate_on(dec, mu, n, args.degree_cap) for n in range(1, dec.n_levels + 1)]
    rho = build_rho(dec, [f.poly for f in fits], mu, [f.delta for f in fits])
    data = function_to_json(rho.values)
    data["level"] = rho.level.tolist()
    data["M"] = list(rho.M)
    data["conjugate_fits"] = [
        {"level": n, "degree": f.degree, "sup_err": f.sup_err, "target": f.target, "met": f.met}
        for n, f in enumerate(fits, start=1)
    ]
    _write_json(args.out, data)
    return EXIT_OK


def cmd_cyclic_test(args):
    mu = _load_mu(args.measure)
    h = _load_fn(args.weight_fn, mu) if args.weight_fn else np.ones(len(mu))
    degrees = _degrees(args.degrees) if args.degrees else None
    rep = cyclicity_test(mu, h, check_norm(args.p), degree_max=args.degree_max, tol=args.tol,
                         degrees=degrees, seed=args.seed)
    _write_rows(args.report, ("target", "degree", "residual", "relative"), rep.rows())
    print(f"cyclic={rep.cyclic} ({rep.reason})", file=sys.stderr)
    return EXIT_OK if rep.cyclic else EXIT_VERDICT


# ---- multiplicity ------------------------------------------------------------


def cmd_mult_analyze(args):
    mu = _load_mu(args.measure)
    phi = _load_fn(args.fn, mu)
    rep = local_multiplicity(mu, phi)
    layers = rohlin_decompose(mu, phi)
    _write_json(args.out, rep.to_json(layers))
    return EXIT_OK


# ---- presets / config ---------------------------------------------------------


def _finish_run(cfg):
    out = run_pipeline(cfg, progress=lambda s: print(f"stage {s}", file=sys.stderr))
    if not cfg.csv_path:
        sys.stdout.write(out.csv_text)
    if not cfg.json_path:
        sys.stderr.write(summary_json(out.summary))
    return out.exit_code


def cmd_preset(args):
    cfg = preset_config(args.name, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.csv_path = str(out_dir / f"{args.name}.csv")
    cfg.json_path = str(out_dir / f"{args.name}.json")
    return _finish_run(cfg)


def cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return _finish_run(cfg)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cyclab", description=__doc__)
    ap.add_argument("--version", action="version", version=f"cyclab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="inspect and transform measure files")
    msub = m.add_subparsers(dest="action", required=True)
    p = msub.add_parser("validate")
    p.add_argument("--measure", required=True)
    p.set_defaults(func=cmd_measure_validate)
    p = msub.add_parser("pushforward")
    p.add_argument("--measure", required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure_pushforward)
    p = msub.add_parser("reweight")
    p.add_argument("--measure", required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--p", default="2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure_reweight)

    p = sub.add_parser("generate", help="write a reference measure")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("approx", help="residual curve of a weighted polynomial fit")
    p.add_argument("--measure", required=True)
    p.add_argument("--target", default="conj_z", help="built-in target when --fn is absent")
    p.add_argument("--fn", "--target-fn", dest="target_fn", help="target function file")
    p.add_argument("--weight-fn")
    p.add_argument("--nodes-fn", help="approximate by polynomials in these values")
    p.add_argument("--norm", "--p", dest="p", default="2", help="exponent or 'sup'")
    p.add_argument("--degrees", help="e.g. 0:30 or 1,2,4")
    p.add_argument("--degree-max", type=int, default=30)
    p.add_argument("--report", "--out", dest="out")
    p.set_defaults(func=cmd_approx)

    g = sub.add_parser("gauss", help="Gaussian-weighted approximation")
    gsub = g.add_subparsers(dest="action", required=True)
    p = gsub.add_parser("bound")
    p.add_argument("--k", "--kmax", dest="kmax", type=int, default=60)
    p.add_argument("--report", "--out", dest="out")
    p.set_defaults(func=cmd_gauss_bound)
    p = gsub.add_parser("approx")
    p.add_argument("--target", "--grid", dest="grid", required=True, help="grid file")
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--degrees", help="e.g. 0:24 or 4,8,12")
    p.add_argument("--degree-max", type=int, default=24)
    p.add_argument("--method", choices=("lp", "lawson"), default="lp")
    p.add_argument("--tol", type=float, help="exit 2 unless some degree gets below this")
    p.add_argument("--report", "--out", dest="out")
    p.set_defaults(func=cmd_gauss_approx)

    a = sub.add_parser("alpha", help="slit decompositions")
    asub = a.add_subparsers(dest="action", required=True)
    p = asub.add_parser("decompose")
    p.add_argument("--measure", required=True)
    p.add_argument("--grid", required=True, help="nx,ny,step")
    p.add_argument("--origin", help="x,y of the lower-left corner (default: centred)")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_alpha_decompose)

    c = sub.add_parser("cyclic", help="cyclic weights and cyclicity tests")
    csub = c.add_subparsers(dest="action", required=True)
    p = csub.add_parser("build-rho")
    p.add_argument("--decomp", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--degree-cap", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cyclic_build_rho)
    p = csub.add_parser("test")
    p.add_argument("--measure", required=True)
    p.add_argument("--weight-fn")
    p.add_argument("--p", default="2")
    p.add_argument("--degree-max", type=int, default=30)
    p.add_argument("--degrees")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_cyclic_test)

    mu = sub.add_parser("mult", help="multiplicity analysis")
    musub = mu.add_subparsers(dest="action", required=True)
    p = musub.add_parser("analyze")
    p.add_argument("--measure", required=True)
    p.add_argument("--fn", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mult_analyze)

    p = sub.add_parser("preset", help="run a named experiment")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("run", help="run an experiment config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for failed verdicts here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CyclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
