"""Experiment configs, stage runners, presets and report writing.

A config names a measure generator, a list of stages and a seed.  Running it
streams tidy CSV rows ``stage,x,metric,value`` and writes a JSON summary that
embeds the resolved config.  Nothing time- or host-dependent is written, so a
rerun with the same config produces identical bytes.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .alpha import GridSpec, approx_conjugate_on, check_complement_connected, empty_interior_ok
from .alpha import slit_decomposition
from .cyclic import build_rho, cyclicity_test
from .errors import ConfigError
from .gauss import GaussGrid, gaussian_sup_profile, stirling_table
from .generators import generate_measure
from .measure import DiscreteMeasure, check_norm
from .polyapprox import density_profile
from .rohlin import (
    build_cyclic_set,
    generator_insufficiency_test,
    local_multiplicity,
    rohlin_decompose,
    verify_cyclic_set,
)

EXIT_OK = 0
EXIT_STAGE_ERROR = 1
EXIT_VERDICT = 2
EXIT_CONFIG = 3

CSV_HEADER = ("stage", "x", "metric", "value")


@dataclass
class ExperimentConfig:
    """Generator spec, ordered stages, seed and output paths."""

    name: str = "experiment"
    generator: Optional[dict] = None
    stages: list = field(default_factory=list)
    seed: int = 0
    csv_path: Optional[str] = None
    json_path: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"name", "generator", "stages", "seed", "outputs"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        gen = data.get("generator")
        if gen is not None and (not isinstance(gen, dict) or "kind" not in gen):
            raise ConfigError("generator must be an object with a 'kind'")
        stages = data.get("stages", [])
        if not isinstance(stages, list):
            raise ConfigError("stages must be a list")
        for st in stages:
            if not isinstance(st, dict) or st.get("op") not in STAGES:
                raise ConfigError(f"unknown stage {st!r}; ops are {sorted(STAGES)}")
        try:
            seed = int(data.get("seed", 0))
        except (TypeError, ValueError) as exc:
            raise ConfigError("seed must be an integer") from exc
        outs = data.get("outputs", {}) or {}
        return cls(str(data.get("name", "experiment")), gen, copy.deepcopy(stages), seed,
                   outs.get("csv"), outs.get("json"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(data)
        base = Path(path).parent
        if cfg.csv_path and not os.path.isabs(cfg.csv_path):
            cfg.csv_path = str(base / cfg.csv_path)
        if cfg.json_path and not os.path.isabs(cfg.json_path):
            cfg.json_path = str(base / cfg.json_path)
        return cfg

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": self.generator,
            "stages": self.stages,
            "seed": self.seed,
        }


@dataclass
class StageResult:
    rows: list
    metrics: dict
    checks: list = field(default_factory=list)


@dataclass
class Context:
    cfg: ExperimentConfig
    mu: Optional[DiscreteMeasure]
    cache: dict = field(default_factory=dict)

    def measure(self) -> DiscreteMeasure:
        if self.mu is None:
            raise ConfigError("this stage needs a generator")
        return self.mu


def _degrees(spec, default):
    if spec is None:
        return list(default)
    if isinstance(spec, str):
        lo, _, hi = spec.partition(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(d) for d in spec]


def _target(mu: DiscreteMeasure, name: str) -> np.ndarray:
    z = mu.points
    if name == "conj_z":
        return np.conj(z)
    if name == "abs_z2_exp":
        return np.abs(z) ** 2 * np.exp(-np.abs(z))
    if name == "one":
        return np.ones(len(mu), dtype=complex)
    if name.startswith("indicator:"):
        v = np.zeros(len(mu), dtype=complex)
        v[int(name.split(":", 1)[1])] = 1.0
        return v
    raise ConfigError(f"unknown target {name!r}")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, complex to [re, im], nan/inf to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else _fmt(x)
    return obj


def _check(name: str, value: float, lo=None, hi=None) -> dict:
    ok = (lo is None or value >= lo) and (hi is None or value <= hi)
    return {"check": name, "value": value, "min": lo, "max": hi, "ok": bool(ok)}


# ---- stages ---------------------------------------------------------------------


def stage_density(ctx: Context, params: dict) -> StageResult:
    """Residual curve of one target (L^p, optional weight)."""
    mu = ctx.measure()
    p = check_norm(params.get("p", 2))
    target = params.get("target", "conj_z")
    degrees = _degrees(params.get("degrees"), range(31))
    weight = None
    if params.get("weight", "one") == "rho":
        weight = ctx.cache.get("rho")
        if weight is None:
            raise ConfigError("weight 'rho' needs an earlier 'rho' stage")
    tv = _target(mu, target)
    prof = density_profile(tv, mu, p, degrees, weight=weight)
    norm = float(np.sqrt(np.sum(mu.weights * np.abs(tv) ** 2))) if p == 2 else None
    rows = [(pt.degree, "residual", pt.residual) for pt in prof]
    res = [pt.residual for pt in prof]
    metrics = {"target": target, "p": p if p != "sup" else "sup", "final_residual": res[-1],
               "min_residual": min(res), "max_residual": max(res)}
    if norm is not None:
        metrics["target_norm"] = norm
    checks = []
    exp = params.get("expect", {})
    if "equals" in exp:
        ref = float(exp["equals"])
        dev = max(abs(r - ref) for r in res)
        lim = float(exp.get("abs_tol", 0.0)) + float(exp.get("rel_tol", 0.0)) * abs(ref)
        checks.append(_check("max deviation from reference", dev, hi=lim))
    if "flat_rel" in exp:
        sub = [r for pt, r in zip(prof, res) if pt.degree >= int(exp.get("flat_from", 0))]
        spread = (max(sub) - min(sub)) / max(max(sub), 1e-300)
        checks.append(_check("relative spread", spread, hi=float(exp["flat_rel"])))
    if "decrease_rel" in exp:
        drop = 1 - res[-1] / max(res[0], 1e-300)
        checks.append(_check("relative decrease", drop, lo=float(exp["decrease_rel"])))
    return StageResult(rows, metrics, checks)


def stage_stirling(ctx: Context, params: dict) -> StageResult:
    kmax = int(params.get("kmax", 60))
    table = stirling_table(kmax, float(params.get("step", 0.01)))
    rows = []
    worst_gap = math.inf
    argmax_ok = True
    for r in table:
        for key in ("empirical_sup", "bound", "cap", "argmax", "majorant_argmax"):
            rows.append((r["k"], key, r[key]))
        worst_gap = min(worst_gap, r["bound"] - r["empirical_sup"], r["cap"] - r["bound"])
        argmax_ok &= abs(r["majorant_argmax"] - (r["k"] + 1)) <= 0.01 + 1e-9
    checks = [_check("min slack of sup <= bound <= cap", worst_gap, lo=-1e-9),
              _check("majorant argmax at k+1", float(argmax_ok), lo=1.0)]
    return StageResult(rows, {"kmax": kmax}, checks)


def _hat(X):
    return np.maximum(0.0, 1.0 - np.linalg.norm(X, axis=1))


def stage_gauss(ctx: Context, params: dict) -> StageResult:
    """Minimax fits ``p e^{-c|x|^2}`` to a sampled hat function."""
    lo, hi = float(params.get("lo", -3.0)), float(params.get("hi", 3.0))
    step = float(params.get("step", 0.1))
    dim = int(params.get("dim", 2))
    c = float(params.get("c", 2.0))
    grid = GaussGrid.sample(_hat, lo, hi, step, dim)
    fits = gaussian_sup_profile(grid, c, _degrees(params.get("degrees"), range(0, 25, 2)))
    rows = []
    for f in fits:
        rows += [(f.degree, "sup_error", f.sup_error), (f.degree, "lower_bound", f.lower_bound),
                 (f.degree, "outside_sup", f.outside_sup)]
    errs = [f.sup_error for f in fits]
    checks = []
    if "below" in params.get("expect", {}):
        checks.append(_check("best sup error", min(errs), hi=float(params["expect"]["below"])))
    mono = all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    checks.append(_check("nonincreasing", float(mono), lo=1.0))
    return StageResult(rows, {"best_sup_error": min(errs), "c": c}, checks)


def _grid_for(mu: DiscreteMeasure, params: dict) -> GridSpec:
    step = float(params.get("grid_step", 1 / 64))
    if "grid" in params:
        g = params["grid"]
        return GridSpec(complex(*g["origin"]), float(g["step"]), int(g["nx"]), int(g["ny"]))
    return GridSpec.covering(mu.points, step, pad=0)


def stage_alpha(ctx: Context, params: dict) -> StageResult:
    mu = ctx.measure()
    grid = _grid_for(mu, params)
    eps = float(params.get("eps", 0.05))
    levels = int(params.get("levels", 4))
    dec = slit_decomposition(mu, grid, eps, levels)
    ctx.cache["decomp"] = dec
    rows, conn_all, interior_all = [], True, True
    for n in range(1, levels + 1):
        conn = bool(check_complement_connected(dec, n))
        inter = empty_interior_ok(dec, n)
        conn_all &= conn
        interior_all &= inter
        rows += [(n, "coverage", dec.coverage[n - 1]), (n, "pitch_cells", dec.pitch[n - 1]),
                 (n, "connected", conn), (n, "empty_interior_proxy", inter),
                 (n, "cells", len(dec.levels[n - 1])),
                 (n, "level_budget_met", dec.budget_ok[n - 1])]
    nested = all(a <= b for a, b in zip(dec.levels, dec.levels[1:]))
    checks = [_check("complement connected at all levels", float(conn_all), lo=1.0),
              _check("levels nested", float(nested), lo=1.0),
              _check("empty-interior proxy", float(interior_all), lo=1.0),
              _check("coverage", min(dec.coverage), lo=1 - eps)]
    metrics = {"pitch_exponent": dec.pitch_exponent, "eps": eps, "levels": levels,
               "min_coverage": min(dec.coverage), "exempt_cells": len(dec.exempt)}
    return StageResult(rows, metrics, checks)


def stage_rho(ctx: Context, params: dict) -> StageResult:
    mu = ctx.measure()
    dec = ctx.cache.get("decomp")
    if dec is None:
        raise ConfigError("'rho' needs an earlier 'alpha' stage")
    cap = int(params.get("degree_cap", 30))
    fits = [approx_conjugate_on(dec, mu, n, cap) for n in range(1, dec.n_levels + 1)]
    rho = build_rho(dec, [f.poly for f in fits], mu, [f.delta for f in fits])
    ctx.cache["rho"] = rho.values
    rows = []
    for n, f in enumerate(fits, start=1):
        rows += [(n, "conj_sup_error", f.sup_err), (n, "conj_degree", f.degree),
                 (n, "target_exp_minus_delta", f.target), (n, "met", f.met),
                 (n, "M", rho.M[n - 1])]
    metrics = {"rho_min": float(rho.values.min()), "rho_max": float(rho.values.max()),
               "uncovered_atoms": int(np.sum(rho.level == 0))}
    return StageResult(rows, metrics, [])


def stage_cyclicity(ctx: Context, params: dict) -> StageResult:
    mu = ctx.measure()
    p = check_norm(params.get("p", 2))
    weight = params.get("weight", "one")
    if weight == "rho":
        if "rho" not in ctx.cache:
            raise ConfigError("weight 'rho' needs an earlier 'rho' stage")
        h = ctx.cache["rho"]
    elif weight == "one":
        h = np.ones(len(mu))
    else:
        raise ConfigError(f"unknown weight {weight!r}")
    rep = cyclicity_test(mu, h, p, degree_max=int(params.get("degree_max", 30)),
                         tol=float(params.get("tol", 1e-3)), seed=ctx.cfg.seed)
    rows = [(d, f"relative_residual[{name}]", rel) for name, d, _, rel in rep.rows()]
    return StageResult(rows, {"cyclic": rep.cyclic, "reason": rep.reason, "weight": weight}, [])


def _phi(mu: DiscreteMeasure, name: str) -> np.ndarray:
    z = mu.points
    if name == "z2":
        return z**2
    if name == "abs":
        return np.abs(z).astype(complex)
    if name == "z":
        return z.copy()
    if name == "re":
        return z.real.astype(complex)
    raise ConfigError(f"unknown function {name!r}")


def stage_multiplicity(ctx: Context, params: dict) -> StageResult:
    mu = ctx.measure()
    if params.get("symmetrize", False):
        mu = DiscreteMeasure.from_atoms(np.concatenate([mu.points, -mu.points]),
                                        np.concatenate([mu.weights, mu.weights]))
    phi = mu.function(_phi(mu, params.get("phi", "z2")))
    rep = local_multiplicity(mu, phi)
    layers = rohlin_decompose(mu, phi)
    fs = build_cyclic_set(mu, phi, layers)
    chk = verify_cyclic_set(mu, phi, fs, layers)
    rows = [(n, "layer_size", s) for n, s in enumerate(rep.layer_sizes, start=1)]
    rows.append((chk.degree, "cyclic_set_max_relative_residual", chk.max_relative_residual))
    for d in range(rep.mp):
        ins = generator_insufficiency_test(mu, phi, d, trials=int(params.get("trials", 10)),
                                           seed=ctx.cfg.seed)
        rows += [(d, "insufficiency_estimate", ins.estimate), (d, "insufficiency_bound", ins.bound)]
    checks = [_check("mp equals layer count", float(rep.mp == layers.count), lo=1.0),
              _check("cyclic set residual", chk.max_relative_residual, hi=1e-8)]
    return StageResult(rows, {"mp": rep.mp, "layers": layers.count, "atoms": len(mu)}, checks)


STAGES: dict = {
    "density": stage_density,
    "stirling": stage_stirling,
    "gauss": stage_gauss,
    "alpha": stage_alpha,
    "rho": stage_rho,
    "cyclicity": stage_cyclicity,
    "multiplicity": stage_multiplicity,
}


# ---- presets -------------------------------------------------------------------


PRESETS: dict = {
    "bergman": {
        "name": "bergman",
        "generator": {"kind": "disc", "params": {"step": 1 / 64, "normalized": True}},
        "stages": [{"op": "density", "target": "conj_z", "p": 2, "degrees": "0:30",
                    "expect": {"equals": math.sqrt(0.5), "rel_tol": 0.02,
                               "flat_rel": 0.01, "flat_from": 5}}],
    },
    "circle": {
        "name": "circle",
        "generator": {"kind": "circle", "params": {"n": 512}},
        "stages": [{"op": "density", "target": "conj_z", "p": 2, "degrees": "0:40",
                    "expect": {"equals": 1.0, "abs_tol": 1e-6}}],
    },
    "stirling": {
        "name": "stirling",
        "stages": [{"op": "stirling", "kmax": 60}],
    },
    "spiral": {
        "name": "spiral",
        "generator": {"kind": "spiral", "params": {"t0": -4.0, "t1": 1.0, "n": 400,
                                                   "normalized": True}},
        "stages": [{"op": "density", "target": "conj_z", "p": 2, "degrees": "0:30",
                    "expect": {"decrease_rel": 0.5}}],
    },
    "multiplicity-demo": {
        "name": "multiplicity-demo",
        "generator": {"kind": "random", "params": {"n": 60}},
        "stages": [{"op": "multiplicity", "phi": "z2", "symmetrize": True, "trials": 10}],
    },
}


def preset_config(name: str, seed: int = 0) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = copy.deepcopy(PRESETS[name])
    data["seed"] = seed
    gen = data.get("generator")
    if gen and gen["kind"] == "random":
        gen["params"]["seed"] = seed
    return ExperimentConfig.from_dict(data)


# ---- running ------------------------------------------------------------------


@dataclass
class RunOutcome:
    exit_code: int
    csv_text: str
    summary: dict


def run_pipeline(cfg: ExperimentConfig, write: bool = True,
                 progress: Optional[Callable[[str], None]] = None) -> RunOutcome:
    """Run the stages in order and produce the CSV text and JSON summary.

    A failing stage stops the run; the rows gathered so far are still
    written and the exit code is nonzero.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    summary = {
        "cyclab_version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "stages": [],
        "status": "ok",
    }
    code = EXIT_OK
    try:
        mu = None
        if cfg.generator is not None:
            mu = generate_measure(cfg.generator["kind"], cfg.generator.get("params", {}))
            summary["measure"] = {"atoms": len(mu), "total_mass": mu.total_mass}
        ctx = Context(cfg, mu)
        for i, st in enumerate(cfg.stages):
            op = st["op"]
            label = st.get("label", f"{i}:{op}")
            if progress:
                progress(label)
            params = {k: v for k, v in st.items() if k not in ("op", "label")}
            res = STAGES[op](ctx, params)
            for x, metric, value in res.rows:
                writer.writerow((label, _fmt(x), metric, _fmt(value)))
            summary["stages"].append({"stage": label, "op": op, "metrics": res.metrics,
                                      "checks": res.checks})
            if any(not c["ok"] for c in res.checks):
                code = EXIT_VERDICT
                summary["status"] = "verdict-failed"
    except ConfigError as exc:
        code = EXIT_CONFIG
        summary["status"] = "config-error"
        summary["error"] = str(exc)
    except Exception as exc:  # a stage crashed: keep the partial report
        code = EXIT_STAGE_ERROR
        summary["status"] = "stage-error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
    summary["exit_code"] = code
    summary = _clean(summary)
    csv_text = buf.getvalue()
    if write:
        if cfg.csv_path:
            Path(cfg.csv_path).parent.mkdir(parents=True, exist_ok=True)
            with open(cfg.csv_path, "w", newline="") as fh:
                fh.write(csv_text)
        if cfg.json_path:
            Path(cfg.json_path).parent.mkdir(parents=True, exist_ok=True)
            with open(cfg.json_path, "w") as fh:
                fh.write(summary_json(summary))
    return RunOutcome(code, csv_text, summary)


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"
