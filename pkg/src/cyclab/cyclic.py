"""Cyclic weights and density diagnostics for multiplication operators.

``build_rho`` turns an alpha decomposition and uniform approximants of
``conj(z)`` on its levels into a positive weight ``rho``.  Functions bounded
by a multiple of ``rho`` are cyclic for multiplication by z in the continuum
limit.  At desk scale cyclicity is measured as residual curves: how well
``poly * h`` approximates a few test functions as the degree grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .alpha import AlphaDecomposition, GridSpec, approx_conjugate_on, slit_decomposition
from .errors import BoundViolation
from .measure import (
    SUP,
    DiscreteMeasure,
    SampledFunction,
    _lp_of_abs,
    check_norm,
    values_on,
)
from .polyapprox import Polynomial, density_profile, generated_fit

#: factors larger than this on the atoms are flagged as (numerically) unbounded
UNBOUNDED = 1e12


@dataclass
class RhoWeight:
    """Per-atom weight ``rho`` with its provenance.

    ``level[i]`` is the first level covering atom i (0 for never covered, where
    ``rho = 1``); ``M[n-1]`` is the normalizer used on level n.
    """

    values: np.ndarray
    level: np.ndarray
    M: list
    deltas: list = field(default_factory=list)

    def function(self, mu: DiscreteMeasure) -> SampledFunction:
        return mu.function(self.values)


def level_normalizers(mu: DiscreteMeasure, qs: Sequence) -> list:
    """``M_n = max(1, sup |q_1| e^{-|z|}, ..., sup |q_n| e^{-|z|})`` over all atoms."""
    z = mu.points
    damp = np.exp(-np.abs(z))
    M, running = [], 1.0
    for q in qs:
        running = max(running, float(np.max(np.abs(q(z)) * damp)))
        M.append(running)
    return M


def rho_from_levels(mu: DiscreteMeasure, first_level, M: Sequence[float]) -> np.ndarray:
    """``e^{-2|z|} / M_n`` on atoms first covered at level n, and 1 elsewhere."""
    lev = np.asarray(first_level, dtype=int)
    out = np.ones(len(mu))
    covered = lev > 0
    Marr = np.asarray(M, dtype=float)
    out[covered] = np.exp(-2 * np.abs(mu.points[covered])) / Marr[lev[covered] - 1]
    return out


def build_rho(decomp: AlphaDecomposition, qs: Sequence, mu: DiscreteMeasure,
              deltas: Sequence[float] = ()) -> RhoWeight:
    """Weight ``rho`` from a decomposition and one conjugate approximant per level."""
    if len(qs) != decomp.n_levels:
        raise ValueError(f"need {decomp.n_levels} approximants, got {len(qs)}")
    M = level_normalizers(mu, qs)
    lev = decomp.first_level(mu)
    return RhoWeight(rho_from_levels(mu, lev, M), lev, M, list(deltas))


def rho_for_measure(mu: DiscreteMeasure, grid: GridSpec, eps: float = 0.05,
                    n_levels: int = 4, degree_cap: int = 30):
    """Decompose, approximate ``conj(z)`` on each level and build ``rho``.

    Returns ``(rho, decomposition, conjugate_fits)``.
    """
    decomp = slit_decomposition(mu, grid, eps, n_levels)
    fits = [approx_conjugate_on(decomp, mu, n, degree_cap) for n in range(1, n_levels + 1)]
    rho = build_rho(decomp, [f.poly for f in fits], mu, [f.delta for f in fits])
    return rho, decomp, fits


# ---- cyclicity -------------------------------------------------------------------


def default_targets(mu: DiscreteMeasure, n_indicators: int = 8, seed: int = 0) -> dict:
    """Indicators of a few random atoms, ``conj(z)`` and ``|z|^2 e^{-|z|}``."""
    rng = np.random.default_rng(seed)
    k = min(n_indicators, len(mu))
    idx = np.sort(rng.choice(len(mu), size=k, replace=False))
    out = {f"indicator[{i}]": mu.indicator(int(i)) for i in idx}
    z = mu.points
    out["conj_z"] = mu.function(np.conj(z))
    out["abs_z2_exp"] = mu.function(np.abs(z) ** 2 * np.exp(-np.abs(z)))
    return out


def default_degrees(degree_max: int, p) -> list:
    """All degrees for L^2 (one shared basis); a doubling schedule otherwise."""
    if check_norm(p) == 2:
        return list(range(degree_max + 1))
    out, d = [0], 1
    while d < degree_max:
        out.append(d)
        d *= 2
    out.append(degree_max)
    return sorted(set(out))


@dataclass
class CyclicityReport:
    """Residual curves of ``target - poly * h`` per target.

    ``relative`` curves divide by the target norm.  The verdict is
    "cyclic at (degree_max, tol)" iff every final relative residual is < tol.
    """

    curves: dict
    norms: dict
    degrees: list
    tol: float
    cyclic: bool
    reason: str
    zero_atoms: list = field(default_factory=list)
    bound_ok: Optional[bool] = None

    def relative(self, name) -> list:
        n = self.norms[name] or 1.0
        return [pt.residual / n for pt in self.curves[name]]

    def final(self, name) -> float:
        return self.curves[name][-1].residual

    def rows(self):
        """Tidy ``(target, degree, residual, relative)`` rows."""
        for name, curve in self.curves.items():
            n = self.norms[name] or 1.0
            for pt in curve:
                yield name, pt.degree, pt.residual, pt.residual / n


def cyclicity_test(
    mu: DiscreteMeasure,
    h,
    p=2.0,
    targets: Optional[dict] = None,
    degree_max: int = 30,
    tol: float = 1e-3,
    *,
    degrees: Optional[Sequence[int]] = None,
    rho=None,
    C: float = 1.0,
    seed: int = 0,
) -> CyclicityReport:
    """Density profiles of ``poly * h`` against a set of targets.

    A weight vanishing at some atom can never be cyclic: that atom's
    indicator stays at full distance, so the verdict is negative at once
    (the curves are still computed).  When ``rho`` is given the condition
    ``|h| <= C rho`` is checked and reported in ``bound_ok``.
    """
    p = check_norm(p)
    hv = values_on(h, mu)
    if targets is None:
        targets = default_targets(mu, seed=seed)
    elif not isinstance(targets, dict):
        targets = {f"target[{i}]": t for i, t in enumerate(targets)}
    if degrees is None:
        degrees = default_degrees(degree_max, p)
    degrees = sorted(int(d) for d in degrees)

    zero = np.flatnonzero(hv == 0).tolist()
    bound_ok = None
    if rho is not None:
        rv = np.abs(values_on(rho, mu))
        bound_ok = bool(np.all(np.abs(hv) <= C * rv * (1 + 1e-12)))

    curves, norms = {}, {}
    for name, t in targets.items():
        tv = values_on(t, mu)
        norms[name] = _lp_of_abs(np.abs(tv), mu.weights, p)
        curves[name] = density_profile(tv, mu, p, degrees, weight=hv)

    if zero:
        cyclic, reason = False, f"weight vanishes at {len(zero)} atom(s)"
    else:
        worst = max(
            (curves[n][-1].residual / (norms[n] or 1.0) for n in curves), default=0.0
        )
        cyclic = worst < tol
        reason = f"max relative residual {worst:.3e} at degree {degrees[-1] if degrees else 0}"
    return CyclicityReport(curves, norms, degrees, tol, cyclic, reason, zero, bound_ok)


# ---- graph cyclicity -------------------------------------------------------------


def graph_cyclic_transform(zset, phi):
    """Multiply each function of ``zset`` by ``exp(-|phi|)`` pointwise."""
    pv = getattr(phi, "values", phi)
    damp = np.exp(-np.abs(np.asarray(pv, dtype=complex)))
    out = []
    for f in zset:
        if isinstance(f, SampledFunction):
            out.append(f * damp)
        else:
            out.append(np.asarray(f, dtype=complex) * damp)
    return out


def graph_weight(phi_values, p) -> np.ndarray:
    """``(1 + |phi|^p)^{1/p}``: the factor turning graph norms into plain norms."""
    return (1.0 + np.abs(phi_values) ** p) ** (1.0 / p)


def graph_norm(err, phi_values, mu: DiscreteMeasure, p) -> float:
    """Graph norm ``(|e|_p^p + |phi e|_p^p)^{1/p}`` (no root for p < 1)."""
    a = np.abs(err)
    s = float(np.sum(mu.weights * a**p) + np.sum(mu.weights * np.abs(phi_values * err) ** p))
    return s ** (1.0 / p) if p >= 1 else s


@dataclass
class GraphDensityReport:
    """Per-target residuals at each degree in three equivalent forms."""

    degrees: list
    residual_reweighted: dict
    residual_graph: dict
    residual_scaled: dict
    norms: dict
    tol: float
    dense: bool
    max_mismatch: float

    def rows(self):
        for name in self.residual_reweighted:
            for d, r in zip(self.degrees, self.residual_reweighted[name]):
                yield name, d, r


def graph_density_test(
    zset,
    phi,
    mu: DiscreteMeasure,
    p=2.0,
    degree_max: int = 10,
    tol: float = 1e-3,
    *,
    targets: Optional[dict] = None,
    degrees: Optional[Sequence[int]] = None,
    seed: int = 0,
    check_tol: float = 1e-12,
) -> GraphDensityReport:
    """Density of ``{P(phi) f : f in zset}`` in the graph norm of multiplication by phi.

    Each target is approximated in ``L^p((1 + |phi|^p) mu)``.  The same
    error is then measured in the graph norm and, after scaling by
    ``(1 + |phi|^p)^{1/p}``, in ``L^p(mu)``; the three values must agree to
    ``check_tol`` relative, otherwise :class:`BoundViolation` is raised.
    """
    p = check_norm(p)
    if p == SUP:
        raise ValueError("graph density needs a finite exponent")
    phiv = values_on(phi, mu)
    F = [values_on(f, mu) for f in zset]
    g = graph_weight(phiv, p)
    nu = DiscreteMeasure(mu.points, mu.weights * g**p)
    if targets is None:
        rng = np.random.default_rng(seed)
        k = min(8, len(mu))
        idx = np.sort(rng.choice(len(mu), size=k, replace=False))
        targets = {f"indicator[{i}]": np.eye(1, len(mu), int(i))[0].astype(complex) for i in idx}
        targets["conj_phi"] = np.conj(phiv)
    if degrees is None:
        degrees = default_degrees(degree_max, p)
    degrees = sorted(int(d) for d in degrees)

    res_e, res_g, res_d, norms = {}, {}, {}, {}
    mismatch = 0.0
    for name, t in targets.items():
        tv = values_on(t, mu)
        norms[name] = _lp_of_abs(np.abs(tv), nu.weights, p)
        res_e[name], res_g[name], res_d[name] = [], [], []
        for d in degrees:
            approx, r_e = generated_fit(tv, nu, F, d, p, nodes=phiv)
            err = tv - approx
            r_g = graph_norm(err, phiv, mu, p)
            r_d = _lp_of_abs(np.abs(err * g), mu.weights, p)
            scale = max(abs(r_e), 1e-300)
            mismatch = max(mismatch, abs(r_g - r_e) / scale, abs(r_d - r_e) / scale)
            res_e[name].append(r_e)
            res_g[name].append(r_g)
            res_d[name].append(r_d)
    if mismatch > check_tol:
        raise BoundViolation(f"graph-norm and reweighted residuals differ by {mismatch:.3e}")
    dense = all(res_e[n][-1] / (norms[n] or 1.0) < tol for n in res_e) if degrees else False
    return GraphDensityReport(degrees, res_e, res_g, res_d, norms, tol, dense, mismatch)


# ---- closure composition -------------------------------------------------------


@dataclass
class ComposeStep:
    n: int
    residual: float
    bound: float
    sup_factor: float


def _metric(a, w, p):
    return _lp_of_abs(a, w, p)


def compose_chain(a, b, ak, c, mu: DiscreteMeasure, p, n_max: int) -> list:
    """Residuals of ``a ak^n c`` against ``a b^n c`` for n = 0..n_max.

    Alongside each residual the telescoping bound is propagated:
    ``r_{n+1} <= |a b^n c|_inf |b - ak|_p + |ak|_inf r_n`` (for p < 1 both
    sup factors enter through their p-th powers, matching the metric).
    """
    w = mu.weights
    scale = (lambda x: x) if p >= 1 else (lambda x: x**p)
    gap = _metric(np.abs(b - ak), w, p)
    ak_sup = scale(float(np.max(np.abs(ak))))
    steps = [ComposeStep(0, 0.0, 0.0, float(np.max(np.abs(a * c))))]
    exact = a * c
    approx = a * c
    bound = 0.0
    for n in range(1, n_max + 1):
        sup_prev = float(np.max(np.abs(exact)))
        bound = scale(sup_prev) * gap + ak_sup * bound
        exact = exact * b
        approx = approx * ak
        r = _metric(np.abs(exact - approx), w, p)
        steps.append(ComposeStep(n, r, bound, float(np.max(np.abs(exact)))))
    return steps


@dataclass
class ComposeReport:
    """One entry per approximant ``a_k`` of ``b``."""

    residuals: list
    bounds: list
    chains: list
    unbounded: bool


def closure_compose(
    a_basis,
    b_approx_seq,
    c,
    target: dict,
    mu: DiscreteMeasure,
    p=2.0,
    *,
    b,
    slack: float = 1e-9,
) -> ComposeReport:
    """Approximate ``sum coef * a_j * b^m * c`` by ``sum coef * a_j * a_k^m * c``.

    ``target`` maps ``(j, m)`` to a coefficient; ``a_basis[j]`` is a member
    of the algebra A (a :class:`Polynomial` or per-atom values) and each
    ``a_k`` in ``b_approx_seq`` approximates ``b`` from A.  For every ``a_k``
    the achieved residual is returned together with the bound assembled from
    the telescoping chains; exceeding the bound raises :class:`BoundViolation`.
    """
    p = check_norm(p)
    if p == SUP:
        raise ValueError("closure composition uses a finite exponent")
    z = mu.points
    bv = values_on(b, mu)
    cv = values_on(c, mu)

    def ev(f):
        if isinstance(f, Polynomial) or callable(f) and not isinstance(f, SampledFunction):
            return np.asarray(f(z), dtype=complex)
        return values_on(f, mu)

    A = [ev(a) for a in a_basis]
    n_max = max((m for (_, m) in target), default=0)
    unbounded = False
    residuals, bounds, chains = [], [], []
    exact = np.zeros(len(mu), dtype=complex)
    for (j, m), coef in target.items():
        exact += coef * A[j] * bv**m * cv
    for ak_f in b_approx_seq:
        ak = ev(ak_f)
        approx = np.zeros(len(mu), dtype=complex)
        total_bound = 0.0
        per_term = {}
        chain_cache = {}
        for (j, m), coef in target.items():
            if j not in chain_cache:
                chain_cache[j] = compose_chain(A[j], bv, ak, cv, mu, p, n_max)
            step = chain_cache[j][m]
            coef_scale = abs(coef) if p >= 1 else abs(coef) ** p
            total_bound += coef_scale * step.bound
            approx += coef * A[j] * ak**m * cv
            per_term[(j, m)] = step
            if step.sup_factor > UNBOUNDED:
                unbounded = True
        r = _metric(np.abs(exact - approx), mu.weights, p)
        if r > total_bound + slack * max(1.0, total_bound):
            raise BoundViolation(f"composition residual {r} exceeds bound {total_bound}")
        residuals.append(r)
        bounds.append(total_bound)
        chains.append(per_term)
    return ComposeReport(residuals, bounds, chains, unbounded)

