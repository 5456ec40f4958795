"""Best polynomial approximation on discrete measures.

Polynomials are never handled through raw monomial normal equations.  Every
least-squares subproblem builds an orthonormal basis for the weighted inner
product by Arnoldi iteration on the nodes (Vandermonde with Arnoldi), and
the approximant is kept in that basis.  Monomial coefficients are available
for display but evaluation goes through the Hessenberg recurrence.

Three error measures are supported:

* L^2: orthogonal projection;
* L^p, ``0 < p``: iteratively reweighted least squares;
* sup: Lawson's multiplicative weight iteration, which also yields a
  certified lower bound for the discrete minimax error.

An optional multiplier ``h`` turns the approximating set into ``Pi(z) * h``;
this is reduced to unweighted approximation of ``target/h`` in the measure
``|h|^p mu``.  Atoms where ``h`` vanishes are unreachable and contribute
their full target mass to the residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .measure import SUP, DiscreteMeasure, _lp_of_abs, check_norm, values_on

#: relative size of the new Krylov direction below which Arnoldi stops
RANK_RTOL = 1e-13
IRLS_CLAMP = (1e-12, 1e12)
IRLS_TOL = 1e-9
IRLS_MAXITER = 200
LAWSON_TOL = 1e-6
LAWSON_MAXITER = 500
DEFAULT_DEGREES = tuple(range(33))


def _ip(weights, f, g):
    """Weighted inner products ``sum_i w_i f_i conj(g_i)`` (g may be a matrix)."""
    return (weights * f) @ np.conj(g) if np.ndim(g) == 1 else np.conj(g).T @ (weights * f)


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Orthonormal polynomials q_0, ..., q_{rank-1} for a weighted node set.

    ``values[:, k]`` holds q_k at the nodes and ``hessenberg`` the recurrence
    ``z q_k = sum_{j <= k+1} H[j, k] q_j``, which evaluates the basis anywhere.
    """

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    hessenberg: np.ndarray
    degree: int
    measure_id: Optional[str] = None

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.degree + 1

    def evaluate(self, z, upto: int | None = None) -> np.ndarray:
        """Matrix of q_0..q_{upto-1} at the points ``z`` (shape ``(len(z), upto)``)."""
        z = np.asarray(z, dtype=complex).ravel()
        r = self.rank if upto is None else min(upto, self.rank)
        H = self.hessenberg
        out = np.empty((len(z), r), dtype=complex)
        out[:, 0] = 1.0 / math.sqrt(float(np.sum(self.weights)))
        for k in range(r - 1):
            v = z * out[:, k] - out[:, : k + 1] @ H[: k + 1, k]
            out[:, k + 1] = v / H[k + 1, k]
        return out

    def gram(self) -> np.ndarray:
        Q = self.values
        return np.conj(Q).T @ (self.weights[:, None] * Q)

    def monomial_matrix(self) -> np.ndarray:
        """``C`` with ``q_k(z) = sum_j C[j, k] z^j``.

        Ill conditioned at high degree; meant for inspection only.
        """
        r = self.rank
        H = self.hessenberg
        C = np.zeros((r, r), dtype=complex)
        C[0, 0] = 1.0 / math.sqrt(float(np.sum(self.weights)))
        for k in range(r - 1):
            v = np.zeros(r, dtype=complex)
            v[1:] = C[:-1, k]
            v -= C[:, : k + 1] @ H[: k + 1, k]
            C[:, k + 1] = v / H[k + 1, k]
        return C


def arnoldi_basis(nodes, weights, degree: int, measure_id=None) -> OrthoBasis:
    """Orthonormalize 1, z, ..., z^degree on weighted nodes.

    Each new direction ``z q_k`` is orthogonalized twice against all previous
    members (classical Gram-Schmidt with reorthogonalization).  Iteration
    stops early when the new direction is numerically in the span already.
    """
    z = np.asarray(nodes, dtype=complex).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if degree < 0:
        raise ValueError("degree must be >= 0")
    n = len(z)
    total = float(np.sum(w))
    if not total > 0:
        raise ValueError("weights must have positive total mass")
    Q = np.zeros((n, degree + 1), dtype=complex)
    H = np.zeros((degree + 1, degree), dtype=complex)
    Q[:, 0] = 1.0 / math.sqrt(total)
    rank = 1
    for k in range(degree):
        v = z * Q[:, k]
        scale = math.sqrt(float(np.sum(w * np.abs(v) ** 2)))
        h = np.zeros(k + 1, dtype=complex)
        for _ in range(2):
            c = np.conj(Q[:, : k + 1]).T @ (w * v)
            v = v - Q[:, : k + 1] @ c
            h += c
        beta = math.sqrt(float(np.sum(w * np.abs(v) ** 2)))
        if scale == 0 or beta <= RANK_RTOL * scale:
            break
        H[: k + 1, k] = h
        H[k + 1, k] = beta
        Q[:, k + 1] = v / beta
        rank += 1
    return OrthoBasis(z, w, Q[:, :rank].copy(), H[:rank, : rank - 1].copy(), degree, measure_id)


def build_ortho_basis(mu: DiscreteMeasure, degree: int, nodes=None) -> OrthoBasis:
    """Orthonormal polynomial basis of L^2(mu) up to ``degree``.

    ``nodes`` replaces the atom positions, e.g. by the values of a function
    phi when polynomials in phi are wanted.
    """
    z = mu.points if nodes is None else values_on(nodes, mu)
    return arnoldi_basis(z, mu.weights, degree, mu.support_id)


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Polynomial in one complex variable.

    With ``basis=None`` the coefficients are monomial (``coeffs[j]`` multiplies
    ``z^j``); otherwise they refer to the orthonormal ``basis``.
    """

    coeffs: np.ndarray
    basis: Optional[OrthoBasis] = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex)).copy()
        if self.basis is not None and len(c) > self.basis.rank:
            raise ValueError("more coefficients than basis functions")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        if self.basis is None:
            out = np.zeros(z.size, dtype=complex)
            for c in self.coeffs[::-1]:
                out = out * z.ravel() + c
        else:
            out = self.basis.evaluate(z.ravel(), len(self.coeffs)) @ self.coeffs
        return out.reshape(shape)

    def to_monomial(self) -> "Polynomial":
        if self.basis is None:
            return self
        C = self.basis.monomial_matrix()[: len(self.coeffs), : len(self.coeffs)]
        return Polynomial(C @ self.coeffs)

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls(np.zeros(1))


@dataclass(frozen=True)
class BiPolynomial:
    """Polynomial in z and conj(z): ``sum c[(j, m)] z^j conj(z)^m``."""

    coeffs: dict

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for (j, m), c in self.coeffs.items():
            if c != 0:
                out += c * z**j * np.conj(z) ** m
        return out


@dataclass
class Fit:
    """Result of a best-approximation run.

    ``residual`` follows :func:`~cyclab.measure.lp_distance` conventions.
    ``lower_bound`` is only set by the sup-norm solver (a certified lower
    bound on the discrete minimax error).
    """

    poly: Polynomial
    residual: float
    converged: bool = True
    iterations: int = 0
    lower_bound: float = float("nan")
    degree: int = 0
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __iter__(self):
        yield self.poly
        yield self.residual


# ---- weighted reduction --------------------------------------------------


@dataclass
class _Problem:
    """Approximation of target t by p(z)*h, reduced to the atoms where h != 0."""

    nodes: np.ndarray
    weights: np.ndarray  # mu weights on the reachable atoms
    target: np.ndarray  # t / h on the reachable atoms
    hmod: np.ndarray  # |h| on the reachable atoms
    fixed_abs: np.ndarray  # |t| on unreachable atoms
    fixed_weights: np.ndarray
    mask: np.ndarray
    measure_id: Optional[str]


def _problem(target, mu: DiscreteMeasure, weight=None, nodes=None) -> _Problem:
    t = values_on(target, mu)
    z = mu.points if nodes is None else values_on(nodes, mu)
    if weight is None:
        h = np.ones(len(mu), dtype=complex)
    else:
        h = values_on(weight, mu)
    mask = h != 0
    return _Problem(
        nodes=z[mask],
        weights=mu.weights[mask],
        target=t[mask] / h[mask],
        hmod=np.abs(h[mask]),
        fixed_abs=np.abs(t[~mask]),
        fixed_weights=mu.weights[~mask],
        mask=mask,
        measure_id=mu.support_id,
    )


def _residual(prob: _Problem, err, p) -> float:
    """Residual from errors ``err = t/h - p(z)`` on reachable atoms."""
    a = np.concatenate([np.abs(err) * prob.hmod, prob.fixed_abs])
    w = np.concatenate([prob.weights, prob.fixed_weights])
    return _lp_of_abs(a, w, p)


def _project(basis: OrthoBasis, weights, target, upto=None):
    Q = basis.values if upto is None else basis.values[:, :upto]
    c = _ip(weights, target, Q)
    r = target - Q @ c
    c2 = _ip(weights, r, Q)
    return c + c2, r - Q @ c2


def _empty_fit(prob, p) -> Fit:
    return Fit(Polynomial.zero(), _residual(prob, np.zeros(0), p), degree=0)


# ---- L^2 ---------------------------------------------------------------


def best_approx_l2(target, mu: DiscreteMeasure, degree: int, *, weight=None, nodes=None) -> Fit:
    """Orthogonal projection of ``target`` onto polynomials of degree <= ``degree``.

    With ``weight=h`` the approximants are ``p*h``; with ``nodes=phi`` they are
    polynomials in phi.  The residual is the L^2(mu) norm of the error.
    """
    return l2_profile(target, mu, [degree], weight=weight, nodes=nodes)[0]


def l2_profile(target, mu, degrees, *, weight=None, nodes=None) -> list:
    """L^2 fits for several degrees sharing one basis."""
    degrees = list(degrees)
    prob = _problem(target, mu, weight, nodes)
    if not degrees:
        return []
    if prob.nodes.size == 0:
        return [_empty_fit(prob, 2.0) for _ in degrees]
    dmax = max(degrees)
    nu = prob.weights * prob.hmod**2
    basis = arnoldi_basis(prob.nodes, nu, dmax, prob.measure_id)
    c, _ = _project(basis, nu, prob.target)
    Q = basis.values
    fits = []
    for d in degrees:
        m = min(d + 1, basis.rank)
        err = prob.target - Q[:, :m] @ c[:m]
        fits.append(
            Fit(Polynomial(c[:m], basis), _residual(prob, err, 2.0), degree=d, values=None)
        )
    return fits


# ---- L^p via IRLS ----------------------------------------------------------


def _irls_scale(err, p):
    """``|err|^(p-2)`` clamped; zero errors map to the clamp ends without warnings."""
    with np.errstate(divide="ignore"):
        return np.clip(np.abs(err) ** (p - 2), *IRLS_CLAMP)


def best_approx_lp(
    target,
    mu: DiscreteMeasure,
    degree: int,
    p: float,
    *,
    weight=None,
    nodes=None,
    start: Optional[Polynomial] = None,
    maxiter: int = IRLS_MAXITER,
    tol: float = IRLS_TOL,
) -> Fit:
    """Best L^p(mu) approximation by iteratively reweighted least squares.

    Each step solves a weighted L^2 problem with weights ``w |r|^(p-2)``
    clamped to ``[1e-12, 1e12]``.  For ``p < 1`` (non-convex) and ``p > 2``
    the weight update is damped by 1/2.  The best iterate is returned, so a
    ``start`` polynomial (e.g. the optimum of a lower degree) is never beaten
    by a worse answer.  For ``p < 1`` only a local optimum is claimed.
    """
    p = check_norm(p)
    if p == SUP:
        raise ValueError("use best_approx_sup for the sup norm")
    if p == 2:
        return best_approx_l2(target, mu, degree, weight=weight, nodes=nodes)
    prob = _problem(target, mu, weight, nodes)
    if prob.nodes.size == 0:
        return _empty_fit(prob, p)
    nu = prob.weights * prob.hmod**p

    def solve(u):
        basis = arnoldi_basis(prob.nodes, u, degree, prob.measure_id)
        c, err = _project(basis, u, prob.target)
        return Polynomial(c, basis), err

    poly, err = solve(nu)
    best = (_residual(prob, err, p), poly, err)
    if start is not None:
        serr = prob.target - start(prob.nodes)
        sres = _residual(prob, serr, p)
        if sres < best[0]:
            best = (sres, start, serr)
            poly, err = start, serr
    u = nu.copy()
    damp = p < 1 or p > 2
    prev = best[0]
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        unew = nu * _irls_scale(err, p)
        u = 0.5 * (u + unew) if damp else unew
        poly, err = solve(u / np.max(u))
        res = _residual(prob, err, p)
        if res < best[0]:
            best = (res, poly, err)
        if abs(res - prev) < tol:
            converged = True
            break
        prev = res
    return Fit(best[1], best[0], converged=converged, iterations=it, degree=degree)


# ---- sup norm via Lawson ------------------------------------------------------


def lawson(
    fit: Callable,
    target: np.ndarray,
    err_weight: np.ndarray,
    *,
    init_weights=None,
    candidates: Sequence = (),
    maxiter: int = LAWSON_MAXITER,
    tol: float = LAWSON_TOL,
    stop_below: float | None = None,
    stop_above: float | None = None,
):
    """Lawson's iteration for a discrete weighted minimax problem.

    ``fit(v)`` must return ``(model, approx_values)`` minimizing
    ``sum v |g (t - approx)|^2`` where ``g = err_weight``.  ``candidates`` are
    extra ``(model, approx_values)`` pairs (warm starts) that compete for the
    best iterate.  Returns ``(model, upper, lower, converged, iterations,
    weights)``: the best max error found and the largest weighted L^2 lower
    bound seen.
    """
    t = np.asarray(target)
    g = np.asarray(err_weight, dtype=float)
    n = len(t)
    if init_weights is None:
        v = np.full(n, 1.0 / n)
    else:
        v = np.asarray(init_weights, dtype=float).copy()
        v = np.maximum(v, 0)
        v /= v.sum()
    best_model, best_upper = None, np.inf
    for model, approx in candidates:
        upper = float(np.max(g * np.abs(t - approx)))
        if upper < best_upper:
            best_model, best_upper = model, upper
    lower = 0.0
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        model, approx = fit(v * g**2)
        e = g * np.abs(t - approx)
        upper = float(np.max(e))
        lower = max(lower, math.sqrt(float(np.sum(v * e**2))))
        if upper < best_upper:
            best_model, best_upper = model, upper
        if best_upper - lower <= tol * best_upper or best_upper == 0:
            converged = True
            break
        if stop_below is not None and best_upper < stop_below:
            break
        if stop_above is not None and lower > stop_above:
            break
        ve = v * e
        s = ve.sum()
        if not s > 0:
            break
        vnew = ve / s
        # guard against weights underflowing to exact zero
        vnew = np.maximum(vnew, 1e-300)
        v = vnew / vnew.sum()
    return best_model, best_upper, min(lower, best_upper), converged, it, v


def best_approx_sup(
    target,
    points,
    degree: int,
    *,
    err_weight=None,
    start: Optional[Polynomial] = None,
    init_weights=None,
    maxiter: int = LAWSON_MAXITER,
    tol: float = LAWSON_TOL,
    stop_below: float | None = None,
    stop_above: float | None = None,
) -> Fit:
    """Discrete minimax approximation on a point set by Lawson's algorithm.

    Minimizes ``max_i g_i |t_i - p(z_i)|`` over polynomials of degree <=
    ``degree`` (``g = err_weight``, default 1).  The returned residual is the
    max error of the returned polynomial, an upper bound for the minimax
    value; ``lower_bound`` is a certified lower bound.  ``converged`` means
    the two agree to ``tol`` relative.
    """
    z = np.asarray(points, dtype=complex).ravel()
    t = np.asarray(getattr(target, "values", target), dtype=complex).ravel()
    if len(t) != len(z):
        raise ValueError("target and points differ in length")
    if len(z) == 0:
        return Fit(Polynomial.zero(), 0.0, degree=degree)
    g = np.ones(len(z)) if err_weight is None else np.asarray(err_weight, dtype=float).ravel()

    def fit(u):
        basis = arnoldi_basis(z, u, degree)
        c, err = _project(basis, u, t)
        return Polynomial(c, basis), t - err

    cands = [] if start is None else [(start, start(z))]
    model, upper, lower, conv, it, v = lawson(
        fit, t, g, init_weights=init_weights, candidates=cands, maxiter=maxiter, tol=tol,
        stop_below=stop_below, stop_above=stop_above,
    )
    out = Fit(model, upper, converged=conv, iterations=it, lower_bound=lower, degree=degree)
    out.values = v
    return out


# ---- density profiles -----------------------------------------------------------


@dataclass(frozen=True)
class ProfilePoint:
    degree: int
    residual: float
    converged: bool = True


def density_profile(
    target,
    mu: DiscreteMeasure,
    p=2.0,
    degrees: Sequence[int] = DEFAULT_DEGREES,
    weight=None,
    *,
    nodes=None,
) -> list:
    """Residual of the best approximation of ``target`` by ``poly * weight``.

    Returns one :class:`ProfilePoint` per requested degree.  For iterative
    norms each degree is warm-started from the previous optimum, which makes
    the curve nonincreasing.
    """
    p = check_norm(p)
    degrees = list(degrees)
    if not degrees:
        return []
    if p == 2:
        return [ProfilePoint(f.degree, f.residual) for f in
                l2_profile(target, mu, degrees, weight=weight, nodes=nodes)]
    out = []
    prev = None
    order = sorted(range(len(degrees)), key=lambda i: degrees[i])
    results = {}
    if p == SUP:
        prob = _problem(target, mu, weight, nodes)
        fixed = float(np.max(prob.fixed_abs)) if prob.fixed_abs.size else 0.0
        vw = None
        for i in order:
            d = degrees[i]
            f = best_approx_sup(prob.target, prob.nodes, d, err_weight=prob.hmod,
                                start=prev, init_weights=vw)
            prev, vw = f.poly, f.values
            results[i] = ProfilePoint(d, max(f.residual, fixed), f.converged)
    else:
        for i in order:
            d = degrees[i]
            f = best_approx_lp(target, mu, d, p, weight=weight, nodes=nodes, start=prev)
            prev = f.poly
            results[i] = ProfilePoint(d, f.residual, f.converged)
    for i in range(len(degrees)):
        out.append(results[i])
    return out


def dense_verdict(profile, target_norm: float, tol: float = 1e-3) -> bool:
    """True when the last residual is below ``tol`` relative to ``target_norm``."""
    if not profile:
        return False
    scale = target_norm if target_norm > 0 else 1.0
    return profile[-1].residual <= tol * scale


# ---- several generators ------------------------------------------------------


def generated_fit(target, mu: DiscreteMeasure, generators, degree: int, p=2.0, *, nodes=None):
    """Best approximation of ``target`` by ``sum_k P_k(nodes) f_k``.

    ``generators`` is a list of per-atom functions ``f_k``; each gets its own
    polynomial of degree <= ``degree`` in ``nodes`` (default: atom positions).
    Returns ``(approx_values, residual)``; p = 2 is solved by least squares,
    other finite p by IRLS on the same design.
    """
    p = check_norm(p)
    if p == SUP:
        raise ValueError("generated_fit supports finite exponents only")
    t = values_on(target, mu)
    F = np.array([values_on(f, mu) for f in generators], dtype=complex)
    if F.size == 0:
        return np.zeros_like(t), _lp_of_abs(np.abs(t), mu.weights, p)
    z = mu.points if nodes is None else values_on(nodes, mu)
    w = mu.weights
    bw = w * np.sum(np.abs(F) ** 2, axis=0)
    live = bw > 0
    if not np.any(live):
        return np.zeros_like(t), _lp_of_abs(np.abs(t), w, p)
    basis = arnoldi_basis(z[live], bw[live], degree)
    Qall = np.zeros((len(t), basis.rank), dtype=complex)
    Qall[live] = basis.values
    A = np.concatenate([Qall * f[:, None] for f in F], axis=1)

    def solve(u):
        s = np.sqrt(u)
        coef, *_ = np.linalg.lstsq(A * s[:, None], t * s, rcond=None)
        return A @ coef

    approx = solve(w)
    best = (_lp_of_abs(np.abs(t - approx), w, p), approx)
    if p != 2:
        u = w.copy()
        prev = best[0]
        for _ in range(IRLS_MAXITER):
            unew = w * _irls_scale(t - approx, p)
            u = 0.5 * (u + unew) if (p < 1 or p > 2) else unew
            approx = solve(u / u.max())
            res = _lp_of_abs(np.abs(t - approx), w, p)
            if res < best[0]:
                best = (res, approx)
            if abs(res - prev) < IRLS_TOL:
                break
            prev = res
    return best[1], best[0]
