"""Gaussian-weighted polynomial approximation in C_0(R^d).

Approximants have the form ``p(x) exp(-c|x|^2)``.  The module provides

* the Taylor/Stirling remainder bound that drives the exponent reduction
  ``p e^{-(n+1)|x|^2} e^{-2|x|^2} -> p T_k(-|x|^2) e^{-n|x|^2} e^{-2|x|^2}``,
* that reduction step itself, on explicit multivariate polynomials,
* discrete minimax fits ``p e^{-c|x|^2} ~ f`` on uniform grids.

Fits are computed in the tensor Hermite-function basis
``h_a1(s x_1) ... h_ad(s x_d)`` with ``s = sqrt(2c)``, which spans exactly
``{p e^{-c|x|^2}: deg p <= D}`` and is orthonormal on R^d, so the least
squares subproblems stay well conditioned at degree 24 and beyond.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog

from .errors import BoundViolation
from .polyapprox import LAWSON_MAXITER, LAWSON_TOL, lawson

SLACK = 1e-9


# ---- Taylor remainder bound -----------------------------------------------------


def taylor_gaussian_bound(k: int) -> tuple:
    """Lagrange remainder bound and its Stirling cap.

    ``bound = e^{-(k+1)} (k+1)^{k+1} / (k+1)!`` is the maximum over t >= 0 of
    ``e^{-t} t^{k+1} / (k+1)!``, attained at ``t = k+1``;
    ``cap = (2 pi (k+1))^{-1/2}`` dominates it by Stirling's inequality.
    Computed in the log domain, so large k is fine.
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    m = int(k) + 1
    log_bound = -m + m * math.log(m) - math.lgamma(m + 1)
    return math.exp(log_bound), (2 * math.pi * m) ** -0.5


def taylor_exp(k: int, s):
    """k-th Taylor polynomial of exp at 0, evaluated at ``s`` (Horner)."""
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, math.exp(-math.lgamma(k + 1)))
    for j in range(k - 1, -1, -1):
        out = out * s + math.exp(-math.lgamma(j + 1))
    return out


class RemainderSup(NamedTuple):
    sup: float
    argmax: float
    majorant_argmax: float
    bound: float


def remainder_grid(k: int, step: float = 0.01) -> np.ndarray:
    return np.arange(0.0, 4.0 * (k + 1) + step / 2, step)


def verify_remainder_sup(k: int, grid=None) -> RemainderSup:
    """Grid maximum of ``e^{-t} |e^{-t} - T_k(-t)|`` checked against the bound.

    Also reports where the Lagrange majorant ``e^{-t} t^{k+1}/(k+1)!`` peaks on
    the grid.  Raises :class:`BoundViolation` if the sup exceeds the bound.
    """
    t = remainder_grid(k) if grid is None else np.asarray(grid, dtype=float)
    # e^{-t} T_k(-t) loses at most ~eps relative to sum |terms| <= e^t
    vals = np.abs(np.exp(-2 * t) - np.exp(-t) * taylor_exp(k, -t))
    i = int(np.argmax(vals))
    with np.errstate(divide="ignore"):
        logmaj = -t + (k + 1) * np.log(t) - math.lgamma(k + 2)
    j = int(np.argmax(logmaj))
    bound, _ = taylor_gaussian_bound(k)
    out = RemainderSup(float(vals[i]), float(t[i]), float(t[j]), bound)
    if out.sup > bound + SLACK:
        raise BoundViolation(f"k={k}: remainder sup {out.sup} exceeds bound {bound}")
    return out


def stirling_table(kmax: int = 60, step: float = 0.01) -> list:
    rows = []
    for k in range(kmax + 1):
        r = verify_remainder_sup(k, remainder_grid(k, step))
        _, cap = taylor_gaussian_bound(k)
        rows.append({"k": k, "empirical_sup": r.sup, "argmax": r.argmax,
                     "bound": r.bound, "cap": cap, "majorant_argmax": r.majorant_argmax})
    return rows


# ---- multivariate polynomials --------------------------------------------------------


def _powers(X, maxdeg):
    P = np.ones((maxdeg + 1,) + X.shape)
    for j in range(1, maxdeg + 1):
        P[j] = P[j - 1] * X
    return P


@dataclass(frozen=True)
class MultiPoly:
    """Real polynomial in d variables: ``{multi-index: coefficient}``."""

    coeffs: dict
    d: int

    def __post_init__(self):
        clean = {tuple(int(a) for a in k): float(v) for k, v in self.coeffs.items() if v != 0}
        for k in clean:
            if len(k) != self.d:
                raise ValueError(f"multi-index {k} does not have length {self.d}")
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def constant(cls, value: float, d: int) -> "MultiPoly":
        return cls({(0,) * d: value}, d)

    @classmethod
    def coordinate(cls, i: int, d: int) -> "MultiPoly":
        idx = [0] * d
        idx[i] = 1
        return cls({tuple(idx): 1.0}, d)

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            X = X.reshape(-1, self.d)
        out = np.zeros(len(X))
        if not self.coeffs:
            return out
        P = _powers(X, max(max(k) for k in self.coeffs))
        for k, c in self.coeffs.items():
            term = np.full(len(X), c)
            for j, a in enumerate(k):
                if a:
                    term = term * P[a, :, j]
            out += term
        return out

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return MultiPoly(out, self.d)

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            return MultiPoly({k: v * other for k, v in self.coeffs.items()}, self.d)
        out: dict = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0.0) + v1 * v2
        return MultiPoly(out, self.d)

    __rmul__ = __mul__

    def to_monomial(self) -> "MultiPoly":
        return self


def radial_taylor(k: int, d: int) -> MultiPoly:
    """``T_k(-|x|^2)`` as an explicit polynomial in d variables."""
    sq = MultiPoly({}, d)
    for i in range(d):
        idx = [0] * d
        idx[i] = 2
        sq = sq + MultiPoly({tuple(idx): 1.0}, d)
    neg = sq * -1.0
    out = MultiPoly.constant(1.0, d)
    term = MultiPoly.constant(1.0, d)
    for j in range(1, k + 1):
        term = term * neg * (1.0 / j)
        out = out + term
    return out


def hermite_functions(n: int, y) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_n at ``y`` (shape ``(n+1,) + y.shape``)."""
    y = np.asarray(y, dtype=float)
    H = np.empty((n + 1,) + y.shape)
    H[0] = np.pi**-0.25 * np.exp(-0.5 * y * y)
    if n > 0:
        H[1] = math.sqrt(2.0) * y * H[0]
    for j in range(1, n):
        H[j + 1] = math.sqrt(2.0 / (j + 1)) * y * H[j] - math.sqrt(j / (j + 1)) * H[j - 1]
    return H


def hermite_poly_coeffs(n: int) -> np.ndarray:
    """Monomial coefficients of the polynomial parts h_j(y) e^{y^2/2}, j <= n."""
    C = np.zeros((n + 1, n + 1))
    C[0, 0] = np.pi**-0.25
    if n > 0:
        C[1, 1] = math.sqrt(2.0) * C[0, 0]
    for j in range(1, n):
        C[j + 1, 1:] += math.sqrt(2.0 / (j + 1)) * C[j, :-1]
        C[j + 1] -= math.sqrt(j / (j + 1)) * C[j - 1]
    return C


@dataclass(frozen=True)
class HermiteSeries:
    """Polynomial ``p`` stored through ``p(x) e^{-c|x|^2} = sum a_k prod h_{k_j}(s x_j)``."""

    coeffs: dict
    d: int
    c: float

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 * self.c)

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def _factors(self, X, gaussian: bool):
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.d)
        n = max((max(k) for k in self.coeffs), default=0)
        Y = self.scale * X
        H = hermite_functions(n, Y)
        if not gaussian:
            H = H * np.exp(0.5 * Y * Y)
        return H

    def weighted(self, X) -> np.ndarray:
        """``p(x) e^{-c|x|^2}`` evaluated stably."""
        H = self._factors(X, gaussian=True)
        return _hermite_sum(self.coeffs, H)

    def __call__(self, X) -> np.ndarray:
        return _hermite_sum(self.coeffs, self._factors(X, gaussian=False))

    def to_monomial(self) -> MultiPoly:
        n = max((max(k) for k in self.coeffs), default=0)
        C = hermite_poly_coeffs(n)
        s = self.scale
        out: dict = {}
        for k, a in self.coeffs.items():
            per_axis = [[(e, C[kj, e] * s**e) for e in range(kj + 1) if C[kj, e] != 0] for kj in k]
            for combo in itertools.product(*per_axis):
                idx = tuple(e for e, _ in combo)
                out[idx] = out.get(idx, 0.0) + a * math.prod(v for _, v in combo)
        return MultiPoly(out, self.d)


def _hermite_sum(coeffs, H):
    out = np.zeros(H.shape[1])
    for k, a in coeffs.items():
        term = np.full(H.shape[1], a)
        for j, kj in enumerate(k):
            term = term * H[kj, :, j]
        out += term
    return out


@dataclass(frozen=True, eq=False)
class GaussApproximant:
    """``poly(x) e^{-extra |x|^2} e^{-c |x|^2}`` on R^d."""

    poly: object
    c: float
    d: int
    extra: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Gaussian rate c must be positive")
        if self.extra < 0:
            raise ValueError("extra exponent must be >= 0")

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.d)
        r2 = np.sum(X * X, axis=1)
        if isinstance(self.poly, HermiteSeries) and self.poly.c == self.c:
            return self.poly.weighted(X) * np.exp(-self.extra * r2)
        return self.poly(X) * np.exp(-(self.c + self.extra) * r2)


# ---- exponent reduction ----------------------------------------------------------


def default_grid(d: int, c: float = 2.0, step: float | None = None) -> np.ndarray:
    """Uniform cube grid on which ``e^{-c|x|^2}`` drops below 1e-12 at the edge."""
    R = math.sqrt(math.log(1e12) / c)
    if step is None:
        step = {1: 0.01, 2: 0.05}.get(d, 0.2)
    ax = np.arange(-R, R + step / 2, step)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class ReductionStep(NamedTuple):
    approx: GaussApproximant
    gap: float
    constant: float
    bound: float


def reduce_exponent_step(approx: GaussApproximant, k: int, grid=None) -> ReductionStep:
    """Trade one unit of extra Gaussian exponent for a Taylor factor.

    ``p e^{-(n+1)|x|^2} e^{-c|x|^2}`` becomes ``p T_k(-|x|^2) e^{-n|x|^2} e^{-c|x|^2}``.
    The sup gap (measured on ``grid``) is checked against
    ``C * bound(k)`` with ``C = sup |p e^{-(n+1)|x|^2}|``.
    """
    if approx.extra < 1:
        raise ValueError("nothing to reduce: extra exponent is 0")
    X = default_grid(approx.d, approx.c) if grid is None else np.asarray(grid, dtype=float)
    X = X.reshape(-1, approx.d)
    poly = approx.poly.to_monomial()
    newpoly = poly * radial_taylor(k, approx.d)
    out = GaussApproximant(newpoly, approx.c, approx.d, approx.extra - 1)
    r2 = np.sum(X * X, axis=1)
    pvals = poly(X)
    before = pvals * np.exp(-(approx.extra + approx.c) * r2)
    after = newpoly(X) * np.exp(-(approx.extra - 1 + approx.c) * r2)
    gap = float(np.max(np.abs(before - after))) if len(X) else 0.0
    const = float(np.max(np.abs(pvals * np.exp(-approx.extra * r2)))) if len(X) else 0.0
    bound, _ = taylor_gaussian_bound(k)
    if gap > const * bound + SLACK:
        raise BoundViolation(f"reduction gap {gap} exceeds {const} * {bound}")
    return ReductionStep(out, gap, const, bound)


def reduce_to_pure(approx: GaussApproximant, k: int, grid=None) -> tuple:
    """Apply :func:`reduce_exponent_step` until no extra exponent is left.

    Returns the final approximant and the list of per-step reports; the total
    gap is at most the sum of the per-step gaps.
    """
    steps = []
    while approx.extra > 0:
        st = reduce_exponent_step(approx, k, grid)
        steps.append(st)
        approx = st.approx
    return approx, steps


# ---- grids and minimax fits ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussGrid:
    """Samples of a function on a uniform grid; axis j varies along array axis j."""

    dim: int
    step: float
    origin: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != self.dim:
            v = v.reshape(_cube_shape(v.size, self.dim))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.origin) != self.dim:
            raise ValueError("origin must have one entry per dimension")
        if not self.step > 0:
            raise ValueError("grid step must be positive")

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def axes(self) -> list:
        return [o + self.step * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def sample(cls, f, lo: float, hi: float, step: float, dim: int) -> "GaussGrid":
        n = int(round((hi - lo) / step)) + 1
        ax = lo + step * np.arange(n)
        mesh = np.meshgrid(*([ax] * dim), indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(dim, step, (lo,) * dim, np.asarray(f(X), dtype=float).reshape((n,) * dim))


def _cube_shape(size: int, dim: int) -> tuple:
    n = int(round(size ** (1.0 / dim)))
    if n**dim != size:
        raise ValueError(f"{size} values do not form a {dim}-dimensional cube")
    return (n,) * dim


def grid_to_json(g: GaussGrid) -> dict:
    return {"dim": g.dim, "step": g.step, "origin": list(g.origin),
            "shape": list(g.shape), "values": g.values.ravel().tolist()}


def grid_from_json(data: dict) -> GaussGrid:
    vals = np.asarray(data["values"], dtype=float)
    dim = int(data["dim"])
    if "shape" in data:
        vals = vals.reshape(tuple(int(s) for s in data["shape"]))
    return GaussGrid(dim, float(data["step"]), tuple(data["origin"]), vals)


def load_grid(path) -> GaussGrid:
    with open(path) as fh:
        return grid_from_json(json.load(fh))


def save_grid(g: GaussGrid, path) -> None:
    with open(path, "w") as fh:
        json.dump(grid_to_json(g), fh)


def _symmetries(grid: GaussGrid, rtol: float = 1e-12):
    """Sign flips and coordinate permutations leaving grid and samples invariant."""
    v = grid.values
    scale = max(float(np.max(np.abs(v))), 1e-300)
    flips = []
    for j, (o, n) in enumerate(zip(grid.origin, grid.shape)):
        centred = abs(o + (n - 1) * grid.step / 2) <= 1e-9 * grid.step * max(n, 1)
        if centred and np.max(np.abs(v - np.flip(v, axis=j))) <= rtol * scale:
            flips.append(j)
    perms = False
    if grid.dim > 1 and len(set(grid.shape)) == 1 and len(set(grid.origin)) == 1:
        perms = all(
            np.max(np.abs(v - np.swapaxes(v, j, j + 1))) <= rtol * scale
            for j in range(grid.dim - 1)
        )
    return flips, perms


def _multi_indices(D: int, d: int):
    for total in range(D + 1):
        for k in itertools.product(range(total + 1), repeat=d):
            if sum(k) == total:
                yield k


class _Design:
    """Symmetry-reduced Hermite design matrix for one grid."""

    def __init__(self, grid: GaussGrid, c: float, use_symmetry: bool = True):
        self.grid = grid
        self.c = c
        X = grid.points()
        f = grid.values.ravel()
        flips, perms = _symmetries(grid) if use_symmetry else ([], False)
        keep = np.ones(len(X), dtype=bool)
        for j in flips:
            keep &= X[:, j] >= -1e-12 * grid.step
        if perms:
            keep &= np.all(np.diff(X, axis=1) >= -1e-12 * grid.step, axis=1)
        self.flips, self.perms = flips, perms
        self.X = X[keep]
        self.f = f[keep]
        self.s = math.sqrt(2.0 * c)
        self._H = None
        self._hdeg = -1

    def orbits(self, D: int) -> list:
        out = []
        for k in _multi_indices(D, self.grid.dim):
            if any(k[j] % 2 for j in self.flips):
                continue
            if self.perms:
                if list(k) != sorted(k):
                    continue
                out.append(sorted(set(itertools.permutations(k))))
            else:
                out.append([k])
        return out

    def matrix(self, D: int):
        if self._hdeg < D:
            self._H = hermite_functions(D, self.s * self.X)
            self._hdeg = D
        H = self._H
        orbs = self.orbits(D)
        A = np.zeros((len(self.X), len(orbs)))
        for col, orb in enumerate(orbs):
            for k in orb:
                term = np.ones(len(self.X))
                for j, kj in enumerate(k):
                    term = term * H[kj, :, j]
                A[:, col] += term
        return A, orbs


@dataclass
class GaussFit:
    approx: GaussApproximant
    sup_error: float
    degree: int
    converged: bool
    lower_bound: float
    outside_sup: float = 0.0
    iterations: int = 0
    weights: Optional[np.ndarray] = field(default=None, repr=False)


def _series_from(orbs, coef, d, c) -> HermiteSeries:
    coeffs = {}
    for orb, a in zip(orbs, coef):
        for k in orb:
            coeffs[k] = coeffs.get(k, 0.0) + float(a)
    return HermiteSeries(coeffs, d, c)


def gaussian_weighted_sup_approx(
    grid: GaussGrid,
    c: float = 1.0,
    degree: int = 8,
    *,
    use_symmetry: bool = True,
    method: str = "lp",
    maxiter: int = LAWSON_MAXITER,
    tol: float = LAWSON_TOL,
) -> GaussFit:
    """Best sup-norm fit of ``p e^{-c|x|^2}`` to grid samples, deg p <= ``degree``."""
    return gaussian_sup_profile(grid, c, [degree], use_symmetry=use_symmetry,
                                method=method, maxiter=maxiter, tol=tol)[-1]


def gaussian_sup_profile(grid: GaussGrid, c: float = 1.0, degrees=range(0, 25), *,
                         use_symmetry: bool = True, method: str = "lp",
                         maxiter: int = LAWSON_MAXITER, tol: float = LAWSON_TOL) -> list:
    """Minimax fits for increasing degrees.

    Each degree is warm-started from the previous Lawson weights and competes
    with the previous optimum, so the error sequence is nonincreasing.  For
    targets invariant under sign flips or coordinate swaps of a centred grid
    the problem is solved on a fundamental domain with invariant basis
    functions, which gives the same minimax value.

    ``method="lp"`` solves each discrete minimax problem exactly as a linear
    program (HiGHS); ``method="lawson"`` uses Lawson's iteration, which also
    yields a certified lower bound but can converge slowly on kinked targets.
    """
    if method not in ("lp", "lawson"):
        raise ValueError(f"unknown method {method!r}")
    if not c > 0:
        raise ValueError("Gaussian rate c must be positive")
    design = _Design(grid, c, use_symmetry)
    f = design.f
    fits = []
    prev = None
    v = None
    for D in sorted(degrees):
        A, orbs = design.matrix(D)

        def fit(u, A=A):
            s = np.sqrt(u)
            coef, *_ = np.linalg.lstsq(A * s[:, None], f * s, rcond=None)
            return coef, A @ coef

        if method == "lp":
            coef, upper, lower = _minimax_lp(A, f)
            conv, it = True, 1
            if prev is not None:
                old = _embed(prev, orbs)
                old_err = float(np.max(np.abs(f - A @ old)))
                if old_err < upper:
                    coef, upper = old, old_err
            series = _series_from(orbs, coef, grid.dim, c)
            prev = (orbs, coef)
            approx = GaussApproximant(series, c, grid.dim)
            fits.append(GaussFit(approx, upper, D, conv, min(lower, upper),
                                 _outside_sup(approx, grid), iterations=it))
            continue
        cands = []
        if prev is not None:
            cands.append(_embed(prev, orbs))
            cands[-1] = (cands[-1], A @ cands[-1])
        coef, upper, lower, conv, it, v = lawson(
            fit, f, np.ones(len(f)), init_weights=v, candidates=cands, maxiter=maxiter, tol=tol
        )
        series = _series_from(orbs, coef, grid.dim, c)
        prev = (orbs, coef)
        approx = GaussApproximant(series, c, grid.dim)
        fits.append(GaussFit(approx, upper, D, conv, lower, _outside_sup(approx, grid),
                             iterations=it, weights=v))
    return fits


def _minimax_lp(A, f):
    """Exact discrete minimax ``min_c max_i |f_i - (A c)_i|`` via its LP form."""
    m, n = A.shape
    ones = np.ones((m, 1))
    A_ub = np.block([[-A, -ones], [A, -ones]])
    b_ub = np.concatenate([-f, f])
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"minimax LP failed: {res.message}")
    coef = res.x[:n]
    upper = float(np.max(np.abs(f - A @ coef)))
    # the dual objective certifies the optimum from below
    lower = float(res.ineqlin.marginals @ b_ub) if res.ineqlin is not None else res.fun
    return coef, upper, lower


def _embed(prev, orbs):
    old_orbs, old_coef = prev
    lookup = {tuple(o[0]): a for o, a in zip(old_orbs, old_coef)}
    return np.array([lookup.get(tuple(o[0]), 0.0) for o in orbs])


def _outside_sup(approx: GaussApproximant, grid: GaussGrid, nsamp: int = 2000) -> float:
    """Largest |approximant| sampled in a shell beyond the grid (tail report)."""
    rng = np.random.default_rng(12345)
    R = max(max(abs(o), abs(o + (n - 1) * grid.step)) for o, n in zip(grid.origin, grid.shape))
    dirs = rng.normal(size=(nsamp, grid.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = R * (1.0 + 2.0 * rng.random(nsamp))
    return float(np.max(np.abs(approx(dirs * radii[:, None]))))
