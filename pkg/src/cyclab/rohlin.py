"""Layer decomposition of a function on an atomic measure, and multiplicity.

For ``phi`` on atoms ``(z_i, w_i)`` the fibers ``phi^{-1}(v)`` are finite.
Sorting each fiber by descending weight and sending its k-th atom to layer k
gives measures ``mu_1, mu_2, ...`` on the value space with nested supports
whose sum is the pushforward.  The number of layers is the multiplicity
``mp``: the largest fiber.  Indicators of the layers, weighted by a cyclic
weight, form a cyclic set of size ``mp``; fewer generators cannot reach every
indicator of a largest fiber, which :func:`generator_insufficiency_test`
measures exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measure import MERGE_TOL, DiscreteMeasure, fibers, values_on
from .polyapprox import arnoldi_basis


@dataclass(frozen=True)
class FiberMap:
    """Value -> atoms ``[(index, weight), ...]``, values sorted by (re, im)."""

    values: tuple
    members: tuple

    def __len__(self):
        return len(self.values)

    def items(self):
        return zip(self.values, self.members)

    def sizes(self) -> list:
        return [len(m) for m in self.members]

    def mass(self, k: int) -> float:
        return math.fsum(w for _, w in self.members[k])


def fiber_map(mu: DiscreteMeasure, phi, tol: float = MERGE_TOL) -> FiberMap:
    """Group atoms by their (tolerance-merged) value of ``phi``."""
    vals = values_on(phi, mu)
    fs = fibers(vals, tol)
    return FiberMap(
        tuple(f.value for f in fs),
        tuple(tuple((i, float(mu.weights[i])) for i in f.indices) for f in fs),
    )


@dataclass
class RohlinLayers:
    """Layers ``mu_1, mu_2, ...`` over the value space.

    ``assignment[i]`` is the (1-based) layer of atom i.  ``continuous_part`` is
    always None: atomic inputs have no continuous component.
    """

    layers: list
    assignment: np.ndarray
    fibers: FiberMap
    continuous_part: Optional[object] = None

    @property
    def count(self) -> int:
        return len(self.layers)

    def atoms_of(self, n: int) -> np.ndarray:
        """Atom indices in layer n (1-based), in fiber order."""
        return np.flatnonzero(self.assignment == n)

    def total(self) -> dict:
        """Sum of the layers as ``{value: mass}``."""
        out: dict = {}
        for lay in self.layers:
            for v, w in zip(lay.points, lay.weights):
                out[complex(v)] = out.get(complex(v), 0.0) + float(w)
        return out


def rohlin_decompose(mu: DiscreteMeasure, phi, tol: float = MERGE_TOL) -> RohlinLayers:
    """Layer decomposition: the k-th heaviest atom of each fiber goes to layer k.

    Ties in weight are broken by atom index, so the result is deterministic.
    """
    fm = fiber_map(mu, phi, tol)
    assignment = np.zeros(len(mu), dtype=int)
    per_layer: list = []
    for value, members in fm.items():
        ranked = sorted(members, key=lambda iw: (-iw[1], iw[0]))
        for k, (i, w) in enumerate(ranked):
            if k == len(per_layer):
                per_layer.append(([], []))
            per_layer[k][0].append(value)
            per_layer[k][1].append(w)
            assignment[i] = k + 1
    layers = [DiscreteMeasure(np.array(v, dtype=complex), np.array(w)) for v, w in per_layer]
    return RohlinLayers(layers, assignment, fm)


@dataclass
class MultiplicityReport:
    """Local multiplicity per value, its maximum ``mp`` and the layer sizes."""

    local: dict
    mp: int
    layer_sizes: list = field(default_factory=list)

    def to_json(self, layers: Optional[RohlinLayers] = None) -> dict:
        out = {
            "local": [{"z": [v.real, v.imag], "m": m} for v, m in self.local.items()],
            "mp": self.mp,
            "layer_sizes": list(self.layer_sizes),
        }
        if layers is not None:
            out["layers"] = [
                {"atoms": [{"re": float(v.real), "im": float(v.imag), "w": float(w)}
                           for v, w in zip(lay.points, lay.weights)]}
                for lay in layers.layers
            ]
            out["assignment"] = layers.assignment.tolist()
        return out


def local_multiplicity(mu: DiscreteMeasure, phi, tol: float = MERGE_TOL) -> MultiplicityReport:
    """``m(v) = |phi^{-1}(v)|`` for each value; on atoms no null set is discarded."""
    fm = fiber_map(mu, phi, tol)
    local = {v: len(m) for v, m in fm.items()}
    mp = max(local.values(), default=0)
    sizes = [sum(1 for m in fm.members if len(m) > k) for k in range(mp)]
    return MultiplicityReport(local, mp, sizes)


# ---- cyclic sets -----------------------------------------------------------------


def build_cyclic_set(mu: DiscreteMeasure, phi, layers: Optional[RohlinLayers] = None,
                     weight=None) -> list:
    """One generator per layer: layer indicator times a cyclic weight.

    ``weight`` maps values of phi to positive numbers (default
    ``exp(-2|v|)``, the cyclic weight for finitely supported layers).
    """
    if layers is None:
        layers = rohlin_decompose(mu, phi)
    pv = values_on(phi, mu)
    if weight is None:
        wv = np.exp(-2 * np.abs(pv))
    else:
        wv = np.asarray(weight(pv), dtype=float)
    out = []
    for n in range(1, layers.count + 1):
        f = np.where(layers.assignment == n, wv, 0.0).astype(complex)
        out.append(mu.function(f))
    return out


def span_design(mu: DiscreteMeasure, phi, generators, degree: int) -> np.ndarray:
    """Columns ``Q_j(phi) f_k`` spanning ``{sum_k P_k(phi) f_k : deg P_k <= degree}``."""
    pv = values_on(phi, mu)
    F = np.array([values_on(f, mu) for f in generators], dtype=complex)
    bw = mu.weights * np.sum(np.abs(F) ** 2, axis=0)
    live = bw > 0
    Q = np.zeros((len(mu), 0), dtype=complex)
    if np.any(live):
        basis = arnoldi_basis(pv[live], bw[live], degree)
        Q = np.zeros((len(mu), basis.rank), dtype=complex)
        Q[live] = basis.values
    return np.concatenate([Q * f[:, None] for f in F], axis=1) if len(F) else Q


def indicator_residuals(mu: DiscreteMeasure, phi, generators, degree: int) -> np.ndarray:
    """L^2 residual of every atom indicator against the generated span.

    Computed in one orthogonal projection; entry i is
    ``min |e_i - sum_k P_k(phi) f_k|_2`` over ``deg P_k <= degree``.
    """
    A = span_design(mu, phi, generators, degree)
    s = np.sqrt(mu.weights)
    B = A * s[:, None]
    return s * _complement_norms(B)


def _complement_norms(B: np.ndarray) -> np.ndarray:
    """Row norms of an orthonormal basis of the orthogonal complement of range(B).

    Row i is the distance of the i-th unit vector from range(B); taking it
    from the complement avoids the cancellation in ``1 - |projection|^2``.
    """
    n = B.shape[0]
    if B.shape[1] == 0:
        return np.ones(n)
    U, sv, _ = np.linalg.svd(B, full_matrices=True)
    r = int(np.sum(sv > sv[0] * 1e-12)) if sv.size and sv[0] > 0 else 0
    return np.sqrt(np.sum(np.abs(U[:, r:]) ** 2, axis=1))


@dataclass
class CyclicSetCheck:
    degree: int
    max_relative_residual: float
    per_layer: dict


def verify_cyclic_set(mu: DiscreteMeasure, phi, generators, layers: RohlinLayers,
                      degree: Optional[int] = None) -> CyclicSetCheck:
    """Residuals of all atom indicators against the span of the generators.

    The default degree is (largest layer size - 1), where interpolation within
    each layer becomes exact.
    """
    if degree is None:
        degree = max(len(lay) for lay in layers.layers) - 1 if layers.count else 0
    res = indicator_residuals(mu, phi, generators, degree)
    rel = res / np.sqrt(mu.weights)
    per_layer = {n: float(np.max(rel[layers.assignment == n], initial=0.0))
                 for n in range(1, layers.count + 1)}
    return CyclicSetCheck(degree, float(np.max(rel, initial=0.0)), per_layer)


# ---- insufficiency of fewer generators ----------------------------------------


def fiber_residuals(weights, vectors) -> np.ndarray:
    """Distance of each coordinate indicator from ``span(vectors)`` in L^2(weights).

    ``vectors`` has shape ``(d, m)``: the candidate generators restricted to
    one fiber of m atoms.
    """
    w = np.asarray(weights, dtype=float)
    V = np.atleast_2d(np.asarray(vectors, dtype=complex))
    if V.shape[0] == 1:
        # one vector: r_i^2 = w_i S_{-i} / S with S_{-i} = sum over j != i of
        # w_j |v_j|^2, formed from prefix and suffix sums so nothing cancels
        a = w * np.abs(V[0]) ** 2
        total = float(np.sum(a))
        if total == 0:
            return np.sqrt(w)
        before = np.concatenate([[0.0], np.cumsum(a)[:-1]])
        after = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
        return np.sqrt(w * (before + after) / total)
    s = np.sqrt(w)
    B = (V * s[None, :]).T
    return s * _complement_norms(B)


@dataclass
class InsufficiencyReport:
    """Exact lower estimate of the best residual with ``d < mp`` generators.

    ``estimate`` is the smallest, over trials, of the largest residual of an
    indicator on a largest fiber; ``bound`` is the guaranteed
    ``sqrt(min w (m - d) / m)`` for that fiber.
    """

    d: int
    mp: int
    estimate: float
    bound: float
    fiber_value: complex
    fiber_size: int
    per_trial: list
    reason: str


def generator_insufficiency_test(
    mu: DiscreteMeasure,
    phi,
    d: int,
    trials: int = 20,
    seed: int = 0,
    candidates: Optional[Sequence] = None,
) -> InsufficiencyReport:
    """How far ``d`` generators stay from a cyclic set, computed exactly.

    Polynomials in phi are constant on each fiber, so on a fiber of size
    ``m > d`` the generated functions span at most ``d`` dimensions whatever
    the degree.  The best residual for each fiber indicator is therefore an
    orthogonal projection inside the fiber.  Candidate sets are random
    complex vectors (``trials`` of them) or the supplied ``candidates`` (a
    list of generator lists).
    """
    rep = local_multiplicity(mu, phi)
    if d >= rep.mp:
        raise ValueError(f"d = {d} is not below the multiplicity {rep.mp}")
    if d < 0:
        raise ValueError("d must be nonnegative")
    fm = fiber_map(mu, phi)
    sizes = fm.sizes()
    big = [k for k, s in enumerate(sizes) if s == rep.mp]
    if candidates is None:
        rng = np.random.default_rng(seed)
        candidates = [
            [rng.normal(size=len(mu)) + 1j * rng.normal(size=len(mu)) for _ in range(d)]
            for _ in range(trials)
        ]
    per_trial = []
    best_k = big[0]
    for cand in candidates:
        F = np.array([values_on(f, mu) for f in cand], dtype=complex).reshape(len(cand), len(mu))
        worst, worst_k = -1.0, big[0]
        for k in big:
            idx = [i for i, _ in fm.members[k]]
            r = fiber_residuals(mu.weights[idx], F[:, idx])
            if r.max() > worst:
                worst, worst_k = float(r.max()), k
        per_trial.append(worst)
        if worst == min(per_trial):
            best_k = worst_k
    idx = [i for i, _ in fm.members[best_k]]
    m = sizes[best_k]
    bound = math.sqrt(float(np.min(mu.weights[idx])) * (m - d) / m)
    reason = (f"fiber at {fm.values[best_k]} has {m} atoms but polynomials in phi "
              f"act on it as scalars, so {d} generator(s) span at most {d} of its {m} dimensions")
    return InsufficiencyReport(d, rep.mp, min(per_trial) if per_trial else bound, bound,
                               fm.values[best_k], m, per_trial, reason)
