"""Discrete measures in the plane, sampled functions and L^p distances.

A finite Borel measure is represented by its atoms: distinct complex points
with positive weights.  Functions on the support are represented by their
values at the atoms, in atom order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import BindingError, DomainError, ZeroWeightError

SUP = "sup"

#: absolute tolerance used when merging equal function values
MERGE_TOL = 1e-12


def check_norm(p):
    """Return a validated norm exponent: a positive float or ``SUP``."""
    if isinstance(p, str):
        if p.lower() in ("sup", "inf", "max"):
            return SUP
        p = float(p)
    p = float(p)
    if np.isinf(p):
        return SUP
    if not p > 0:
        raise ValueError(f"norm exponent must be positive, got {p}")
    return p


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite sum of weighted point masses ``sum_i w_i delta_{z_i}``.

    Use :meth:`from_atoms` to build one from raw data; it merges duplicate
    points by summing their weights.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape != w.shape:
            raise ValueError("points and weights must have the same length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("atom coordinates must be finite")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("atom weights must be finite and positive")
        uniq, first, inverse = np.unique(pts, return_index=True, return_inverse=True)
        if len(uniq) < len(pts):
            summed = np.zeros(len(uniq))
            np.add.at(summed, inverse.ravel(), w)
            # keep first-occurrence order of the atoms
            order = np.argsort(first, kind="stable")
            pts, w = uniq[order], summed[order]
        else:
            pts, w = pts.copy(), w.copy()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, points, weights=None) -> "DiscreteMeasure":
        """Build a measure; repeated points are merged by summing weights."""
        pts = np.asarray(points, dtype=complex).ravel()
        if weights is None:
            w = np.ones(pts.shape)
        else:
            w = np.broadcast_to(np.asarray(weights, dtype=float), pts.shape)
        return cls(pts, w)

    def __len__(self):
        return len(self.points)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def support_id(self) -> str:
        """Identifier of the atom set; weights do not enter it."""
        return hashlib.sha1(self.points.tobytes()).hexdigest()[:16]

    def normalized(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, self.weights / self.total_mass)

    def with_weights(self, weights) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, weights)

    def restrict(self, mask) -> "DiscreteMeasure":
        mask = np.asarray(mask)
        return DiscreteMeasure(self.points[mask], self.weights[mask])

    def function(self, values) -> "SampledFunction":
        """Bind per-atom values to this measure."""
        return SampledFunction(values, self.support_id, len(self))

    def indicator(self, index: int) -> "SampledFunction":
        v = np.zeros(len(self), dtype=complex)
        v[index] = 1.0
        return self.function(v)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Complex values of a function at the atoms of a bound measure."""

    values: np.ndarray
    measure_id: str
    size: int = -1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if self.size >= 0 and len(v) != self.size:
            raise BindingError(f"{len(v)} values for a measure with {self.size} atoms")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "size", len(v))

    def __len__(self):
        return len(self.values)

    def _combine(self, other, op):
        if isinstance(other, SampledFunction):
            if other.measure_id != self.measure_id:
                raise BindingError("functions are bound to different measures")
            other = other.values
        return SampledFunction(op(self.values, other), self.measure_id)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def map(self, fn) -> "SampledFunction":
        return SampledFunction(fn(self.values), self.measure_id)


FunctionLike = Union[SampledFunction, Sequence[complex], np.ndarray]


def values_on(f: FunctionLike, mu: DiscreteMeasure) -> np.ndarray:
    """Per-atom values of ``f`` after checking it is bound to ``mu``.

    Plain arrays are accepted when their length matches the atom count.
    """
    if isinstance(f, SampledFunction):
        if f.measure_id != mu.support_id:
            raise BindingError("function is bound to a different measure")
        return f.values
    v = np.asarray(f, dtype=complex).ravel()
    if len(v) != len(mu):
        raise BindingError(f"{len(v)} values for a measure with {len(mu)} atoms")
    return v


def lp_distance(f: FunctionLike, g: FunctionLike, mu: DiscreteMeasure, p=2.0) -> float:
    """Distance between ``f`` and ``g`` in L^p(mu).

    For ``p >= 1`` this is the usual norm of the difference.  For ``0 < p < 1``
    the outer root is dropped, giving the metric ``sum w |f - g|^p``.  With
    ``p = SUP`` the maximum modulus over the atoms is returned.
    """
    p = check_norm(p)
    diff = np.abs(values_on(f, mu) - values_on(g, mu))
    return _lp_of_abs(diff, mu.weights, p)


def _lp_of_abs(absdiff, weights, p) -> float:
    if p == SUP:
        return float(np.max(absdiff)) if len(absdiff) else 0.0
    s = float(np.sum(weights * absdiff**p))
    return s ** (1.0 / p) if p >= 1 else s


def reweight_measure(mu: DiscreteMeasure, h: FunctionLike, p=2.0) -> DiscreteMeasure:
    """The measure ``|h|^p mu`` on the same atoms.

    Approximating ``f`` by ``g*h`` in L^p(mu) is isometric to approximating
    ``f/h`` by ``g`` in L^p(|h|^p mu).
    """
    p = check_norm(p)
    if p == SUP:
        raise ValueError("reweighting needs a finite exponent")
    a = np.abs(values_on(h, mu))
    if np.any(a == 0):
        raise ZeroWeightError(f"h vanishes at atoms {np.flatnonzero(a == 0).tolist()}")
    return DiscreteMeasure(mu.points, mu.weights * a**p)


def bounded_transform(z):
    """``k(z) = z / (1 + |z|)``, a homeomorphism of the plane onto the unit disc."""
    z = np.asarray(z, dtype=complex)
    out = z / (1.0 + np.abs(z))
    return out.item() if out.ndim == 0 else out


def inverse_transform(w):
    """Inverse of :func:`bounded_transform`; requires ``|w| < 1``."""
    w = np.asarray(w, dtype=complex)
    r = np.abs(w)
    if np.any(r >= 1):
        raise DomainError("inverse_transform needs |w| < 1")
    out = w / (1.0 - r)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class Fiber:
    value: complex
    indices: tuple


def fibers(values, tol: float = MERGE_TOL) -> list:
    """Group atom indices by (tolerance-equal) value.

    Values within ``tol`` of a cluster's representative join that cluster; the
    representative is the lexicographically smallest member.  Output is sorted
    by representative (real part, then imaginary part).
    """
    v = np.asarray(values, dtype=complex).ravel()
    if tol <= 0:
        uniq, inverse = np.unique(v, return_inverse=True)
        groups = [[] for _ in uniq]
        for i, j in enumerate(inverse.ravel()):
            groups[j].append(i)
        return [Fiber(complex(u), tuple(g)) for u, g in zip(uniq, groups)]

    order = np.lexsort((v.imag, v.real))
    reps: list = []
    members: list = []
    active: list = []  # cluster ids whose representative may still be within tol
    for i in order:
        x = v[i]
        active = [c for c in active if reps[c].real >= x.real - tol]
        for c in active:
            if abs(x - reps[c]) <= tol:
                members[c].append(int(i))
                break
        else:
            reps.append(x)
            members.append([int(i)])
            active.append(len(reps) - 1)
    out = [Fiber(complex(r), tuple(sorted(m))) for r, m in zip(reps, members)]
    out.sort(key=lambda f: (f.value.real, f.value.imag))
    return out


def pushforward(mu: DiscreteMeasure, phi: FunctionLike, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Image measure ``phi(mu)``: the weight of a value is the mass of its fiber."""
    vals = values_on(phi, mu)
    fs = fibers(vals, tol)
    pts = np.array([f.value for f in fs], dtype=complex)
    w = np.array([math.fsum(mu.weights[list(f.indices)].tolist()) for f in fs])
    return DiscreteMeasure(pts, w)


# ---- file formats -------------------------------------------------------


def measure_to_json(mu: DiscreteMeasure) -> dict:
    return {
        "atoms": [
            {"re": float(z.real), "im": float(z.imag), "w": float(w)}
            for z, w in zip(mu.points, mu.weights)
        ]
    }


def measure_from_json(data: dict) -> DiscreteMeasure:
    try:
        atoms = data["atoms"]
        pts = [complex(a["re"], a.get("im", 0.0)) for a in atoms]
        w = [float(a["w"]) for a in atoms]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed measure file: {exc}") from exc
    if not pts:
        raise ValueError("measure file has no atoms")
    return DiscreteMeasure.from_atoms(pts, w)


def function_to_json(values) -> dict:
    v = np.asarray(getattr(values, "values", values), dtype=complex)
    return {"values": [{"re": float(x.real), "im": float(x.imag)} for x in v]}


def function_from_json(data: dict, mu: DiscreteMeasure | None = None):
    try:
        vals = np.array([complex(d["re"], d.get("im", 0.0)) for d in data["values"]])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed function file: {exc}") from exc
    if mu is None:
        return vals
    return mu.function(vals)


def load_measure(path) -> DiscreteMeasure:
    with open(path) as fh:
        return measure_from_json(json.load(fh))


def save_measure(mu: DiscreteMeasure, path) -> None:
    with open(path, "w") as fh:
        json.dump(measure_to_json(mu), fh)


def load_function(path, mu: DiscreteMeasure | None = None):
    with open(path) as fh:
        return function_from_json(json.load(fh), mu)


def save_function(values, path) -> None:
    with open(path, "w") as fh:
        json.dump(function_to_json(values), fh)
