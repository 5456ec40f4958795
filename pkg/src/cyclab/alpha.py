"""Nested grid cell sets with connected complement and small removed mass.

A planar measure is discretized on a rectangular grid.  The cells carrying
mass are cut by vertical slit columns so that no large square survives inside
the retained set, and enclosed holes are opened by cheapest channels so the
complement stays connected.  Higher levels use sparser slits, so the retained
sets grow: ``F_1 ⊆ F_2 ⊆ ... ⊆ F_N``.

Cells are indexed ``iy * nx + ix``; ``ix`` runs along the real axis.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DecompositionError
from .measure import DiscreteMeasure
from .polyapprox import LAWSON_MAXITER, Polynomial, best_approx_sup


@dataclass(frozen=True)
class GridSpec:
    """``nx`` by ``ny`` square cells of side ``step``; ``origin`` is the lower-left corner."""

    origin: complex
    step: float
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "origin", complex(self.origin))
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @classmethod
    def covering(cls, points, step: float, pad: int = 1) -> "GridSpec":
        """Smallest grid of the given step containing the points, plus ``pad`` cells."""
        z = np.asarray(points, dtype=complex)
        x0 = math.floor(z.real.min() / step) * step - pad * step
        y0 = math.floor(z.imag.min() / step) * step - pad * step
        nx = int(math.floor((z.real.max() - x0) / step)) + 1 + pad
        ny = int(math.floor((z.imag.max() - y0) / step)) + 1 + pad
        return cls(complex(x0, y0), step, nx, ny)

    def contains(self, points) -> np.ndarray:
        z = np.asarray(points, dtype=complex) - self.origin
        return ((z.real >= 0) & (z.real <= self.nx * self.step)
                & (z.imag >= 0) & (z.imag <= self.ny * self.step))

    def cell_of(self, points) -> np.ndarray:
        """Flat cell index of each point; points on the far edge go to the last cell."""
        z = np.asarray(points, dtype=complex) - self.origin
        if not np.all(self.contains(points)):
            raise ValueError("some atoms lie outside the grid rectangle")
        ix = np.minimum(np.floor(z.real / self.step).astype(int), self.nx - 1)
        iy = np.minimum(np.floor(z.imag / self.step).astype(int), self.ny - 1)
        return iy * self.nx + ix

    def center(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=int)
        iy, ix = np.divmod(cells, self.nx)
        return self.origin + self.step * ((ix + 0.5) + 1j * (iy + 0.5))

    def neighbours(self, cell: int):
        iy, ix = divmod(cell, self.nx)
        if ix > 0:
            yield cell - 1
        if ix < self.nx - 1:
            yield cell + 1
        if iy > 0:
            yield cell - self.nx
        if iy < self.ny - 1:
            yield cell + self.nx

    def on_border(self, cell: int) -> bool:
        iy, ix = divmod(cell, self.nx)
        return ix == 0 or iy == 0 or ix == self.nx - 1 or iy == self.ny - 1


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


@dataclass
class ConnectivityCertificate:
    """Component labels of the complement; the outside node has index ``grid.size``."""

    connected: bool
    n_components: int
    labels: dict

    def __bool__(self):
        return self.connected


def complement_connected(grid: GridSpec, cells) -> ConnectivityCertificate:
    """4-connectivity of (grid minus ``cells``) together with the unbounded outside."""
    inside = np.zeros(grid.size, dtype=bool)
    inside[np.asarray(list(cells), dtype=int)] = True
    outside = grid.size
    uf = UnionFind(grid.size + 1)
    for c in np.flatnonzero(~inside):
        c = int(c)
        if grid.on_border(c):
            uf.union(c, outside)
        iy, ix = divmod(c, grid.nx)
        if ix + 1 < grid.nx and not inside[c + 1]:
            uf.union(c, c + 1)
        if iy + 1 < grid.ny and not inside[c + grid.nx]:
            uf.union(c, c + grid.nx)
    labels = {int(c): uf.find(int(c)) for c in np.flatnonzero(~inside)}
    labels[outside] = uf.find(outside)
    n = len(set(labels.values()))
    return ConnectivityCertificate(n == 1, n, labels)


def largest_full_square(grid: GridSpec, cells) -> int:
    """Side (in cells) of the largest axis-aligned square fully inside ``cells``."""
    mask = np.zeros(grid.size, dtype=bool)
    mask[np.asarray(list(cells), dtype=int)] = True
    mask = mask.reshape(grid.ny, grid.nx)
    prev = np.zeros(grid.nx + 1, dtype=int)
    best = 0
    for row in mask:
        cur = np.zeros(grid.nx + 1, dtype=int)
        for ix in range(grid.nx):
            if row[ix]:
                cur[ix + 1] = 1 + min(prev[ix], prev[ix + 1], cur[ix])
        best = max(best, int(cur.max()))
        prev = cur
    return best


@dataclass
class AlphaDecomposition:
    """Nested retained cell sets ``levels[0] ⊆ levels[1] ⊆ ...``.

    ``slits[n]`` and ``channels[n]`` are the carrying cells removed at level
    ``n + 1``; ``pitch[n]`` is the slit spacing in cells; ``exempt`` lists
    cells too heavy to cut.  ``coverage[n]`` is the retained mass fraction
    and ``budget_ok[n]`` tells whether the removed mass met ``eps 2^{-n-1}``.
    """

    grid: GridSpec
    eps: float
    levels: list
    slits: list
    channels: list
    coverage: list
    pitch: list
    exempt: frozenset = frozenset()
    pitch_exponent: int = -1
    carrying: frozenset = frozenset()
    removed_mass: list = field(default_factory=list)
    budget_ok: list = field(default_factory=list)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> frozenset:
        """Retained cells at 1-based level ``n``."""
        if not 1 <= n <= self.n_levels:
            raise ValueError(f"level must be in 1..{self.n_levels}")
        return self.levels[n - 1]

    def first_level(self, mu: DiscreteMeasure) -> np.ndarray:
        """First level (1-based) whose cells cover each atom; 0 for never covered."""
        cells = self.grid.cell_of(mu.points)
        out = np.zeros(len(mu), dtype=int)
        for n in range(self.n_levels, 0, -1):
            member = np.isin(cells, np.fromiter(self.levels[n - 1], dtype=int))
            out[member] = n
        return out

    def uncovered_mass(self, mu: DiscreteMeasure) -> float:
        return float(np.sum(mu.weights[self.first_level(mu) == 0]))


def _cell_masses(mu: DiscreteMeasure, grid: GridSpec):
    cells = grid.cell_of(mu.points)
    mass = np.zeros(grid.size)
    np.add.at(mass, cells, mu.weights)
    return mass


def _cuttable(carry2d: np.ndarray) -> np.ndarray:
    """Cells lying in some fully carrying 2x2 block."""
    block = carry2d[:-1, :-1] & carry2d[1:, :-1] & carry2d[:-1, 1:] & carry2d[1:, 1:]
    out = np.zeros_like(carry2d)
    out[:-1, :-1] |= block
    out[1:, :-1] |= block
    out[:-1, 1:] |= block
    out[1:, 1:] |= block
    return out


def _slit_columns(col_mass, nx, J, n_levels):
    """Chosen slit columns per level for pitch exponent ``J`` (nested, coarse ⊆ fine)."""
    chosen = []
    prev = None
    for n in range(1, n_levels + 1):
        k = 2 ** (J - n + 1) if J - n + 1 >= 0 else 0
        if k == 0:
            chosen.append([])
            prev = []
            continue
        if prev is None:
            cols = []
            for i in range(k):
                lo, hi = (i * nx) // k, ((i + 1) * nx) // k
                if hi > lo:
                    cols.append(lo + int(np.argmin(col_mass[lo:hi])))
        else:
            cols = []
            for i in range(k):
                lo, hi = (i * nx) // k, ((i + 1) * nx) // k
                inside = [c for c in prev if lo <= c < hi]
                if inside:
                    cols.append(min(inside, key=lambda c: (col_mass[c], c)))
        chosen.append(sorted(cols))
        prev = cols
    return chosen


def _open_holes(grid: GridSpec, retained: set, mass: np.ndarray, blocked: set) -> set:
    """Cheapest retained cells to remove so the complement becomes connected.

    Each enclosed complement component is joined to the outer one along a
    minimum-mass path (Dijkstra; crossing a retained cell costs its mass,
    exempt cells cannot be crossed).
    """
    added: set = set()
    out_node = grid.size
    tiny = 1e-15 * max(float(mass.max()), 1.0)
    while True:
        cert = complement_connected(grid, retained - added)
        if cert.connected:
            return added
        outer = cert.labels[out_node]
        root = next(lab for c, lab in cert.labels.items() if lab != outer)
        sources = [c for c, lab in cert.labels.items() if lab == root]
        dist = {c: 0.0 for c in sources}
        back: dict = {}
        heap = [(0.0, c) for c in sources]
        heapq.heapify(heap)
        reached = None
        while heap:
            d, c = heapq.heappop(heap)
            if d > dist[c]:
                continue
            if c == out_node or cert.labels.get(c) == outer:
                reached = c
                break
            nbs = list(grid.neighbours(c))
            if grid.on_border(c):
                nbs.append(out_node)
            for nb in nbs:
                if nb in blocked:
                    continue
                live = nb != out_node and nb in retained and nb not in added
                nd = d + (mass[nb] + tiny if live else 0.0)
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    back[nb] = c
                    heapq.heappush(heap, (nd, nb))
        if reached is None:
            raise DecompositionError("cannot open an enclosed hole without cutting exempt cells")
        c = reached
        while c in back:
            if c != out_node and c in retained:
                added.add(c)
            c = back[c]


def slit_decomposition(
    mu: DiscreteMeasure,
    grid: GridSpec,
    eps: float,
    n_levels: int,
    pitch_exponent: Optional[int] = None,
) -> AlphaDecomposition:
    """Build nested retained sets with removed mass ``<= eps 2^{-n}`` at level n.

    Level ``n`` cuts ``2^{J-n+1}`` vertical slit columns (one per window, the
    window's lightest column), keeping only the cuts inside fully carrying
    2x2 blocks, then opens enclosed holes by minimum-mass channels.  ``J`` is
    the finest pitch exponent meeting every level's budget unless given.
    Cells heavier than the level-1 budget are exempt from cutting.  When hole
    channels make every pitch overspend some budget, the least overspent one
    is kept and the missed levels are marked in ``budget_ok``; coverage below
    ``1 - eps`` at any level raises :class:`DecompositionError`.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if n_levels < 1:
        raise ValueError("need at least one level")
    mass = _cell_masses(mu, grid)
    total = float(mass.sum())
    carry = mass > 0
    budgets = [eps * 2.0 ** (-n) * total for n in range(1, n_levels + 1)]
    exempt = carry & (mass > budgets[0])
    cut2d = _cuttable(carry.reshape(grid.ny, grid.nx)) & ~exempt.reshape(grid.ny, grid.nx)
    col_mass = (mass.reshape(grid.ny, grid.nx) * cut2d).sum(axis=0)
    carrying = set(int(c) for c in np.flatnonzero(carry))
    blocked = set(int(c) for c in np.flatnonzero(exempt))

    jmax = max(int(math.floor(math.log2(grid.nx))) - 1, -1)
    if pitch_exponent is not None:
        trials = [int(pitch_exponent)]
    else:
        trials = list(range(jmax, -2, -1))

    last_err = None
    fallback = None
    for J in trials:
        cols = _slit_columns(col_mass, grid.nx, J, n_levels)
        slits = []
        for c in cols:
            cells = set()
            for col in c:
                rows = np.flatnonzero(cut2d[:, col])
                cells.update(int(r * grid.nx + col) for r in rows)
            slits.append(cells)
        channels: list = [set() for _ in range(n_levels)]
        try:
            for n in range(n_levels, 0, -1):
                retained = carrying - slits[n - 1] - channels[n - 1]
                opened = _open_holes(grid, retained, mass, blocked)
                for m in range(1, n + 1):
                    channels[m - 1] |= opened
        except DecompositionError as exc:
            last_err = exc
            continue
        removed = [float(sum(mass[c] for c in slits[i] | channels[i])) for i in range(n_levels)]
        budget_ok = [r <= b * (1 + 1e-12) for r, b in zip(removed, budgets)]
        candidate = (J, slits, channels, removed, budget_ok)
        if all(budget_ok) or pitch_exponent is not None:
            return _assemble(mu, grid, eps, total, exempt, carrying, candidate)
        # channels that open enclosed holes cost the same at every level and can
        # exceed the deeper budgets; keep the least over-spent pitch as a fallback
        worst = max(r / b for r, b in zip(removed, budgets))
        if fallback is None or worst < fallback[0]:
            fallback = (worst, candidate)
    if fallback is not None:
        return _assemble(mu, grid, eps, total, exempt, carrying, fallback[1])
    raise DecompositionError(
        f"no slit pitch fits the mass budget eps={eps}" + (f" ({last_err})" if last_err else "")
    )


def _assemble(mu, grid, eps, total, exempt, carrying, candidate) -> AlphaDecomposition:
    J, slits, channels, removed, budget_ok = candidate
    n_levels = len(slits)
    levels = [frozenset(carrying - slits[i] - channels[i]) for i in range(n_levels)]
    coverage = [1.0 - r / total for r in removed]
    if min(coverage) < 1 - eps - 1e-12:
        raise DecompositionError(f"coverage {min(coverage)} below 1 - eps")
    return AlphaDecomposition(
        grid=grid, eps=eps, levels=levels,
        slits=[frozenset(s) for s in slits],
        channels=[frozenset(c) for c in channels],
        coverage=coverage,
        pitch=[grid.nx * 2.0 ** (n - 1 - J) for n in range(1, n_levels + 1)],
        exempt=frozenset(int(c) for c in np.flatnonzero(exempt)),
        pitch_exponent=J, carrying=frozenset(carrying), removed_mass=removed,
        budget_ok=budget_ok,
    )


def check_complement_connected(decomp: AlphaDecomposition, level: int) -> ConnectivityCertificate:
    """Union-find certificate for the complement of the level's cell set (1-based)."""
    return complement_connected(decomp.grid, decomp.level(level))


def empty_interior_ok(decomp: AlphaDecomposition, level: int) -> bool:
    """Largest full square in ``F_level`` is at most twice the slit pitch."""
    return largest_full_square(decomp.grid, decomp.level(level)) <= 2 * decomp.pitch[level - 1]


# ---- conjugate approximation ---------------------------------------------------


@dataclass
class ConjugateApprox:
    poly: Polynomial
    sup_err: float
    degree: int
    met: bool
    delta: float
    target: float
    lower_bound: float
    history: list = field(default_factory=list)

    def __iter__(self):
        yield self.poly
        yield self.sup_err


def _degree_schedule(cap: int) -> list:
    out, d = [], 1
    while d < cap:
        out.append(d)
        d *= 2
    out.append(cap)
    return out


def approx_conjugate_on(
    decomp: AlphaDecomposition,
    mu: DiscreteMeasure,
    level: int,
    degree_cap: int = 30,
    *,
    stop_when_met: bool = True,
    maxiter: int = LAWSON_MAXITER,
) -> ConjugateApprox:
    """Uniform approximation of ``conj(z)`` on the atoms retained at ``level``.

    The accuracy target is ``exp(-delta)`` with ``delta = level * max |z|``
    over those atoms.  Degrees 1, 2, 4, ... up to ``degree_cap`` are tried;
    with ``stop_when_met`` the first degree reaching the target is kept, and
    each Lawson run also stops as soon as its certified lower bound shows the
    target is out of reach at that degree.  ``met`` is False when the cap is
    reached first.
    """
    cells = decomp.grid.cell_of(mu.points)
    keep = np.isin(cells, np.fromiter(decomp.level(level), dtype=int))
    return conjugate_on_points(mu.points[keep], level, degree_cap,
                               stop_when_met=stop_when_met, maxiter=maxiter)


def conjugate_on_points(z, level: int, degree_cap: int = 30, *, stop_when_met: bool = True,
                        maxiter: int = LAWSON_MAXITER) -> ConjugateApprox:
    z = np.asarray(z, dtype=complex)
    if len(z) == 0:
        return ConjugateApprox(Polynomial.zero(), 0.0, 0, True, 0.0, 1.0, 0.0)
    delta = level * float(np.max(np.abs(z)))
    target = math.exp(-delta)
    best = None
    history = []
    fit = None
    for deg in _degree_schedule(degree_cap):
        fit = best_approx_sup(np.conj(z), z, deg, start=fit.poly if fit else None,
                              maxiter=maxiter, stop_below=target if stop_when_met else None,
                              stop_above=target if stop_when_met else None)
        history.append((deg, fit.residual))
        if best is None or fit.residual <= best.residual:
            best = fit
        if stop_when_met and fit.residual < target:
            break
    return ConjugateApprox(best.poly, best.residual, best.degree, best.residual < target,
                           delta, target, best.lower_bound, history)


# ---- serialization ---------------------------------------------------------------


def decomposition_to_json(d: AlphaDecomposition) -> dict:
    return {
        "grid": {"origin": [d.grid.origin.real, d.grid.origin.imag], "step": d.grid.step,
                 "nx": d.grid.nx, "ny": d.grid.ny},
        "eps": d.eps,
        "pitch_exponent": d.pitch_exponent,
        "levels": [sorted(s) for s in d.levels],
        "slits": [sorted(s) for s in d.slits],
        "channels": [sorted(s) for s in d.channels],
        "exempt": sorted(d.exempt),
        "carrying": sorted(d.carrying),
        "coverage": list(d.coverage),
        "pitch": list(d.pitch),
        "removed_mass": list(d.removed_mass),
        "budget_ok": list(d.budget_ok),
    }


def decomposition_from_json(data: dict) -> AlphaDecomposition:
    g = data["grid"]
    grid = GridSpec(complex(*g["origin"]), float(g["step"]), int(g["nx"]), int(g["ny"]))
    return AlphaDecomposition(
        grid=grid, eps=float(data["eps"]),
        levels=[frozenset(s) for s in data["levels"]],
        slits=[frozenset(s) for s in data["slits"]],
        channels=[frozenset(s) for s in data.get("channels", [[] for _ in data["levels"]])],
        coverage=list(data["coverage"]), pitch=list(data["pitch"]),
        exempt=frozenset(data.get("exempt", [])),
        pitch_exponent=int(data.get("pitch_exponent", -1)),
        carrying=frozenset(data.get("carrying", [])),
        removed_mass=list(data.get("removed_mass", [])),
        budget_ok=[bool(b) for b in data.get("budget_ok", [])],
    )


def save_decomposition(d: AlphaDecomposition, path) -> None:
    with open(path, "w") as fh:
        json.dump(decomposition_to_json(d), fh)


def load_decomposition(path) -> AlphaDecomposition:
    with open(path) as fh:
        return decomposition_from_json(json.load(fh))
