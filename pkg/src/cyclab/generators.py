"""Reference measures: disc, circle, real segment, logarithmic spiral, random atoms.

Planar regions use the midpoint rule (cell centers with cell-area weights);
curves use nodes with arc-length weights.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .measure import DiscreteMeasure


def _positive(name, value):
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number, got {value!r}") from exc
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return v


def _count(name, value, minimum=1):
    try:
        f = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from exc
    if not f.is_integer():
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if f < minimum:
        raise ConfigError(f"{name} must be at least {minimum}, got {value!r}")
    return int(f)


def _finish(points, weights, normalized):
    mu = DiscreteMeasure.from_atoms(points, weights)
    return mu.normalized() if normalized else mu


def disc(step: float = 1 / 64, radius: float = 1.0, center: complex = 0j,
         normalized: bool = False) -> DiscreteMeasure:
    """Midpoint quadrature of area measure on a disc.

    Cells of side ``step`` form a grid aligned with the disc's bounding
    square; every cell whose center lies inside the disc becomes an atom of
    weight ``step^2``.
    """
    step = _positive("step", step)
    radius = _positive("radius", radius)
    n = int(math.ceil(2 * radius / step))
    ax = -radius + step * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(ax, ax)
    z = (X + 1j * Y).ravel()
    z = z[np.abs(z) < radius]
    if z.size == 0:
        raise ConfigError("step too coarse: no cell center inside the disc")
    return _finish(z + complex(center), step * step, normalized)


def circle(n: int = 512, radius: float = 1.0, normalized: bool = True) -> DiscreteMeasure:
    """Equally spaced nodes on a circle; weights ``1/n`` or arc length ``2 pi r / n``."""
    n = _count("n", n)
    radius = _positive("radius", radius)
    z = radius * np.exp(2j * np.pi * np.arange(n) / n)
    # exact values at the four axis points keep symmetric examples exact
    z = np.where(np.abs(z.real) < 1e-15 * radius, 1j * z.imag, z)
    z = np.where(np.abs(z.imag) < 1e-15 * radius, z.real + 0j, z)
    return _finish(z, 2 * np.pi * radius / n, normalized)


def segment(a: float = 0.0, b: float = 1.0, n: int = 65, rule: str = "equal",
            normalized: bool = False) -> DiscreteMeasure:
    """``n`` uniform nodes on the real segment ``[a, b]``.

    ``rule="equal"`` gives every node weight ``(b - a) / n``;
    ``rule="trapezoid"`` uses trapezoid weights (halved at the ends).
    """
    a, b = float(a), float(b)
    if not b > a:
        raise ConfigError("segment needs a < b")
    n = _count("n", n)
    x = np.linspace(a, b, n)
    if rule == "equal":
        w = np.full(n, (b - a) / n)
    elif rule == "trapezoid":
        if n < 2:
            raise ConfigError("trapezoid rule needs at least 2 nodes")
        w = np.full(n, (b - a) / (n - 1))
        w[[0, -1]] /= 2
    else:
        raise ConfigError(f"unknown quadrature rule {rule!r}")
    return _finish(x.astype(complex), w, normalized)


def spiral(t0: float = -4.0, t1: float = 1.0, n: int = 400,
           normalized: bool = False) -> DiscreteMeasure:
    """Nodes on ``exp((1 + i) t)``, ``t0 <= t <= t1``, with trapezoid arc-length weights."""
    t0, t1 = float(t0), float(t1)
    if not t1 > t0:
        raise ConfigError("spiral needs t0 < t1")
    n = _count("n", n, minimum=2)
    t = np.linspace(t0, t1, n)
    h = (t1 - t0) / (n - 1)
    speed = math.sqrt(2.0) * np.exp(t)
    w = h * speed
    w[[0, -1]] /= 2
    return _finish(np.exp((1 + 1j) * t), w, normalized)


def random_atoms(n: int = 100, box=(-1.0, 1.0, -1.0, 1.0), seed: int = 0,
                 normalized: bool = True) -> DiscreteMeasure:
    """Uniform random atoms in the box ``(xmin, xmax, ymin, ymax)``, weights ``1/n``."""
    n = _count("n", n)
    try:
        x0, x1, y0, y1 = (float(v) for v in box)
    except (TypeError, ValueError) as exc:
        raise ConfigError("box must be (xmin, xmax, ymin, ymax)") from exc
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("box must have positive width and height")
    rng = np.random.default_rng(seed)
    z = rng.uniform(x0, x1, n) + 1j * rng.uniform(y0, y1, n)
    return _finish(z, 1.0 / n, normalized)


GENERATORS = {
    "disc": disc,
    "circle": circle,
    "segment": segment,
    "spiral": spiral,
    "random": random_atoms,
}


def generate_measure(kind: str, params: dict | None = None) -> DiscreteMeasure:
    """Dispatch to a named generator; unknown kinds or parameters raise ConfigError."""
    if kind not in GENERATORS:
        raise ConfigError(f"unknown measure kind {kind!r}; choose from {sorted(GENERATORS)}")
    params = dict(params or {})
    if "center" in params and not isinstance(params["center"], complex):
        c = params["center"]
        params["center"] = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
    try:
        return GENERATORS[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from exc
