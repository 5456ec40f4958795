import math

import numpy as np
import pytest

from cyclab.errors import ConfigError
from cyclab.generators import circle, disc, generate_measure, random_atoms, segment, spiral


def test_coarse_disc_mass():
    mu = disc(step=0.5)
    # cell-count oracle: centers (+-0.25, +-0.25), (+-0.75, +-0.25), (+-0.25, +-0.75) lie inside
    assert len(mu) == 12
    assert mu.total_mass == 12 * 0.25
    assert abs(mu.total_mass - math.pi) <= 0.25 * math.pi


def test_fine_disc_cell_count_oracle():
    step = 1 / 64
    ax = -1 + step * (np.arange(128) + 0.5)
    count = int(np.sum(ax[:, None] ** 2 + ax[None, :] ** 2 < 1))
    mu = disc(step=step)
    assert len(mu) == count
    assert mu.total_mass == pytest.approx(math.pi, rel=5e-3)


def test_circle_four_nodes():
    mu = circle(4)
    assert sorted(mu.points.tolist(), key=lambda z: (z.real, z.imag)) == [-1, -1j, 1j, 1]
    np.testing.assert_array_equal(mu.weights, 0.25)


def test_segment_three_nodes():
    mu = segment(0, 1, 3)
    assert mu.points.tolist() == [0, 0.5, 1]
    assert len(set(mu.weights.tolist())) == 1
    trap = segment(0, 1, 3, rule="trapezoid")
    assert trap.weights.tolist() == [0.25, 0.5, 0.25]


def test_spiral_arc_length():
    mu = spiral(-4, 1, 2001)
    exact = math.sqrt(2) * (math.exp(1) - math.exp(-4))
    assert mu.total_mass == pytest.approx(exact, rel=1e-6)
    np.testing.assert_allclose(np.abs(mu.points), np.exp(np.linspace(-4, 1, 2001)), rtol=1e-14)


def test_random_is_seeded():
    a, b = random_atoms(50, seed=3), random_atoms(50, seed=3)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, random_atoms(50, seed=4).points)


@pytest.mark.parametrize("kind,params", [
    ("disc", {"step": -1}),
    ("disc", {"step": 5}),
    ("circle", {"n": 0}),
    ("circle", {"n": 2.5}),
    ("segment", {"a": 1, "b": 0}),
    ("segment", {"rule": "simpson"}),
    ("spiral", {"n": 1}),
    ("random", {"box": (0, 0, 0, 1)}),
    ("torus", {}),
    ("disc", {"radius": 1, "colour": "red"}),
])
def test_invalid_params_raise_config_error(kind, params):
    with pytest.raises(ConfigError):
        generate_measure(kind, params)
