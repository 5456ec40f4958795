import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclab.generators import circle, segment
from cyclab.measure import DiscreteMeasure
from cyclab.polyapprox import (
    Polynomial,
    best_approx_l2,
    best_approx_lp,
    best_approx_sup,
    build_ortho_basis,
    dense_verdict,
    density_profile,
)


def _random_measure(rng, n):
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    return DiscreteMeasure.from_atoms(z, rng.random(n) + 0.05).normalized()


def test_two_point_basis_matches_hand_gram_schmidt():
    mu = DiscreteMeasure.from_atoms([-1, 1], [0.5, 0.5])
    b = build_ortho_basis(mu, 1)
    # hand Gram-Schmidt: q0 = 1, z has mean 0 and norm 1, so q1 = z
    np.testing.assert_allclose(b.evaluate(np.array([-1, 1, 0.3])), [[1, -1], [1, 1], [1, 0.3]], atol=1e-14)


def test_degree_zero_is_constant_one(rng):
    mu = _random_measure(rng, 17)
    b = build_ortho_basis(mu, 0)
    np.testing.assert_allclose(b.values[:, 0], 1.0, atol=1e-14)


def test_gram_identity_degree_25(rng):
    for _ in range(5):
        mu = _random_measure(rng, 200)
        b = build_ortho_basis(mu, 25)
        assert b.rank == 26 and not b.rank_deficient
        G = (b.values.conj().T * mu.weights) @ b.values
        assert np.max(np.abs(G - np.eye(26))) <= 1e-10


def test_rank_deficiency_flagged():
    mu = DiscreteMeasure.from_atoms([0, 1, 2], [1, 1, 1])
    b = build_ortho_basis(mu, 5)
    assert b.rank == 3 and b.rank_deficient


def test_bergman_disc_residual(disc64):
    for d in (0, 5, 15, 30):
        fit = best_approx_l2(np.conj(disc64.points), disc64, d)
        assert fit.residual == pytest.approx(math.sqrt(0.5), rel=0.02)


def test_bergman_unnormalized_area():
    from cyclab.generators import disc
    mu = disc(step=1 / 128)
    fit = best_approx_l2(np.conj(mu.points), mu, 10)
    assert fit.residual == pytest.approx(math.sqrt(math.pi / 2), rel=0.02)


def test_disc_projection_matches_explicit_gram_solve(disc64):
    # cross-check with a small explicit monomial Gram solve
    z, w = disc64.points, disc64.weights
    V = np.vander(z, 4, increasing=True)
    G = (V.conj().T * w) @ V
    coef = np.linalg.solve(G, (V.conj().T * w) @ np.conj(z))
    direct = math.sqrt(np.sum(w * np.abs(np.conj(z) - V @ coef) ** 2))
    assert best_approx_l2(np.conj(z), disc64, 3).residual == pytest.approx(direct, rel=1e-8)


def test_real_axis_conjugate_is_exact():
    mu = segment(0, 1, 65)
    assert best_approx_l2(np.conj(mu.points), mu, 1).residual <= 1e-10


def test_circle_residual_is_one_for_all_degrees():
    mu = circle(512)
    for d in range(41):
        assert best_approx_l2(np.conj(mu.points), mu, d).residual == pytest.approx(1.0, abs=1e-6)


def test_lp_with_p2_equals_l2(rng):
    mu = _random_measure(rng, 40)
    t = rng.normal(size=40) + 1j * rng.normal(size=40)
    for d in (0, 3, 7):
        assert best_approx_lp(t, mu, d, 2).residual == pytest.approx(best_approx_l2(t, mu, d).residual, abs=1e-10)


def test_l1_weighted_median():
    mu = DiscreteMeasure.from_atoms([0, 1, 10], [1 / 3, 1 / 3, 1 / 3])
    fit = best_approx_lp(np.array([0, 1, 10.0]), mu, 0, 1)
    assert fit.poly(0.0).real == pytest.approx(1.0, abs=1e-6)
    assert fit.residual == pytest.approx(10 / 3, abs=1e-6)


@pytest.mark.parametrize("p", [0.5, 1.0, 3.0, "sup"])
def test_iterative_profiles_are_monotone(rng, p):
    mu = _random_measure(rng, 30)
    t = np.abs(mu.points) + 1j * np.sin(mu.points.real)
    prof = density_profile(t, mu, p, range(8))
    r = [q.residual for q in prof]
    assert all(b <= a + 1e-9 for a, b in zip(r, r[1:]))


@given(st.integers(0, 2**32 - 1))
def test_l2_projection_optimality(seed):
    rng = np.random.default_rng(seed)
    mu = _random_measure(rng, 25)
    t = rng.normal(size=25) + 1j * rng.normal(size=25)
    fit = best_approx_l2(t, mu, 4)
    mono = fit.poly.to_monomial().coeffs
    for _ in range(20):
        q = Polynomial(mono + 1e-3 * (rng.normal(size=mono.size) + 1j * rng.normal(size=mono.size)))
        r = math.sqrt(np.sum(mu.weights * np.abs(t - q(mu.points)) ** 2))
        assert r >= fit.residual - 1e-10


@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_interpolation_completeness(n, seed):
    rng = np.random.default_rng(seed)
    # well-separated nodes on a circle with random phases keep the problem well posed
    z = np.exp(2j * np.pi * (np.arange(n) + 0.3 * rng.random(n)) / n)
    mu = DiscreteMeasure.from_atoms(z, rng.random(n) + 0.1)
    t = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert best_approx_l2(t, mu, n - 1).residual <= 1e-8


def test_sup_exact_polynomial(rng):
    z = rng.normal(size=50) + 1j * rng.normal(size=50)
    t = 1 - 2j * z + 0.5 * z**3
    assert best_approx_sup(t, z, 3).residual <= 1e-9


def test_sup_conjugate_on_segment():
    x = np.linspace(0, 1, 256).astype(complex)
    assert best_approx_sup(np.conj(x), x, 1).residual <= 1e-9


def test_sup_conjugate_on_circle_stays_high():
    z = circle(512).points
    for d in (0, 1, 5, 15, 30):
        fit = best_approx_sup(np.conj(z), z, d)
        assert fit.residual >= 0.99
        assert fit.lower_bound <= fit.residual + 1e-12


def test_sup_circle_small_degree_matches_lp_oracle():
    from scipy.optimize import linprog
    z = circle(16).points
    t = np.conj(z)
    d = 2
    # minimize s subject to |Re/Im| box approximation of complex modulus
    # via 16 directions: Re(e^{-i th}(t - p)) <= s for each direction
    V = np.vander(z, d + 1, increasing=True)
    rows, rhs = [], []
    for th in np.linspace(0, 2 * np.pi, 64, endpoint=False):
        u = np.exp(-1j * th)
        for i in range(len(z)):
            a = u * V[i]
            rows.append(np.concatenate([-a.real, a.imag, [-1.0]]))
            rhs.append(-(u * t[i]).real)
    n = d + 1
    res = linprog(np.r_[np.zeros(2 * n), 1.0], A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(None, None)] * (2 * n) + [(0, None)], method="highs")
    polygon_value = res.fun  # within cos(pi/64) of the true minimax
    fit = best_approx_sup(t, z, d)
    assert fit.residual >= polygon_value - 1e-9
    assert fit.residual <= polygon_value / math.cos(math.pi / 64) + 1e-6


@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_sup_dominates_counting_l2(seed, d):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    t = np.abs(z) ** 2
    counting = DiscreteMeasure.from_atoms(z, np.full(20, 1 / 20))
    sup = best_approx_sup(t, z, d).residual
    assert sup >= best_approx_l2(t, counting, d).residual - 1e-9


def test_weighted_profile_reaches_zero_by_interpolation():
    mu = segment(0, 1, 9)
    rho = np.exp(-2 * np.abs(mu.points))
    target = np.zeros(9, dtype=complex)
    target[4] = 1
    prof = density_profile(target, mu, 2, range(9), weight=rho)
    assert prof[-1].residual <= 1e-10
    assert prof[0].residual > 0.1


def test_flat_disc_profile(disc64):
    prof = density_profile(np.conj(disc64.points), disc64, 2, [0, 10, 20])
    r = [q.residual for q in prof]
    assert max(r) - min(r) <= 0.01 * max(r)
    assert not dense_verdict(prof, math.sqrt(0.5))


def test_empty_degrees():
    mu = segment(0, 1, 5)
    assert density_profile(mu.points, mu, 2, []) == []
