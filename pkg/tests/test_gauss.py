import math

import numpy as np
import pytest

from cyclab.errors import BoundViolation
from cyclab.gauss import (
    GaussApproximant,
    GaussGrid,
    MultiPoly,
    default_grid,
    gaussian_sup_profile,
    gaussian_weighted_sup_approx,
    hermite_functions,
    load_grid,
    radial_taylor,
    reduce_exponent_step,
    reduce_to_pure,
    save_grid,
    stirling_table,
    taylor_exp,
    taylor_gaussian_bound,
    verify_remainder_sup,
)


def test_bound_k0():
    b, cap = taylor_gaussian_bound(0)
    assert b == pytest.approx(math.exp(-1), abs=1e-15)
    assert cap == pytest.approx((2 * math.pi) ** -0.5, abs=1e-15)
    assert b == pytest.approx(0.367879, abs=1e-6) and cap == pytest.approx(0.398942, abs=1e-6)


def test_cap_k7():
    assert taylor_gaussian_bound(7)[1] == pytest.approx((16 * math.pi) ** -0.5, abs=1e-15)
    assert taylor_gaussian_bound(7)[1] == pytest.approx(0.141047, abs=1e-6)


def test_bound_matches_direct_factorial_for_small_k():
    for k in range(30):
        m = k + 1
        assert taylor_gaussian_bound(k)[0] == pytest.approx(math.exp(-m) * m**m / math.factorial(m), rel=1e-12)


def test_bound_below_cap_and_decreasing_up_to_10000():
    prev = math.inf
    for k in range(10001):
        b, cap = taylor_gaussian_bound(k)
        assert math.isfinite(b) and b <= cap
        assert b < prev
        prev = b


def test_bound_rejects_negative():
    with pytest.raises(ValueError):
        taylor_gaussian_bound(-1)


def test_remainder_k0_analytic():
    r = verify_remainder_sup(0)
    assert r.sup == pytest.approx(0.25, abs=1e-4)
    assert r.argmax == pytest.approx(math.log(2), abs=0.01)
    assert r.sup <= math.exp(-1)


def test_remainder_k1():
    assert verify_remainder_sup(1).sup <= 2 * math.exp(-2) + 1e-9


def test_remainder_suite_and_majorant_argmax():
    for row in stirling_table(60):
        assert row["empirical_sup"] <= row["bound"] + 1e-9
        assert row["bound"] <= row["cap"] + 1e-9
        assert abs(row["majorant_argmax"] - (row["k"] + 1)) <= 0.01


def test_verify_raises_on_violation(monkeypatch):
    import cyclab.gauss as g
    monkeypatch.setattr(g, "taylor_gaussian_bound", lambda k: (0.0, 0.0))
    with pytest.raises(BoundViolation):
        g.verify_remainder_sup(0)


def test_taylor_exp_horner():
    s = np.linspace(-3, 3, 13)
    ref = sum(s**j / math.factorial(j) for j in range(9))
    np.testing.assert_allclose(taylor_exp(8, s), ref, rtol=1e-14, atol=8 * np.finfo(float).eps * math.exp(3))


def test_radial_taylor_agrees_with_scalar_taylor():
    X = np.random.default_rng(1).normal(size=(50, 2))
    r2 = np.sum(X * X, axis=1)
    np.testing.assert_allclose(radial_taylor(6, 2)(X), taylor_exp(6, -r2), rtol=1e-12, atol=1e-12)


def test_hermite_functions_orthonormal():
    y = np.linspace(-15, 15, 6001)
    H = hermite_functions(10, y)
    G = (H * (y[1] - y[0])) @ H.T
    np.testing.assert_allclose(G, np.eye(11), atol=1e-10)


def test_reduce_one_to_taylor_paper_inequality():
    approx = GaussApproximant(MultiPoly.constant(1.0, 1), 2.0, 1, extra=1)
    prev = math.inf
    for k in (5, 10, 20, 40):
        step = reduce_exponent_step(approx, k)
        assert step.gap <= taylor_gaussian_bound(k)[1]
        assert step.gap <= prev
        prev = step.gap


def test_reduce_zero_gives_zero():
    approx = GaussApproximant(MultiPoly.constant(0.0, 1), 2.0, 1, extra=1)
    step = reduce_exponent_step(approx, 10)
    assert step.gap == 0.0
    X = default_grid(1)
    assert np.all(step.approx(X) == 0)


def test_reduce_x_with_two_extra_k20():
    # p = x with extra exponent n+1 = 2
    approx = GaussApproximant(MultiPoly.coordinate(0, 1), 2.0, 1, extra=2)
    step = reduce_exponent_step(approx, 20)
    x = default_grid(1)[:, 0]
    const = np.max(np.abs(x * np.exp(-2 * x**2)))
    assert step.constant == pytest.approx(const, rel=1e-12)
    assert step.gap <= const * taylor_gaussian_bound(20)[1]


def test_reduce_to_pure_two_dimensional():
    approx = GaussApproximant(MultiPoly.coordinate(0, 2) * MultiPoly.coordinate(1, 2), 2.0, 2, extra=2)
    pure, steps = reduce_to_pure(approx, 12)
    assert pure.extra == 0 and len(steps) == 2
    X = default_grid(2)
    total = np.max(np.abs(approx(X) - pure(X)))
    assert total <= sum(s.gap for s in steps) + 1e-12


def test_reduce_requires_extra():
    with pytest.raises(ValueError):
        reduce_exponent_step(GaussApproximant(MultiPoly.constant(1.0, 1), 2.0, 1), 3)


def test_gaussian_itself_is_exact():
    grid = GaussGrid.sample(lambda X: np.exp(-2 * np.sum(X * X, axis=1)), -3, 3, 0.25, 2)
    fit = gaussian_weighted_sup_approx(grid, c=2, degree=4)
    assert fit.sup_error <= 1e-10


def test_zero_target():
    grid = GaussGrid.sample(lambda X: np.zeros(len(X)), -3, 3, 0.25, 2)
    fit = gaussian_weighted_sup_approx(grid, c=2, degree=4)
    assert fit.sup_error == 0.0
    assert np.all(fit.approx(grid.points()) == 0)


def _hat(X):
    return np.maximum(0.0, 1 - np.linalg.norm(X, axis=1))


def test_profile_monotone_and_lower_bound_valid():
    grid = GaussGrid.sample(_hat, -3, 3, 0.2, 2)
    fits = gaussian_sup_profile(grid, c=2, degrees=range(0, 13, 2))
    errs = [f.sup_error for f in fits]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    for f in fits:
        assert f.lower_bound <= f.sup_error + 1e-9
        assert f.sup_error - f.lower_bound <= 1e-6 * max(f.sup_error, 1)


def test_symmetry_reduction_gives_same_value():
    grid = GaussGrid.sample(_hat, -3, 3, 0.3, 2)
    a = gaussian_weighted_sup_approx(grid, c=2, degree=6, use_symmetry=True).sup_error
    b = gaussian_weighted_sup_approx(grid, c=2, degree=6, use_symmetry=False).sup_error
    assert a == pytest.approx(b, abs=1e-8)


def test_error_invariant_under_grid_isometry():
    def f(X):
        return np.exp(-np.sum((X - [0.5, -0.3]) ** 2, axis=1) * 3)

    grid = GaussGrid.sample(f, -3, 3, 0.3, 2)
    rotated = GaussGrid(2, grid.step, grid.origin, np.rot90(grid.values))
    flipped = GaussGrid(2, grid.step, grid.origin, grid.values.T)
    base = gaussian_weighted_sup_approx(grid, c=2, degree=6).sup_error
    for g in (rotated, flipped):
        assert gaussian_weighted_sup_approx(g, c=2, degree=6).sup_error == pytest.approx(base, abs=1e-8)


def test_boundary_decay():
    grid = GaussGrid.sample(_hat, -3, 3, 0.2, 2)
    fit = gaussian_weighted_sup_approx(grid, c=2, degree=10)
    X = grid.points()
    vals = np.abs(fit.approx(X))
    edge = np.max(np.abs(X), axis=1) >= 3 - 1e-9
    assert vals[edge].max() <= vals[~edge].max()
    assert fit.outside_sup <= vals.max()


def test_lawson_method_agrees_with_lp():
    grid = GaussGrid.sample(_hat, -3, 3, 0.3, 2)
    lp = gaussian_weighted_sup_approx(grid, c=2, degree=4).sup_error
    law = gaussian_weighted_sup_approx(grid, c=2, degree=4, method="lawson", maxiter=2000)
    assert law.lower_bound <= lp + 1e-9
    assert law.sup_error >= lp - 1e-9
    assert law.sup_error <= 1.2 * lp


def test_grid_json_roundtrip(tmp_path):
    grid = GaussGrid.sample(_hat, -1, 1, 0.5, 2)
    save_grid(grid, tmp_path / "g.json")
    back = load_grid(tmp_path / "g.json")
    np.testing.assert_array_equal(back.values, grid.values)
    assert back.origin == grid.origin and back.step == grid.step
