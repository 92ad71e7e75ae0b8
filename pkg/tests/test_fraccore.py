import numpy as np
import pytest

from fracdyn import (
    PoleError,
    build_weight_table,
    frac_difference,
    gl_weight_gamma,
    gl_weight_recursive,
)

ALPHA_GRID = [round(0.1 * k, 1) for k in range(1, 20) if k != 10]


def test_recursive_trivials():
    assert gl_weight_recursive(0.5, 0) == 1.0
    assert gl_weight_recursive(1.0, 2) == 0.0  # integer order truncates
    assert gl_weight_recursive(0.5, 2) == -0.125


def test_recursive_first_weight_is_minus_alpha():
    for a in ALPHA_GRID:
        assert gl_weight_recursive(a, 1) == pytest.approx(-a, abs=0.0)


def test_gamma_trivials():
    assert gl_weight_gamma(0.3, 0) == pytest.approx(1.0, rel=1e-14)
    assert gl_weight_gamma(0.3, 1) == pytest.approx(-0.3, rel=1e-13)
    assert gl_weight_gamma(0.5, 2) == pytest.approx(-0.125, rel=1e-13)


def test_gamma_pole_raises_and_recursive_covers():
    for a in (0.0, 1.0, 2.0):
        with pytest.raises(PoleError):
            gl_weight_gamma(a, 3)
        # recursive path is total where the Gamma path has poles
        gl_weight_recursive(a, 3)


@pytest.mark.parametrize("alpha", ALPHA_GRID)
def test_cross_formula_agreement(alpha):
    for j in range(0, 201):
        r = gl_weight_recursive(alpha, j)
        g = gl_weight_gamma(alpha, j)
        assert abs(g - r) <= 1e-12 * max(1.0, abs(r))


@pytest.mark.parametrize("alpha", ALPHA_GRID)
def test_partial_sum_identity(alpha):
    # sum_{j<=J} c_j^alpha equals c_J^{alpha-1}
    total = 0.0
    for J in range(0, 101):
        total += gl_weight_recursive(alpha, J)
        ref = gl_weight_recursive(alpha - 1.0, J)
        assert total == pytest.approx(ref, rel=1e-10, abs=1e-13)


def test_table_invariants():
    t = build_weight_table([0.5], 2)
    np.testing.assert_allclose(t.weights, [[1.0, -0.5, -0.125]], atol=0.0)
    t2 = build_weight_table([1.0, 1.0], 3)
    np.testing.assert_allclose(t2.weights, [[1, -1, 0, 0], [1, -1, 0, 0]], atol=0.0)
    empty = build_weight_table([], 5)
    assert empty.weights.shape == (0, 6)
    assert empty.channels == 0


def test_table_matches_pointwise():
    t = build_weight_table(ALPHA_GRID, 60)
    for i, a in enumerate(ALPHA_GRID):
        for j in range(61):
            assert t.weights[i, j] == pytest.approx(gl_weight_recursive(a, j), abs=0.0)


def test_frac_difference_examples():
    np.testing.assert_allclose(frac_difference([3.0, 5.0], [1.0], 1), [2.0], atol=0.0)
    const = np.full(10, 4.2)
    for k in range(10):
        np.testing.assert_allclose(frac_difference(const, [0.0], k), [4.2], atol=0.0)
    np.testing.assert_allclose(frac_difference([1.0, 1.0, 1.0], [0.5], 2), [0.375], atol=1e-15)


def test_frac_difference_first_difference_uses_zero_history():
    # x[-1] = 0, so the k = 0 first difference is x[0] itself
    np.testing.assert_allclose(frac_difference([3.0, 5.0], [1.0], 0), [3.0], atol=0.0)


def test_frac_difference_index_errors():
    with pytest.raises(IndexError):
        frac_difference([1.0, 2.0], [0.5], 2)
    with pytest.raises(IndexError):
        frac_difference([1.0, 2.0], [0.5], -1)


def test_frac_difference_linearity():
    rng = np.random.default_rng(7)
    alphas = [0.3, 0.8, 1.4]
    x = rng.normal(size=(32, 3))
    y = rng.normal(size=(32, 3))
    a, b = 1.7, -0.4
    table = build_weight_table(alphas, 31)
    for k in (0, 5, 17, 31):
        lhs = frac_difference(a * x + b * y, alphas, k, table)
        rhs = a * frac_difference(x, alphas, k, table) + b * frac_difference(y, alphas, k, table)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_frac_difference_precomputed_table_horizon_check():
    table = build_weight_table([0.5], 2)
    from fracdyn.errors import DomainError

    with pytest.raises(DomainError):
        frac_difference(np.ones(10), [0.5], 5, table)
