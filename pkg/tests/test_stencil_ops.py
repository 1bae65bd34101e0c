from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compact_wave.grid import Field, Grid, make_axis, make_graded_axis, make_uniform_axis
from compact_wave.stencil_ops import (
    ConfigError,
    MeshQualityError,
    NumerovLineCoeffs,
    apply_lambda_k,
    apply_Lh,
    apply_numerov_k,
    batched_solve_numerov,
    lambda_max_k,
    numerov_weights,
    solve_numerov_line,
    time_stencil_at,
)
from compact_wave.grid import TimeMesh


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_numerov_weights_sum_to_twelve(hl, hr):
    alpha, gamma, beta = numerov_weights(hl, hr)
    assert alpha + 10 * gamma + beta == pytest.approx(12.0, rel=1e-12)


def test_numerov_weights_uniform():
    assert tuple(float(w) for w in numerov_weights(0.3, 0.3)) == pytest.approx((1.0, 1.0, 1.0))


def _poly_field(grid, coeffs):
    return grid.sample(lambda x: np.polyval(coeffs, x[0]))


@pytest.mark.parametrize("degree", [2, 3, 4, 5])
def test_numerov_relation_exact_on_uniform_polynomials(degree):
    grid = Grid.box([1.3], [9])
    c = np.arange(1.0, degree + 2.0)
    u = Field(grid, _poly_field(grid, c))
    upp = Field(grid, _poly_field(grid, np.polyder(c, 2)))
    lhs = apply_numerov_k(upp, 0).interior
    rhs = apply_lambda_k(u, 0).interior
    np.testing.assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-10)


def test_numerov_relation_exact_on_nonuniform_cubics():
    grid = Grid([make_axis([0.0, 0.1, 0.35, 0.5, 0.8, 0.9, 1.0])])
    c = [0.7, -1.0, 2.0, 0.5]
    u = Field(grid, _poly_field(grid, c))
    upp = Field(grid, _poly_field(grid, np.polyder(c, 2)))
    np.testing.assert_allclose(apply_numerov_k(upp, 0).interior, apply_lambda_k(u, 0).interior, rtol=1e-12)


def test_lambda_exact_on_quadratics_nonuniform():
    grid = Grid([make_graded_axis(1.0, 9, 1.2)])
    u = Field(grid, grid.sample(lambda x: 3 * x[0] ** 2 - x[0] + 4))
    np.testing.assert_allclose(apply_lambda_k(u, 0).interior, 6.0, rtol=1e-10)


def test_line_solve_inverts_apply():
    rng = np.random.default_rng(0)
    ax = make_graded_axis(1.0, 12, 1.15)
    coeffs = NumerovLineCoeffs.from_axis(ax)
    w = rng.standard_normal(13)
    rhs = coeffs.apply(w)
    sol = solve_numerov_line(coeffs, rhs, w[0], w[-1])
    np.testing.assert_allclose(sol, w[1:-1], rtol=1e-13, atol=1e-13)
    # against a dense solve
    n = 11
    A = np.diag(coeffs.diag) + np.diag(coeffs.lower[1:], -1) + np.diag(coeffs.upper[:-1], 1)
    b = rhs.copy()
    b[0] -= coeffs.lower[0] * w[0]
    b[-1] -= coeffs.upper[-1] * w[-1]
    np.testing.assert_allclose(np.linalg.solve(A, b), sol, rtol=1e-12)
    assert A.shape == (n, n)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_row_dominance_margin_never_below_eight(ratio):
    alpha, gamma, beta = numerov_weights(ratio, 1.0)
    assert 10 * gamma - abs(alpha) - abs(beta) >= 8.0 - 1e-9


def test_non_dominant_rows_rejected():
    lo = np.array([0.0, 0.5, 0.1])
    with pytest.raises(MeshQualityError) as info:
        NumerovLineCoeffs(lo, np.full(3, 10.0 / 12.0), np.array([0.1, 0.5, 0.0]), 2)
    assert info.value.axis == 2 and info.value.node == 2


@pytest.mark.parametrize("k", [0, 1, 2])
def test_batched_threads_bitwise(k):
    rng = np.random.default_rng(k)
    grid = Grid.box([1.0, 1.0, 1.0], [10, 9, 8])
    rhs = Field(grid, rng.standard_normal(grid.shape))
    bc = Field(grid, rng.standard_normal(grid.shape))
    serial = batched_solve_numerov(k, rhs, bc, threads=1)
    par = batched_solve_numerov(k, rhs, bc, threads=3)
    assert np.array_equal(serial.values, par.values)
    # residual check: s_kN w = rhs on the interior
    np.testing.assert_allclose(apply_numerov_k(serial, k).interior, rhs.interior, rtol=1e-12, atol=1e-12)


def test_apply_Lh_and_speed_validation():
    grid = Grid.box([1.0, 1.0], [6, 6])
    u = Field(grid, grid.sample(lambda x: x[0] ** 2 + 3 * x[1] ** 2))
    np.testing.assert_allclose(apply_Lh(u, (2.0, 1.0)).interior, 4 * 2 + 6, rtol=1e-10)
    with pytest.raises(ConfigError):
        apply_Lh(u, (1.0, 0.0))
    with pytest.raises(ConfigError):
        apply_Lh(u, (1.0,))


def test_axis_index_checked():
    grid = Grid.box([1.0], [4])
    with pytest.raises(IndexError):
        apply_lambda_k(grid.field(), 1)


@pytest.mark.parametrize("ax", [make_uniform_axis(1.0, 10), make_graded_axis(1.0, 14, 1.1)])
def test_lambda_max_matches_dense(ax):
    n = ax.count - 1
    M = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n + 2)
        e[j + 1] = 1.0
        M[:, j] = -apply_lambda_k(Field(Grid([ax]), e), 0).interior
    dense = float(np.max(np.linalg.eigvals(M).real))
    assert lambda_max_k(ax) == pytest.approx(dense, rel=1e-8)


def test_time_stencil():
    st_u = time_stencil_at(TimeMesh.uniform_mesh(1.0, 10), 3)
    assert st_u.uniform and st_u.drift == 0.0
    tm = TimeMesh(np.array([0.0, 0.1, 0.3, 0.6]))
    s = time_stencil_at(tm, 1)
    assert not s.uniform
    assert s.drift == pytest.approx((0.2 - 0.1) / 3)
    assert s.quad == pytest.approx((0.04 - 0.02 + 0.01) / 12)
    assert sum(s.snum) == pytest.approx(1.0)
    # Lambda_t of t^2 is exactly 2
    t = tm.nodes
    assert np.dot(s.lam, t[:3] ** 2) == pytest.approx(2.0)
    with pytest.raises(IndexError):
        time_stencil_at(tm, 3)
