import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mimeticfd.errors import GridQualityError, OperatorError
from mimeticfd.grid import MappingSpec, build_grid
from mimeticfd.linops import (LinOp, alpha_coefficients, alpha_fractions, build_diff_set,
                              build_interp_set, diag_op, inner_c, inner_v, interp_support,
                              lagrange_weights, weighted_adjoint, write_coo)

from conftest import FOURIER, SKEW


def vandermonde_alpha(order):
    # exact first derivative of x^(2j-1) at 0 from samples at +-eps, eps = 1/2, 3/2, ...
    k = order // 2
    eps = np.arange(k) + 0.5
    V = np.array([[(2 * e) ** (2 * j - 1) for e in eps] for j in range(1, k + 1)])
    rhs = np.zeros(k)
    rhs[0] = 1.0
    return np.linalg.solve(V, rhs)


@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_alpha_matches_vandermonde(order):
    assert np.allclose(alpha_coefficients(order), vandermonde_alpha(order), rtol=1e-12, atol=1e-14)


def test_alpha_fourth_order_exact():
    assert alpha_fractions(4) == [Fraction(9, 8), Fraction(-1, 24)]
    assert alpha_fractions(2) == [Fraction(1)]
    assert alpha_fractions(6) == [Fraction(75, 64), Fraction(-25, 384), Fraction(3, 640)]


@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_alpha_differentiates_odd_monomials(order):
    a = alpha_fractions(order)
    for j in range(1, order // 2 + 1):
        # sum alpha_k (x^(2j-1) at eps - at -eps) / (2 eps) ... weighted as in the stencil
        val = sum(ak * (Fraction(2 * m + 1) ** (2 * j - 1)) for m, ak in enumerate(a))
        assert val == (1 if j == 1 else 0)


def test_alpha_rejects_odd_order():
    with pytest.raises(ValueError):
        alpha_fractions(3)


def test_lagrange_weights():
    nodes = np.array([-1.5, -0.5, 0.5, 1.5])
    w = lagrange_weights(nodes)
    assert np.allclose(w, [-1 / 16, 9 / 16, 9 / 16, -1 / 16])
    for p in range(4):
        assert math.isclose(w @ nodes ** p, 0.0 ** p, abs_tol=1e-14)


def brute_inner(a, w, b):
    terms = []
    for i in range(len(a)):
        terms.append(a[i] * w[i] * b[i])
    return math.fsum(terms), math.fsum(abs(t) for t in terms)


@pytest.mark.parametrize("spec", [SKEW, FOURIER])
def test_inner_products_match_loops(spec):
    g = build_grid(spec, 12, 12, 2)
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(g.n), rng.standard_normal(g.n)
    v, u = rng.standard_normal(2 * g.n), rng.standard_normal(2 * g.n)
    ref, scale = brute_inner(a, g.dVc, b)
    assert abs(inner_c(a, b, g) - ref) <= 1e-15 * scale
    # exact rational arithmetic: only the rounding of each product remains
    exact = float(sum(Fraction(x) * Fraction(y) * Fraction(z) for x, y, z in zip(a, g.dVc, b)))
    assert abs(inner_c(a, b, g) - exact) <= 1e-15 * scale
    w = np.concatenate([g.dVe, g.dVn])
    ref, scale = brute_inner(v, w, u)
    assert abs(inner_v(v, u, g) - ref) <= 1e-15 * scale
    with pytest.raises(OperatorError):
        inner_c(a[:-1], b[:-1], g)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_weighted_adjoint_property(n, m, seed):
    rng = np.random.default_rng(seed)
    A = LinOp(sp.random(n, m, density=0.6, random_state=seed), 0.5 + rng.random(n),
              0.5 + rng.random(m))
    x, y = rng.standard_normal(m), rng.standard_normal(n)
    lhs = np.sum(A.w_out * (A @ x) * y)
    rhs = np.sum(A.w_in * x * (A.adjoint() @ y))
    assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-12)
    assert A.adjoint().adjoint() is A
    assert np.allclose(weighted_adjoint(A).toarray(), A.adjoint().toarray())


def test_negation_keeps_adjoint_link():
    A = LinOp(sp.random(4, 4, density=0.5, random_state=1), np.ones(4) * 2, np.ones(4))
    B = -A
    assert B.adjoint().adjoint() is B
    assert np.allclose(B.adjoint().toarray(), -A.adjoint().toarray())


def test_linop_errors_and_algebra(tmp_path):
    A = LinOp(sp.eye(3), np.ones(3), np.ones(3))
    with pytest.raises(OperatorError):
        LinOp(sp.eye(3), np.ones(2), np.ones(3))
    with pytest.raises(OperatorError):
        A + LinOp(sp.eye(2), np.ones(2), np.ones(2))
    with pytest.raises(OperatorError):
        LinOp(sp.eye(3), np.zeros(3), np.ones(3)).adjoint()
    assert np.allclose(((A + A) * 0.5 - A).toarray(), 0)
    assert np.allclose((A @ A).toarray(), np.eye(3))
    D = diag_op([1.0, 2.0, 3.0], np.ones(3))
    assert np.allclose(D @ np.ones(3), [1, 2, 3])
    write_coo(D, tmp_path / "d.txt")
    assert (tmp_path / "d.txt").read_text().splitlines()[0] == "# 3 3 3"


def test_interp_support_widths():
    assert interp_support("C2E", 2) == 8 and interp_support("E2C", 2) == 12
    assert interp_support("C2N", 8) == 12 and interp_support("N2C", 10) == 14


@pytest.mark.parametrize("spec", [SKEW, FOURIER])
@pytest.mark.parametrize("order", [2, 4, 6])
def test_interp_constraints_hold(spec, order):
    g = build_grid(spec, 16, 16, order)
    I = build_interp_set(g)
    assert I.constraint_residual < 1e-11
    for name in ("C2E", "E2C", "C2N", "N2C"):
        assert np.allclose(getattr(I, name) @ np.ones(g.n), 1.0, atol=1e-12)
    # products of orientation components are carried exactly to the cell centres
    assert np.allclose(I.E2C @ (g.rxx_at_e * g.rxy_at_e), g.rxx_at_c * g.rxy_at_c, atol=1e-11)
    assert np.allclose(I.N2C @ g.ryy_at_n ** 2, g.ryy_at_c ** 2, atol=1e-11)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_interp_accuracy_on_smooth_field(order):
    # the correction keeps polynomial accuracy of the base stencil
    errs = []
    for n in (16, 32):
        g = build_grid(SKEW, n, n, order)
        I = build_interp_set(g)
        f = lambda xi: np.sin(2 * np.pi * xi[..., 0]) + np.cos(2 * np.pi * xi[..., 1])
        xi_e = g.xi_c + np.array([0.5 / n, 0.0])
        errs.append(np.abs(I.C2E @ f(g.xi_c) - f(xi_e)).max())
    assert math.log2(errs[0] / errs[1]) > order - 0.5


def test_unconstrained_grid_violates_constraints():
    g = build_grid(SKEW, 16, 16, 2)
    I = build_interp_set(g, constraints=False)
    assert I.constraint_residual > 1e-4
    with pytest.raises(GridQualityError):
        build_interp_set(g, threshold=1e-30)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_diff_columns_telescope(order):
    g = build_grid(SKEW, 16, 16, order)
    d = build_diff_set(g)
    assert d.alpha == tuple(alpha_coefficients(order))
    for D in d.DIFFX + d.DIFFY:
        # c1^T DIFF = 0 and DIFF c1 = 0
        assert np.abs(D.mat.sum(axis=0)).max() == 0
        assert np.abs(D.mat.sum(axis=1)).max() == 0


def test_diffx_stencil_positions():
    g = build_grid(MappingSpec("uniform"), 8, 8, 4)
    d = build_diff_set(g)
    row = d.DIFFX[1].toarray()[3]
    # eps = 3/2: F at i+1 minus F at i-2
    assert row[4] == 1 and row[1] == -1 and np.count_nonzero(row) == 2
