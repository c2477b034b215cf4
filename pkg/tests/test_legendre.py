import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from ebm2.legendre import (
    AccuracyError,
    DimensionError,
    SpectralField,
    SpectralGrid,
    analyze,
    apply_A,
    chebyshev_points,
    default_n_quad,
    extrema,
    hardy_check,
    hardy_constant,
    hardy_side_constant,
    norms,
    semigroup_apply,
    sup_norm,
    synthesize,
    weighted_l2_sq,
)


def lobatto_diff_matrix(x):
    """Barycentric differentiation matrix on arbitrary distinct points."""
    n = len(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


# --- grid ----------------------------------------------------------------


@pytest.mark.parametrize("n_modes", [1, 2, 7, 32, 64])
def test_grid_invariants(n_modes):
    g = SpectralGrid(n_modes)
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(np.abs(g.nodes) < 1)
    assert np.all(g.weights > 0)
    assert abs(g.weights.sum() - 2.0) < 1e-13
    assert g.n_quad == math.ceil(5 * n_modes / 2) + 2
    assert g.n_quad >= math.ceil((5 * (n_modes - 1) + 2) / 2)


def test_grid_rejects_low_quadrature():
    with pytest.raises(ValueError):
        SpectralGrid(10, n_quad=10)
    with pytest.raises(ValueError):
        SpectralGrid(0)


def test_grid_quadrature_exact_for_quintic_products():
    g = SpectralGrid(9)
    rng = np.random.default_rng(1)
    c = rng.normal(size=(5, 9))
    vals = np.prod(g.to_nodes(c), axis=0)
    exact = np.polynomial.legendre.legint(
        np.polynomial.legendre.legmul(
            np.polynomial.legendre.legmul(np.polynomial.legendre.legmul(c[0], c[1]), c[2]),
            np.polynomial.legendre.legmul(c[3], c[4]),
        ),
        lbnd=-1,
    )
    assert g.weights @ vals == pytest.approx(np.polynomial.legendre.legval(1.0, exact), rel=1e-12, abs=1e-12)


# --- transforms ----------------------------------------------------------


def test_analyze_constant_and_x(grid16):
    g = grid16
    c1 = analyze(np.ones(g.n_quad), g).coeffs
    assert c1[0] == pytest.approx(1.0, abs=1e-14) and np.abs(c1[1:]).max() < 1e-13
    cx = analyze(g.nodes, g).coeffs
    assert cx[1] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(np.delete(cx, 1)).max() < 1e-13


def test_analyze_x_squared_matches_symbolic(grid16):
    x = sp.symbols("x")
    expected = [sp.integrate(x**2 * sp.legendre(n, x), (x, -1, 1)) * sp.Rational(2 * n + 1, 2) for n in range(4)]
    assert expected == [sp.Rational(1, 3), 0, sp.Rational(2, 3), 0]
    c = analyze(grid16.nodes**2, grid16).coeffs
    np.testing.assert_allclose(c[:4], [float(v) for v in expected], atol=1e-14)
    assert np.abs(c[4:]).max() < 1e-13


def test_analyze_length_mismatch(grid16):
    with pytest.raises(DimensionError):
        analyze(np.ones(grid16.n_quad - 1), grid16)


def test_synthesize_basics(grid16):
    g = grid16
    np.testing.assert_allclose(synthesize(SpectralField.legendre(g, 0)), 1.0, atol=1e-15)
    np.testing.assert_allclose(synthesize(SpectralField.legendre(g, 1)), g.nodes, atol=1e-15)


def test_round_trip_random(grid16, rng):
    for _ in range(20):
        c = rng.normal(size=16)
        back = analyze(synthesize(SpectralField(grid16, c)), grid16).coeffs
        np.testing.assert_allclose(back, c, atol=1e-12)


def test_round_trip_nodal_polynomial(grid16, rng):
    c = rng.normal(size=16)
    f = np.polynomial.legendre.legval(grid16.nodes, c)
    np.testing.assert_allclose(synthesize(analyze(f, grid16)), f, atol=1e-12)


def test_field_is_immutable(grid16):
    f = SpectralField.legendre(grid16, 2)
    with pytest.raises(ValueError):
        f.coeffs[0] = 1.0


def test_parseval(grid16, rng):
    c = rng.normal(size=16)
    f = SpectralField(grid16, c)
    quad = grid16.weights @ synthesize(f) ** 2
    assert norms(f).h_norm ** 2 == pytest.approx(quad, rel=1e-12)


# --- operator A ----------------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_eigen_identity_symbolic(n):
    x = sp.symbols("x")
    P = sp.legendre(n, x)
    AP = sp.diff((1 - x**2) * sp.diff(P, x), x)
    assert sp.simplify(AP + n * (n + 1) * P) == 0


def test_apply_A_small_cases(grid16):
    g = grid16
    assert np.all(apply_A(SpectralField.legendre(g, 0)).coeffs == 0)
    np.testing.assert_allclose(apply_A(SpectralField.legendre(g, 1)).coeffs, -2 * SpectralField.legendre(g, 1).coeffs)
    np.testing.assert_allclose(apply_A(SpectralField.legendre(g, 2)).coeffs, -6 * SpectralField.legendre(g, 2).coeffs)


def test_apply_A_against_differentiation_matrix():
    g = SpectralGrid(32)
    x = chebyshev_points(48)
    D = lobatto_diff_matrix(x)
    for n in range(32):
        p = special.eval_legendre(n, x)
        oracle = D @ ((1 - x**2) * (D @ p))
        ours = np.polynomial.legendre.legval(x, apply_A(SpectralField.legendre(g, n)).coeffs)
        assert np.abs(oracle - ours).max() <= 1e-7 * (1 + n * (n + 1))


# --- semigroup ------------------------------------------------------------


def test_semigroup_examples(grid16, rng):
    g = grid16
    f = SpectralField(g, rng.normal(size=16))
    np.testing.assert_array_equal(semigroup_apply(f, 0.0).coeffs, f.coeffs)
    assert semigroup_apply(SpectralField.legendre(g, 2), 0.1).coeffs[2] == pytest.approx(0.548811636, abs=1e-9)
    assert semigroup_apply(SpectralField.legendre(g, 0), 7.0).coeffs[0] == 1.0
    with pytest.raises(ValueError):
        semigroup_apply(f, -1e-3)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0, 2), t=st.floats(0, 2), seed=st.integers(0, 2**32 - 1))
def test_semigroup_property_and_contraction(s, t, seed):
    g = SpectralGrid(12)
    f = SpectralField(g, np.random.default_rng(seed).normal(size=12))
    a = semigroup_apply(semigroup_apply(f, s), t).coeffs
    b = semigroup_apply(f, s + t).coeffs
    np.testing.assert_allclose(a, b, atol=1e-13, rtol=1e-13)
    n0, n1 = norms(f), norms(semigroup_apply(f, s))
    assert n1.h_norm <= n0.h_norm * (1 + 1e-15)
    assert n1.v_norm <= n0.v_norm * (1 + 1e-15)
    assert n1.da_norm <= n0.da_norm * (1 + 1e-15)


# --- norms ----------------------------------------------------------------


def test_norm_examples(grid16):
    n1 = norms(SpectralField.constant(grid16, 1.0))
    assert (n1.h_norm, n1.v_norm, n1.da_norm) == pytest.approx((math.sqrt(2),) * 3)
    p1 = norms(SpectralField.legendre(grid16, 1))
    assert p1.h_norm**2 == pytest.approx(2 / 3)
    assert p1.v_norm**2 == pytest.approx(2.0)
    assert p1.da_norm**2 == pytest.approx(10 / 3)


def test_norms_match_quadrature_oracle(grid16, rng):
    c = rng.normal(size=16) / (1 + np.arange(16))
    f = SpectralField(grid16, c)
    d = np.polynomial.legendre.legder(c)
    h2 = integrate.quad(lambda x: np.polynomial.legendre.legval(x, c) ** 2, -1, 1, limit=200)[0]
    dir2 = integrate.quad(lambda x: (1 - x * x) * np.polynomial.legendre.legval(x, d) ** 2, -1, 1, limit=200)[0]
    n = norms(f)
    assert n.h_norm**2 == pytest.approx(h2, rel=1e-10)
    assert n.v_norm**2 == pytest.approx(h2 + dir2, rel=1e-10)


def test_v_dominates_h_on_random_fields(grid16, rng):
    for _ in range(100):
        n = norms(SpectralField(grid16, rng.normal(size=16)))
        assert n.h_norm <= n.v_norm <= n.da_norm


# --- sup norm ---------------------------------------------------------------


def test_sup_norm_examples(grid16):
    assert sup_norm(SpectralField.constant(grid16, -3.5), 64) == 3.5
    assert sup_norm(SpectralField.legendre(grid16, 3), 64) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        sup_norm(SpectralField.legendre(grid16, 3), 10)


def test_sup_norm_is_exact_and_monotone(grid16, rng):
    x = np.linspace(-1, 1, 200001)
    for _ in range(10):
        f = SpectralField(grid16, rng.normal(size=16))
        vals = [sup_norm(f, n) for n in (64, 129, 257, 1025)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        brute = np.abs(f(x)).max()
        assert vals[0] >= brute - 1e-12
        assert vals[0] == pytest.approx(brute, rel=1e-8)


def test_extrema_of_p2(grid16):
    lo, hi = extrema(SpectralField.legendre(grid16, 2, 0.4))
    assert lo == pytest.approx(-0.2, abs=1e-14) and hi == pytest.approx(0.4, abs=1e-14)


# ratio sup/da over a fixed random suite; frozen once from the suite below
SUP_DA_RATIO_BOUND = 0.95


def test_sup_over_da_norm_is_bounded():
    g = SpectralGrid(24)
    rng = np.random.default_rng(4)
    ratios = []
    for _ in range(200):
        c = rng.normal(size=24) / (1.0 + np.arange(24)) ** rng.uniform(0.5, 3.0)
        f = SpectralField(g, c)
        ratios.append(sup_norm(f) / norms(f).da_norm)
    assert max(ratios) <= SUP_DA_RATIO_BOUND


# --- Hardy ----------------------------------------------------------------


def test_hardy_zero_field(grid16):
    r = hardy_check(SpectralField(grid16, np.zeros(16)), 1.0, 0.5)
    assert (r.lhs, r.rhs, r.holds) == (0.0, 0.0, True)


def test_hardy_constant_field_closed_form(grid16):
    r = hardy_check(SpectralField.constant(grid16, 1.0), 1.0, 0.5)
    assert r.lhs == pytest.approx(math.pi, rel=1e-10)
    assert r.rhs == pytest.approx(2 * r.constant_used, rel=1e-14)
    assert r.holds


@pytest.mark.parametrize("n", [0.5, 1.0, 4.0])
@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.9])
def test_hardy_side_constant_against_brute_force(n, gamma):
    # the peak can sit ~1e-30 from -1, so sample the distance d = 1 + x
    d = np.logspace(-300, 0, 600001)
    s = d * (2 - d)
    brute = np.max((n + 1) / s**gamma + (d - 1) * (1 - gamma) / s ** ((1 + gamma) / 2))
    c = hardy_side_constant(n, gamma)
    assert c >= brute - 1e-9 * abs(brute)
    assert c == pytest.approx(brute, rel=1e-6)
    assert hardy_constant(n, gamma) == pytest.approx(4 + 2 * c + 4 * n / 3)


@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.9])
def test_weighted_integral_against_beta_function(grid16, gamma):
    # int (1-x^2)^(-g) dx = B(1/2, 1-g)
    exact = special.beta(0.5, 1 - gamma)
    assert weighted_l2_sq(SpectralField.constant(grid16, 1.0), gamma) == pytest.approx(exact, rel=1e-10)


def test_weighted_integral_against_quad(grid16, rng):
    c = rng.normal(size=16) / (1 + np.arange(16)) ** 2
    f = SpectralField(grid16, c)
    ref = integrate.quad(lambda x: f(x) ** 2, -1, 1, weight="alg", wvar=(-0.7, -0.7))[0]
    assert weighted_l2_sq(f, 0.7) == pytest.approx(ref, rel=1e-9)


def test_hardy_domain_errors(grid16):
    f = SpectralField.constant(grid16, 1.0)
    for gamma in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            hardy_check(f, 1.0, gamma)
    with pytest.raises(ValueError):
        hardy_check(f, 0.0, 0.5)


def test_hardy_accuracy_error_when_refinement_is_capped(grid16):
    f = SpectralField(grid16, np.linspace(1, 0.1, 16))
    with pytest.raises(AccuracyError):
        weighted_l2_sq(f, 0.5, rtol=1e-300, max_doublings=2)
