import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fpme.spectral import (CapacityError, DomainMismatchError, DomainSpec, EigenBasis, GridFunction,
                           OperatorSpec, UnsupportedFeatureError, apply, apply_halfpower, apply_inverse,
                           build_basis, build_rfl_basis, build_rfl_matrix, build_sfl_basis, green_bounds,
                           green_kernel, phi1_boundary_ratio, rfl_constant)


def test_domain_grid():
    d = DomainSpec.interval(3)
    assert d.h == 0.25 and d.weight == 0.25
    np.testing.assert_allclose(d.nodes, [0.25, 0.5, 0.75])
    sq = DomainSpec.rectangle(4)
    assert sq.n_nodes == 16 and sq.weight == pytest.approx(1 / 25)
    with pytest.raises(ValueError):
        DomainSpec.interval(0)


def test_gridfunction_value_semantics():
    d = DomainSpec.interval(4)
    f = d.sample(lambda x: x)
    with pytest.raises(ValueError):
        f.values[0] = 3.0
    g = 2 * f + 1
    assert f.values[0] == pytest.approx(0.2) and g.values[0] == pytest.approx(1.4)
    assert f.integral() == pytest.approx(0.2 * (0.2 + 0.4 + 0.6 + 0.8))
    with pytest.raises(DomainMismatchError):
        GridFunction(np.ones(3), d)
    with pytest.raises(DomainMismatchError):
        f + DomainSpec.interval(5).zeros()


def test_sfl_small_interval_analytic():
    b = build_sfl_basis(DomainSpec.interval(3), 1.0, 3)
    h = 0.25
    k = np.arange(1, 4)
    np.testing.assert_allclose(b.mu, 4 / h**2 * np.sin(k * np.pi * h / 2) ** 2, rtol=1e-14)


def test_sfl_first_eigenvalue_near_pi():
    b = build_sfl_basis(DomainSpec.interval(199), 0.5, 1)
    # oracle: closed form of the discrete eigenvalue
    h = 1 / 200
    lam = math.sqrt(4 / h**2 * math.sin(math.pi * h / 2) ** 2)
    assert b.mu[0] == pytest.approx(lam, rel=1e-14)
    assert abs(b.mu[0] / math.pi - 1) < 1e-3


def test_sfl_rectangle_multiplicity():
    b = build_sfl_basis(DomainSpec.rectangle(4), 0.5, 3)
    h = 0.2
    base1 = 4 / h**2 * math.sin(math.pi * h / 2) ** 2
    assert b.mu[0] == pytest.approx(math.sqrt(2 * base1), rel=1e-14)
    assert b.mu[1] == pytest.approx(b.mu[2], rel=1e-14)
    assert b.mu[1] > b.mu[0]


def test_capacity_error():
    with pytest.raises(CapacityError):
        build_sfl_basis(DomainSpec.interval(5), 0.5, 6)


def test_gram_and_sign(sfl_interval, rfl_interval, sfl_square):
    for b in (sfl_interval, rfl_interval, sfl_square):
        assert np.max(np.abs(b.gram() - np.eye(b.size))) < 1e-10
        assert np.all(b.phi[0] > 0)
        assert np.all(np.diff(b.mu) >= 0)


def test_eigenpair_identity(sfl_interval):
    for k in (0, 5, 50):
        out = apply(sfl_interval, sfl_interval.phi[k]).values
        np.testing.assert_allclose(out, sfl_interval.mu[k] * sfl_interval.phi[k], atol=1e-10 * sfl_interval.mu[k])
    assert np.all(apply(sfl_interval, np.zeros(199)).values == 0)


def test_half_order_twice_is_laplacian():
    d = DomainSpec.interval(63)
    half = build_sfl_basis(d, 0.5)
    full = build_sfl_basis(d, 1.0)
    f = np.sin(3 * np.pi * d.axis) + d.axis * (1 - d.axis)
    a = apply(half, apply(half, f)).values
    b = apply(full, f).values
    assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(b))


def test_inverse_and_halfpower(sfl_square, rng):
    f = rng.standard_normal(sfl_square.domain.n_nodes)
    np.testing.assert_allclose(apply_inverse(sfl_square, apply(sfl_square, f)).values, f, atol=1e-10)
    hh = apply_halfpower(sfl_square, apply_halfpower(sfl_square, f)).values
    Af = apply(sfl_square, f).values
    assert np.max(np.abs(hh - Af)) <= 1e-10 * np.max(np.abs(Af))
    p = sfl_square.phi[0]
    np.testing.assert_allclose(apply_inverse(sfl_square, p).values, p / sfl_square.mu[0], atol=1e-14)
    with pytest.raises(ValueError):
        apply_halfpower(sfl_square, f, sign=2)
    with pytest.raises(DomainMismatchError):
        apply(sfl_square, np.ones(10))


def test_self_adjoint_and_positive_inverse(rfl_interval, rng):
    b = rfl_interval
    w = b.domain.weight
    f, g = rng.standard_normal((2, b.domain.n_nodes))
    lhs = w * f @ apply(b, g).values
    rhs = w * apply(b, f).values @ g
    assert abs(lhs - rhs) <= 1e-10 * b.mu.max() * math.sqrt(w * f @ f) * math.sqrt(w * g @ g)
    assert apply_inverse(b, rng.random(b.domain.n_nodes)).values.min() >= -1e-12


def test_rfl_constant_known_values():
    assert rfl_constant(0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    # s -> 1 limit of c_{1,s}/(1-s) is 2 (the constant behaves like 2(1-s))
    assert rfl_constant(0.999) / (1 - 0.999) == pytest.approx(2.0, rel=1e-2)


def test_rfl_matrix_structure():
    d = DomainSpec.interval(50)
    A = build_rfl_matrix(d, 0.4)
    assert np.max(np.abs(A - A.T)) == 0
    assert np.all((A @ np.ones(50)) > 0)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    with pytest.raises(UnsupportedFeatureError):
        build_rfl_matrix(DomainSpec.rectangle(4), 0.5)
    with pytest.raises(UnsupportedFeatureError):
        OperatorSpec("RFL", 0.5, DomainSpec.rectangle(4))


def test_rfl_matches_fourier_symbol_on_whole_line():
    """Interior oracle: for a compactly supported bump the operator is the Fourier multiplier |xi|^{2s}."""
    s = 0.3
    d = DomainSpec.interval(399)
    x = d.axis
    a, x0 = 0.2, 0.5
    bump = np.where(np.abs(x - x0) < a, np.cos(np.pi * (x - x0) / (2 * a)) ** 4, 0.0)
    Au = build_rfl_matrix(d, s) @ bump

    def fhat(xi):  # Fourier transform of cos^4 on [-a, a]
        return quad(lambda y: np.cos(np.pi * y / (2 * a)) ** 4 * np.cos(xi * y), -a, a, limit=200)[0]

    def mult(xq):
        g = lambda xi: xi ** (2 * s) * fhat(xi) * np.cos(xi * (xq - x0))
        return 2 * sum(quad(g, k, k + 20, limit=200)[0] for k in range(0, 2000, 20)) / (2 * math.pi)

    for i in (200, 230):
        assert Au[i] == pytest.approx(mult(x[i]), rel=5e-3)


def test_rfl_richardson_two_grids():
    for s in (0.3, 0.5, 0.7):
        d1, d4 = DomainSpec.interval(100), DomainSpec.interval(400)
        r1 = build_rfl_matrix(d1, s) @ np.sin(np.pi * d1.axis)
        r4 = build_rfl_matrix(d4, s) @ np.sin(np.pi * d4.axis)
        ref = np.interp(d1.axis, d4.axis, r4)
        assert np.max(np.abs(r1 - ref)) / np.max(np.abs(ref)) <= 0.03


def test_rfl_eigenvalues_below_sfl_and_ratio():
    d = DomainSpec.interval(400)
    for s in (0.3, 0.5, 0.7):
        r = build_rfl_basis(build_rfl_matrix(d, s), 10, d, s)
        f = build_sfl_basis(d, s, 10)
        assert np.all(r.mu <= 1.01 * f.mu)
        assert np.max(r.mu[1:] / r.mu[:-1]) < np.inf


def test_rfl_half_first_eigenvalue_literature():
    """Known value on (-1,1) at s=1/2 is 1.1577738836; on (0,1) it scales by 2^{2s} = 2."""
    d = DomainSpec.interval(400)
    r = build_rfl_basis(build_rfl_matrix(d, 0.5), 1, d, 0.5)
    assert r.mu[0] == pytest.approx(2 * 1.1577738836, rel=5e-3)


def test_build_basis_dispatch():
    d = DomainSpec.interval(20)
    b = build_basis(OperatorSpec("RFL", 0.4, d), 5)
    assert b.size == 5 and b.order == 0.5
    np.testing.assert_allclose(b.base_mu, b.mu**2)
    assert OperatorSpec("SFL", 0.4, d).gamma == 1.0
    assert OperatorSpec("RFL", 0.4, d).gamma == 0.4


def test_green_kernel(sfl_interval, rng):
    K = green_kernel(sfl_interval)
    assert np.max(np.abs(K.entries - K.entries.T)) < 1e-12
    assert K.entries.min() > 0
    f = rng.standard_normal(199)
    np.testing.assert_allclose(K.integrate(f).values, apply_inverse(sfl_interval, f).values, atol=1e-9)
    gb = green_bounds(K, sfl_interval, 0.5, 1.0)
    assert gb.lower_constant > 0 and gb.upper_constant is None
    with pytest.raises(ValueError):
        green_kernel(build_sfl_basis(DomainSpec.interval(10), 0.5, 4))


def test_green_upper_bound_runs_when_d_exceeds_2s():
    b = build_sfl_basis(DomainSpec.rectangle(10), 0.5)
    gb = green_bounds(green_kernel(b), b, 0.5, 1.0)
    assert 0 < gb.lower_constant and 0 < gb.upper_constant < np.inf


def test_phi1_boundary_profile():
    for kind, s in (("SFL", 0.5), ("RFL", 0.3), ("RFL", 0.7)):
        d = DomainSpec.interval(200)
        b = build_basis(OperatorSpec(kind, s, d), 1)
        g = OperatorSpec(kind, s, d).gamma
        lo, hi = phi1_boundary_ratio(b, g)
        assert 0 < lo <= hi < np.inf
        # bounded ratio: comparable profile, not a different power
        assert hi / lo < 10


def test_eigenbasis_validation():
    d = DomainSpec.interval(3)
    with pytest.raises(ValueError):
        EigenBasis(np.array([2.0, 1.0]), np.ones((2, 3)), d, np.array([2.0, 1.0]), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=40), st.floats(min_value=0.05, max_value=0.95))
def test_property_ibp_any_grid(n, s):
    b = build_sfl_basis(DomainSpec.interval(n), s)
    rng = np.random.default_rng(n)
    f, g = rng.standard_normal((2, n))
    w = b.domain.weight
    lhs = w * f @ apply(b, g).values
    rhs = w * apply_halfpower(b, f).values @ apply_halfpower(b, g).values
    hf = math.sqrt(np.sum(b.mu * b.coeffs(f) ** 2))
    hg = math.sqrt(np.sum(b.mu * b.coeffs(g) ** 2))
    assert abs(lhs - rhs) <= 1e-10 * hf * hg
