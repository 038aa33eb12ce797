import numpy as np
import pytest

from thermoflow.coefficients import (
    CoefficientError,
    CoeffSet,
    check_comparison,
    coeff_set,
    eval_coeff_padded,
    eval_coeffs,
    good_unknown,
    inverse_good_unknown,
    parse_coeff,
)
from thermoflow.grid import DIRICHLET, ScalarField, make_grid


def test_parse_const():
    fn = parse_coeff("const:2.5")
    assert np.all(fn(np.linspace(-3, 3, 7)) == 2.5)
    assert fn.antideriv(np.array([2.0]))[0] == pytest.approx(5.0)


def test_parse_quad():
    fn = parse_coeff("quad:1.0,1.0")
    th = np.array([0.0, 1.0, -2.0])
    assert np.allclose(fn(th), [1.0, 2.0, 5.0])
    # K(1) = 1 + 1/3 = 4/3
    assert fn.antideriv(np.array([1.0]))[0] == pytest.approx(4.0 / 3.0)
    assert np.allclose(fn.df(th), [0.0, 2.0, -4.0])


def test_parse_gauss_antiderivative_matches_quadrature():
    fn = parse_coeff("gauss:0.5,1.0")
    xs = np.linspace(0, 1.5, 200)
    num = np.trapezoid(fn(xs), xs)
    assert fn.antideriv(np.array([1.5]))[0] - fn.antideriv(np.array([0.0]))[0] \
        == pytest.approx(num, rel=1e-4)


def test_parse_affine_kink_continuity():
    fn = parse_coeff("affine:0.2,1.0,0.5")  # max(0.2 + theta, 0.5), kink at 0.3
    th = np.linspace(-1, 2, 4001)
    vals = fn(th)
    assert vals.min() == pytest.approx(0.5)
    # antiderivative continuous and K(0) = 0
    anti = fn.antideriv(th)
    assert np.max(np.abs(np.diff(anti))) < 3e-3
    assert fn.antideriv(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)


def test_parse_rejects_unknown_or_malformed():
    with pytest.raises(CoefficientError):
        parse_coeff("cubic:1.0")
    with pytest.raises(CoefficientError):
        parse_coeff("quad:a,b")


def test_coeff_set_lower_bound_check():
    c = coeff_set("gauss:0.5,1.0", "const:1.0", "const:1.0", sigma=2.0)
    c.check_lower_bound(5.0)  # inf = 0.5 = 1/sigma, accepted
    c3 = coeff_set("gauss:0.5,1.0", "const:1.0", "const:1.0", sigma=3.0)
    c3.check_lower_bound(5.0)  # looser bound also fine
    bad = coeff_set("gauss:0.0,1.0", "const:1.0", "const:1.0", sigma=2.0)
    with pytest.raises(CoefficientError):
        bad.check_lower_bound(5.0)  # e^{-theta^2} sinks below 1/2 for large theta


def test_coeff_set_rejects_bad_sigma():
    with pytest.raises(CoefficientError):
        coeff_set(sigma=-1.0)


def test_eval_coeffs_rejects_pointwise_violation():
    g = make_grid(8, 8, 1.0, 1.0)
    theta = ScalarField(g, np.full(g.shape, 3.0))
    c = coeff_set("gauss:0.0,1.0", "const:1.0", "const:1.0", sigma=2.0)
    with pytest.raises(CoefficientError):
        eval_coeffs(c, theta)


def test_eval_coeff_padded_boundary_value():
    # on the Dirichlet ghost ring theta = 0 so kappa = kappa(0) exactly
    g = make_grid(6, 6, 1.0, 1.0)
    theta = ScalarField(g, np.ones(g.shape), DIRICHLET)
    fn = parse_coeff("quad:1.0,1.0")
    pad = eval_coeff_padded(fn, theta, 0.0)
    assert pad.shape == (8, 8)
    assert pad[0, 3] == pytest.approx(1.0)     # kappa(0)
    assert pad[3, 3] == pytest.approx(2.0)     # kappa(1)


def test_good_unknown_quad_value():
    g = make_grid(8, 8, 1.0, 1.0)
    theta = ScalarField(g, np.ones(g.shape))
    c = coeff_set(kappa="quad:1.0,1.0")
    K = good_unknown(c, theta)
    assert np.allclose(K.values, 4.0 / 3.0)


def test_inverse_good_unknown_roundtrip():
    g = make_grid(16, 16, 1.0, 1.0)
    rng = np.random.default_rng(11)
    theta = ScalarField(g, 2.0 * rng.standard_normal(g.shape))
    for kappa in ("const:1.0", "quad:1.0,1.0", "gauss:1.0,1.0", "affine:1.0,0.5,0.75"):
        c = coeff_set(kappa=kappa)
        back = inverse_good_unknown(c, good_unknown(c, theta))
        assert np.max(np.abs(back.values - theta.values)) < 1e-10


def test_good_unknown_monotone():
    c = coeff_set(kappa="gauss:1.0,1.0")
    th = np.linspace(-4, 4, 1001)
    g = make_grid(3, 3, 1.0, 1.0)
    K = c.kappa.antideriv(th)
    dK = np.diff(K)
    assert np.all(dK > 0)
    # slope at least 1/sigma between samples
    assert dK.min() / np.diff(th)[0] >= c.sigma_inv - 1e-6


def test_transform_chain_rule_order():
    # grad K(theta) = kappa(theta) grad theta + O(h^2) at interior nodes
    from thermoflow.operators import gradient
    errs = []
    for n in (32, 64, 128):
        g = make_grid(n, n, 1.0, 1.0)
        X, Y = g.xy()
        theta = ScalarField(g, np.sin(np.pi * X) * np.sin(np.pi * Y))
        c = coeff_set(kappa="quad:1.0,1.0")
        K = good_unknown(c, theta)
        lhs = gradient(K).x.values
        rhs = c.kappa(theta.values) * gradient(theta).x.values
        errs.append(np.max(np.abs(lhs - rhs)[2:-2, 2:-2]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_m_tilde_covers_range():
    c = coeff_set("quad:1.0,1.0", "const:1.0", "gauss:1.0,2.0")
    mt = c.m_tilde(2.0)
    # quad: f(2)=5, f'=4, f''=2; gauss second derivative peaks at 2b
    assert mt >= 5.0
    assert c.m_tilde(2.0) == mt  # cached


@pytest.mark.parametrize("q", [2, 4, np.inf])
def test_comparison_band_smooth_field(q):
    g = make_grid(48, 48, 1.0, 1.0)
    X, Y = g.xy()
    theta = ScalarField(g, 0.8 * np.sin(np.pi * X) * np.sin(2 * np.pi * Y))
    c = coeff_set(kappa="quad:1.0,1.0")
    rep = check_comparison(c, theta, good_unknown(c, theta), q)
    assert rep.passed
    assert rep.sigma_inv * rep.grad_theta <= rep.grad_bigtheta + 1e-8
    assert rep.grad_bigtheta <= rep.m_tilde * rep.grad_theta + 1e-8
