"""Gamma/mu sequences, Faber machinery, kernel assembly and evaluation."""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import special

from glekit.errors import ValidationError
from glekit.kernels import (
    FaberParams,
    GammaSequence,
    MuSequence,
    ObservableSpec,
    build_kernel,
    estimate_scaling,
    faber_polynomial_coeffs,
    gamma_sequence,
    kernel_eval,
    linear_gamma,
    liouville_to_matrix,
    mu_sequence,
    temporal_mode,
)
from glekit.measures import Gaussian, ProductMeasure, gibbs_measure
from glekit.poly import LiouvilleOperator, Polynomial
from glekit.systems import fpu_chain, harmonic_chain, momentum_index

HARMONIC_GAMMA = (0, -2, 0, 6, 0, -20)  # Taylor derivatives of J0(2t) at 0


@pytest.fixture(scope="module")
def harmonic_setup():
    sys = harmonic_chain(100)
    mu = gibbs_measure(sys, Fraction(1))
    u0 = Polynomial.variable(momentum_index(sys, 50))
    obs = ObservableSpec.from_measure(u0, mu)
    return sys, mu, obs


def test_harmonic_gamma_values(harmonic_setup):
    sys, mu, obs = harmonic_setup
    gam = gamma_sequence(sys.operator, obs, mu, 6, skew=True)
    assert gam.values == HARMONIC_GAMMA
    assert all(isinstance(v, (int, Fraction)) for v in gam.values)


def test_harmonic_gamma_direct_matches_skew(harmonic_setup):
    sys, mu, obs = harmonic_setup
    direct = gamma_sequence(sys.operator, obs, mu, 6, skew=False)
    assert direct.values == HARMONIC_GAMMA


def test_single_oscillator_gamma():
    op = LiouvilleOperator(2, [(0, Polynomial.variable(1)),
                               (1, -Polynomial.variable(0))])
    mu = ProductMeasure.uniform(Gaussian(Fraction(1)), 2)
    obs = ObservableSpec.from_measure(Polynomial.variable(1), mu)
    gam = gamma_sequence(op, obs, mu, 4, skew=True)
    assert gam.values == (0, -1, 0, 1)


def test_odd_gamma_exactly_zero_for_chains():
    for beta1 in (0, Fraction(1, 100)):
        sys = fpu_chain(12, alpha1=1, beta1=beta1)
        mu = gibbs_measure(sys, Fraction(1) if beta1 == 0 else 1.0)
        u0 = Polynomial.variable(0)  # r observable
        obs = ObservableSpec.from_measure(u0, mu)
        gam = gamma_sequence(sys.operator, obs, mu, 7, skew=False)
        for i in (1, 3, 5, 7):
            assert gam.gamma(i) == 0


def test_gamma_skew_spot_check_rejects_non_skew():
    op = LiouvilleOperator(1, [(0, Polynomial.variable(0))])  # x' = x
    mu = ProductMeasure.uniform(Gaussian(Fraction(1)), 1)
    obs = ObservableSpec.from_measure(Polynomial.variable(0), mu)
    with pytest.raises(ValidationError):
        gamma_sequence(op, obs, mu, 2, skew=True)


def test_mu_recursion_harmonic():
    mu = mu_sequence(GammaSequence(HARMONIC_GAMMA, skew_adjoint=True))
    assert mu.values == (0, -2, 0, 2, 0, -4)


def test_mu_recursion_trivia():
    assert mu_sequence(GammaSequence((Fraction(7),))).values == (Fraction(7),)
    assert mu_sequence(GammaSequence((0, 0, 0))).values == (0, 0, 0)


def test_mu_matches_definition_general_case():
    # convolution identity: gamma_k = sum over compositions; check against a
    # brute-force expansion for a non-skew sequence
    g = GammaSequence((Fraction(1, 2), Fraction(-1, 3), Fraction(2, 7), Fraction(1, 5)))
    mu = mu_sequence(g)
    # mu_1 = g1; mu_2 = g2 - mu1 g1; mu_3 = g3 - mu2 g1 - mu1 g2; ...
    m1 = g.gamma(1)
    m2 = g.gamma(2) - m1 * g.gamma(1)
    m3 = g.gamma(3) - m2 * g.gamma(1) - m1 * g.gamma(2)
    m4 = g.gamma(4) - m3 * g.gamma(1) - m2 * g.gamma(2) - m1 * g.gamma(3)
    assert mu.values == (m1, m2, m3, m4)


def test_faber_rows_basics():
    fp = FaberParams(c0=0, c1=Fraction(-1, 4))
    rows = faber_polynomial_coeffs(fp, 3)
    assert rows[0] == [1]
    assert rows[1] == [0, 1]                      # F1 = z
    assert rows[2] == [Fraction(1, 2), 0, 1]      # F2 = z^2 + 1/2
    for q, row in enumerate(rows):
        assert row[q] == 1                        # monic


def test_faber_generating_identity_pins_convention():
    # e^{tz} = sum_q g_q(t) F_q(z) on the segment c0 + iy, |y| <= 2 sqrt(-c1);
    # truncation error decreases with order and vanishes, which pins the
    # -2c1 anomaly of F2 against the Bessel temporal modes.
    fp = FaberParams(c0=0.0, c1=-0.25)
    rows = faber_polynomial_coeffs(fp, 31)
    ys = np.linspace(-1.0, 1.0, 20)
    for t in (1.0, 5.0):
        prev = None
        for n in (5, 10, 15, 20, 25, 30):
            err = 0.0
            for y in ys:
                z = fp.c0 + 1j * y
                total = 0j
                for q in range(n + 1):
                    fq = sum(c * z**j for j, c in enumerate(rows[q]))
                    total += temporal_mode(fp, q, t) * fq
                err = max(err, abs(np.exp(t * z) - total))
            if prev is not None:
                # monotone down to the roundoff floor
                assert err <= prev * (1 + 1e-9) + 1e-13
            prev = err
        assert prev < 1e-8


def test_temporal_modes():
    assert temporal_mode("dyson", 3, 2.0) == pytest.approx(8 / 6)
    fp = FaberParams(c0=0.0, c1=-1.0)
    for t in (0.3, 1.7):
        assert temporal_mode(fp, 0, t) == pytest.approx(special.jv(0, 2 * t))
    assert temporal_mode(fp, 3, 0.0) == 0.0
    assert temporal_mode(fp, 0, 0.0) == 1.0
    with pytest.raises(ValidationError):
        temporal_mode(FaberParams(c0=0.0, c1=0.25), 1, 1.0)


def test_dyson_kernel_taylor_series():
    mu = MuSequence((0, -2, 0, 2, 0, -4))
    k = build_kernel(mu, basis="dyson", fp=FaberParams(delta=1.0))
    assert k.coeffs[0] == pytest.approx(-2.0)
    assert k.coeffs[2] == pytest.approx(2.0)
    assert k.coeffs[4] == pytest.approx(-4.0)
    for t in (0.01, 0.05, 0.1):
        assert kernel_eval(k, t) == pytest.approx(-2 + t**2 - t**4 / 6, abs=1e-9)


def test_kernel_at_zero_is_mu2():
    mu = MuSequence((0, -2, 0, 2, 0, -4))
    for basis in ("dyson", "faber"):
        for delta in (1.0, 0.5, 0.25):
            k = build_kernel(mu, basis=basis, fp=FaberParams(delta=delta))
            assert kernel_eval(k, 0.0) == pytest.approx(-2.0, abs=1e-12)


def test_faber_order_zero_coefficient():
    mu = MuSequence((0.0, -2.0))
    fp = FaberParams(c0=0.0, c1=-0.25, delta=0.5)
    k = build_kernel(mu, basis="faber", fp=fp)
    assert k.order == 0
    assert k.coeffs[0] == pytest.approx(0.5**2 * -2.0)


def test_dyson_delta_invariance():
    mu = MuSequence((0, -2, 0, 2, 0, -4, 0, 10))
    ka = build_kernel(mu, basis="dyson", fp=FaberParams(delta=1.0))
    kb = build_kernel(mu, basis="dyson", fp=FaberParams(delta=0.37))
    for t in np.linspace(0.0, 0.05, 6):
        assert kernel_eval(ka, t) == pytest.approx(kernel_eval(kb, t), abs=1e-8)


def test_dyson_faber_agree_near_zero():
    mu = MuSequence(mu_taylor_bessel(12))
    fp = FaberParams(delta=0.6)
    kd = build_kernel(mu, basis="dyson", fp=fp)
    kf = build_kernel(mu, basis="faber", fp=fp)
    for t in np.linspace(0.0, 0.1 * fp.delta, 7):
        assert kernel_eval(kd, t) == pytest.approx(kernel_eval(kf, t), abs=1e-6)


def mu_taylor_bessel(n: int):
    """mu_i of the kernel -2 J1(2t)/t: mu_{2m} = (-1)^m 2 C(2m-2, m-1)/m."""
    out = []
    for i in range(1, n + 1):
        if i % 2 == 1:
            out.append(0)
        else:
            m = i // 2
            out.append((-1) ** m * 2 * math.comb(2 * m - 2, m - 1) // m)
    return tuple(out)


def test_dyson_coefficients_are_kernel_derivatives():
    # Dyson K(t) = sum_q M_q t^q/q!, so M_q = K^(q)(0); check M_0, M_2, M_4
    # with order-matched central stencils of kernel_eval (K is even in t).
    mu = MuSequence(mu_taylor_bessel(10))
    k = build_kernel(mu, basis="dyson", fp=FaberParams(delta=1.0))
    h = 1e-2
    vals = np.array([kernel_eval(k, abs(j) * h) for j in range(-2, 3)])
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h**2)
    d4 = (vals[0] - 4 * vals[1] + 6 * vals[2] - 4 * vals[3] + vals[4]) / h**4
    assert k.coeffs[0] == pytest.approx(kernel_eval(k, 0.0))
    assert d2 == pytest.approx(k.coeffs[2], rel=1e-4)
    assert d4 == pytest.approx(k.coeffs[4], rel=1e-2)


def test_harmonic_faber_kernel_matches_bessel_closed_form(harmonic_setup):
    sys, mu_meas, obs = harmonic_setup
    gam = gamma_sequence(sys.operator, obs, mu_meas, 32, skew=True)
    mus = mu_sequence(gam)
    fp = estimate_scaling(gam)
    k = build_kernel(mus, basis="faber", fp=fp, obs=obs)
    t = np.linspace(0.0, 10.0, 501)
    target = np.where(t == 0, -2.0, -2 * special.jv(1, 2 * t) / np.where(t == 0, 1, t))
    assert np.max(np.abs(kernel_eval(k, t) - target)) < 0.05


def test_linear_gamma_oscillator():
    a = [[0, 1], [-1, 0]]
    mu = ProductMeasure.uniform(Gaussian(Fraction(1)), 2)
    gam = linear_gamma(a, 1, mu, 4)
    assert gam.values == (0, -1, 0, 1)


def test_linear_gamma_zero_matrix():
    mu = ProductMeasure.uniform(Gaussian(1), 3)
    gam = linear_gamma([[0] * 3] * 3, 0, mu, 5)
    assert all(v == 0 for v in gam.values)


def test_linear_gamma_cross_oracle_harmonic(harmonic_setup):
    sys, mu_meas, obs = harmonic_setup
    a = liouville_to_matrix(sys.operator)
    obs_idx = momentum_index(sys, 50)
    lin = linear_gamma(a, obs_idx, mu_meas, 8)
    poly = gamma_sequence(sys.operator, obs, mu_meas, 8, skew=False)
    assert lin.values == poly.values


def test_liouville_to_matrix_rejects_nonlinear():
    sys = fpu_chain(4, beta1=1)
    with pytest.raises(ValidationError):
        liouville_to_matrix(sys.operator)


def test_estimate_scaling_harmonic_values():
    gam = GammaSequence(HARMONIC_GAMMA, skew_adjoint=True)
    fp = estimate_scaling(gam)
    # max(2^(1/2), 6^(1/4), 20^(1/6)) = 20^(1/6)
    assert fp.delta == pytest.approx(20 ** (-1 / 6))
    assert fp.c0 == 0.0 and fp.c1 == -0.25


def test_estimate_scaling_caps_at_one():
    assert estimate_scaling(GammaSequence((0, -1))).delta == 1.0


def test_estimate_scaling_homogeneity():
    base = GammaSequence((0, -4, 0, 48))
    scaled = GammaSequence(tuple(2**j * g for j, g in enumerate(base.values, start=1)))
    d1 = estimate_scaling(base).delta
    d2 = estimate_scaling(scaled).delta
    assert d2 == pytest.approx(d1 / 2)


def test_estimate_scaling_all_zero_errors():
    with pytest.raises(ValidationError):
        estimate_scaling(GammaSequence((0, 0, 0)))


def test_skew_flag_validates_odd_entries():
    with pytest.raises(ValidationError):
        GammaSequence((1, -2), skew_adjoint=True)


def test_build_kernel_needs_two_mus():
    with pytest.raises(ValidationError):
        build_kernel(MuSequence((0.0,)))
