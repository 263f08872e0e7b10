import math
import time

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trisplit.errors import EmptyInterval
from trisplit.linop import DenseOperator, Spectrum
from trisplit.tuning import (SolverParams, beta_lower_bound, derive_constants, discriminant,
                             select_parameters, tau_interval, validate)


def oracle_constants(norm, lam, L, mu, beta, tau, sigma, c_l=None):
    """Second transcription of the constants, in 40-digit arithmetic."""
    with mpmath.workdps(40):
        norm, lam, L, mu, beta, tau, sigma = map(mpmath.mpf, (norm, lam, L, mu, beta, tau, sigma))
        r2 = mpmath.sqrt(2)
        c0 = 4 * (1 - sigma) / (sigma**2 * beta * lam)
        c1 = 8 * (sigma * tau + L * r2) ** 2 / (sigma * beta * lam)
        c2 = (tau - (L * r2 + beta * norm**2) / 2 - 4 * sigma * tau**2 / (beta * lam)
              - 8 * (sigma * tau + L * r2) ** 2 / (sigma * beta * lam))
        c3 = (mu - L * r2) / 2 - 16 * L**2 / (sigma * beta * lam)
        c4 = 1 / (sigma * beta)
        c5 = 2 * r2 * L + tau + beta * norm + 4 * (sigma * tau + norm) * sigma * tau * c0 + 4 * c1
        c6 = L * r2 + mu
        c7 = 1 + 1 / (sigma * beta) + (2 / sigma - 1) * norm + 4 * (sigma * tau + norm) * c0 * norm
        c8 = 1 / min(c2, c3, c4)
        c9 = max(c5, c6, c7)
        out = dict(c0=c0, c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, c8=c8, c9=c9)
        if c8 > 0:
            c11 = 2 * mpmath.sqrt(3 * c8) + 3 * c8 * c9
            out.update(c11=c11, c12=(norm + 2 / (sigma * beta)) * c11)
        if c_l is not None:
            out["c10"] = c8 / (3 * (mpmath.mpf(c_l) * c9) ** 2)
        return {k: float(v) for k, v in out.items()}


def test_c4_example():
    c = derive_constants(Spectrum(1.0, 1.0, 1.0), 1.0, SolverParams(mu=1, beta=50, tau=30, sigma=0.02))
    assert c.c4 == pytest.approx(1.0, rel=1e-15)


def test_c0_vanishes_at_sigma_one():
    c = derive_constants(Spectrum(1.0, 1.0, 1.0), 1.0, SolverParams(mu=1, beta=2, tau=3, sigma=1.0))
    assert c.c0 == 0.0
    c = derive_constants(Spectrum(1.0, 1.0, 1.0), 1.0, SolverParams(mu=1, beta=2, tau=3, sigma=0.5))
    assert c.c0 > 0


def test_gamma_flags_example():
    # beta * lambda_min = 10 and ell = L sqrt 2 = 2
    c = derive_constants(Spectrum(1.0, 1.0, 1.0), math.sqrt(2.0), SolverParams(mu=1, beta=10, tau=1, sigma=0.5))
    assert c.ell_plus == pytest.approx(2.0)
    assert c.gamma1_exists and c.gamma2_exists
    c = derive_constants(Spectrum(1.0, 1.0, 1.0), math.sqrt(2.0), SolverParams(mu=1, beta=6, tau=1, sigma=0.5))
    assert c.gamma1_exists and not c.gamma2_exists


@settings(max_examples=80, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.05, 5), st.floats(1.0, 50.0), st.floats(0.01, 100),
       st.floats(0.01, 1000), st.floats(0.01, 1000), st.floats(1e-3, 1.0), st.floats(0.1, 5))
def test_constants_match_oracle(norm, lam_frac, _, L, beta, tau, sigma, c_l):
    lam = min(lam_frac, 1.0) * norm**2
    spec = Spectrum(norm, lam, norm**2 / lam)
    mu = 3.0 * L
    c = derive_constants(spec, L, SolverParams(mu, beta, tau, sigma), lojasiewicz_constant=c_l)
    ref = oracle_constants(norm, lam, L, mu, beta, tau, sigma, c_l)
    if c.c8 < 0:
        assert math.isnan(c.c11)
    for key, value in ref.items():
        got = getattr(c, key)
        assert got == pytest.approx(value, rel=1e-9, abs=1e-12 * max(1.0, abs(c.c5))), key


def test_c10_only_with_lojasiewicz_constant():
    params = SolverParams(mu=20, beta=150, tau=250, sigma=0.02)
    assert derive_constants(Spectrum(1, 1, 1), 1.0, params).c10 is None
    c = derive_constants(Spectrum(1, 1, 1), 1.0, params, lojasiewicz_constant=2.0)
    assert c.c10 == pytest.approx(c.c8 / (3 * (2.0 * c.c9) ** 2))


def test_select_parameters_identity_example():
    spec = DenseOperator.identity(2).spectrum
    L = 1 / math.sqrt(2)  # nu = 1
    p = select_parameters(spec, L, safety=0.5)
    assert p.sigma == pytest.approx(1 / 48, rel=1e-15)
    s = 1 / 48
    beta_low = 4 / (1 - 24 * s) * (4 + 3 * s + math.sqrt(24 + 24 * s + 9 * s**2 - 192 * s))
    # 8 * (4.0625 + sqrt(20.50390625))
    assert beta_low == pytest.approx(8 * (4.0625 + math.sqrt(20.50390625)), rel=1e-14)
    assert p.beta == pytest.approx(1.5 * beta_low, rel=1e-14)
    assert discriminant(1.0, p.beta, p.sigma, 1.0) > 0
    # regression fixture
    assert p.beta == pytest.approx(103.087487060, rel=1e-9)
    assert 2 * p.tau >= p.beta
    c = derive_constants(spec, L, p)
    assert validate(p, c, spec).admissible


def test_beta_lower_bound_is_discriminant_root():
    # at beta = lower bound the discriminant vanishes
    for nu, sigma, kappa in [(1.0, 0.01, 1.0), (3.0, 0.002, 10.0), (0.2, 0.03, 1.2)]:
        b = beta_lower_bound(nu, sigma, kappa)
        assert discriminant(nu, b, sigma, kappa) == pytest.approx(0.0, abs=1e-12)
        assert discriminant(nu, 1.01 * b, sigma, kappa) > 0
        assert discriminant(nu, 0.99 * b, sigma, kappa) < 0


def test_validate_small_tau_fails():
    spec = Spectrum(1.0, 1.0, 1.0)
    p = select_parameters(spec, 1.0)
    bad = SolverParams(p.mu, p.beta, p.beta / 4, p.sigma)
    report = validate(bad, derive_constants(spec, 1.0, bad), spec)
    assert not report.checks["2tau>=beta*normA^2"]
    assert not report.admissible


def test_validate_large_sigma_outside_region():
    spec = Spectrum(1.0, 1.0, 1.0)
    p = SolverParams(mu=50, beta=200, tau=300, sigma=0.05)
    c = derive_constants(spec, 1.0, p)
    report = validate(p, c, spec)
    assert not report.sufficient_region["sigma<1/(24kappa)"]
    assert not report.in_sufficient_region
    # with ell = L sqrt 2 the closed-form region coincides with C2 > 0, so this fails too
    assert c.c2 <= 0
    assert not report.checks["c2>0"]


@settings(max_examples=150, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(0.1, 10), st.floats(1e-4, 0.2), st.floats(0.1, 1e4),
       st.floats(0.01, 1e5), st.floats(0.1, 1e3))
def test_region_and_assumption_agree(kappa, L, sigma, beta, tau, mu):
    spec = Spectrum(math.sqrt(kappa), 1.0, kappa)
    p = SolverParams(mu, beta, tau, sigma)
    c = derive_constants(spec, L, p)
    report = validate(p, c, spec)
    # away from the boundary both descriptions of the parameter region agree
    if min(abs(c.c2), abs(c.c3)) > 1e-6 * max(1.0, tau):
        assert report.admissible == report.in_sufficient_region


def test_c2_positivity_equals_quadratic_inequality():
    spec = Spectrum(2.0, 0.5, 8.0)
    L = 0.7
    p = select_parameters(spec, L)
    lo, hi = tau_interval(spec, L, p.beta, p.sigma)
    ell, nu = L * math.sqrt(2), L * math.sqrt(2) / 0.5
    for tau in np.linspace(0.5 * lo, 1.5 * hi, 41):
        c = derive_constants(spec, L, SolverParams(p.mu, p.beta, tau, p.sigma))
        quad = (24 * p.sigma * tau**2 / (p.beta * 0.5) - 2 * (1 - 16 * nu / p.beta) * tau
                + 16 * ell**2 / (p.sigma * p.beta * 0.5) + ell + p.beta * 4.0)
        # C2 = -quad / 2 after multiplying out, so the signs are opposite
        assert (c.c2 > 0) == (quad < 0)
        # C2 is concave in tau and positive exactly inside the interval
        assert (c.c2 > 0) == (lo < tau < hi) or abs(c.c2) < 1e-9 * tau


@pytest.mark.parametrize("safety", [0.1, 0.5, 0.9])
def test_select_parameters_properties(safety):
    rng = np.random.default_rng(int(safety * 10))
    for _ in range(20):
        m = int(rng.integers(1, 8))
        p_rows = int(rng.integers(1, m + 1))
        op = DenseOperator(rng.standard_normal((p_rows, m)))
        L = float(rng.uniform(0.1, 10))
        params = select_parameters(op, L, safety)
        c = derive_constants(op, L, params)
        report = validate(params, c, op)
        assert report.admissible and report.in_sufficient_region
        assert c.gamma1_exists and c.gamma2_exists
        assert c.delta_tau_prime > 0
        assert params.beta > 4 * c.nu


def test_select_parameters_bad_inputs():
    spec = Spectrum(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        select_parameters(spec, 1.0, safety=1.0)
    with pytest.raises(ValueError):
        select_parameters(spec, 0.0)
    assert issubclass(EmptyInterval, Exception)


def test_solver_params_invariants():
    with pytest.raises(ValueError):
        SolverParams(1, 1, 1, 0.0)
    with pytest.raises(ValueError):
        SolverParams(1, 1, 1, 1.5)
    with pytest.raises(ValueError):
        SolverParams(-1, 1, 1, 0.5)
    SolverParams(1, 1, 1, 1.0)


def test_two_hundred_random_operators_fast():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        m = int(rng.integers(1, 21))
        p = int(rng.integers(1, m + 1))
        op = DenseOperator(rng.standard_normal((p, m)))
        L = float(rng.uniform(0.1, 10))
        params = select_parameters(op, L)
        c = derive_constants(op, L, params)
        assert validate(params, c, op).admissible
    assert time.perf_counter() - start < 5.0
