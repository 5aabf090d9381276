import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtnclt.dtn import (
    DtnParams,
    TnParams,
    affine,
    center,
    dtn_cdf,
    dtn_mean,
    dtn_pdf,
    dtn_quantile,
    dtn_sample,
    dtn_var,
    tn_mean,
    tn_pdf,
    tn_var,
    truncation_ratio,
    variance_factor,
)
from dtnclt.errors import DomainError
from dtnclt.numerics import ks_statistic, ks_two_sample

from oracles import quad_moments, seeded_triples

mpmath.mp.dps = 40

# phi(0) / (2 Phi(1) - 1), mpmath
PDF0_DTN011 = 0.5843685672568166
# 1 - 2 phi(1) / (2 Phi(1) - 1), mpmath
VF1 = 0.2911250947727932

params = st.builds(
    DtnParams,
    mu=st.floats(-50, 50),
    eta=st.floats(0.01, 20),
    rho=st.floats(0.01, 12),
)


def mp_variance_factor(rho):
    r = mpmath.mpf(rho)
    phi = mpmath.exp(-r * r / 2) / mpmath.sqrt(2 * mpmath.pi)
    return 1 - 2 * r * phi / mpmath.erf(r / mpmath.sqrt(2))


# -- parameter validation ----------------------------------------------------------

@pytest.mark.parametrize("args", [(0, 0, 1), (0, -1, 1), (0, 1, 0), (0, 1, -2), (math.inf, 1, 1)])
def test_dtn_params_invalid(args):
    with pytest.raises(DomainError):
        DtnParams(*args)


def test_tn_params_invalid():
    with pytest.raises(DomainError):
        TnParams(0, 1, 1, 1)
    with pytest.raises(DomainError):
        TnParams(0, 1, 40, 41)   # no representable mass


# -- general truncated Normal ------------------------------------------------------

def test_tn_pdf_zero_outside():
    p = TnParams(0.3, 1.2, -0.5, 2.0)
    assert tn_pdf(-0.6, p) == 0.0
    assert tn_pdf(2.01, p) == 0.0
    assert tn_pdf(1.0, p) > 0


def test_tn_untruncated_is_normal():
    p = TnParams(0.0, 1.0)
    assert tn_pdf(0.0, p) == pytest.approx(0.3989422804014327, abs=1e-15)
    assert tn_mean(p) == 0.0
    assert tn_var(p) == pytest.approx(1.0, abs=1e-15)


def test_tn_pdf_unit_interval():
    p = TnParams(0.0, 1.0, -1.0, 1.0)
    assert tn_pdf(0.0, p) == pytest.approx(PDF0_DTN011, abs=1e-14)


def test_tn_half_normal_moments():
    p = TnParams(0.0, 1.0, 0.0, math.inf)
    assert tn_mean(p) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-14)
    assert tn_var(p) == pytest.approx(1 - 2 / math.pi, abs=1e-14)


def test_tn_half_normal_mean_monte_carlo():
    rng = np.random.default_rng(5)
    x = np.abs(rng.standard_normal(10_000_000))
    assert x.mean() == pytest.approx(tn_mean(TnParams(0.0, 1.0, 0.0, math.inf)), abs=4 * x.std() / math.sqrt(x.size))


def test_tn_symmetric_bounds_mean():
    assert tn_mean(TnParams(2.5, 0.7, 2.5 - 1.3, 2.5 + 1.3)) == pytest.approx(2.5, abs=1e-14)


@pytest.mark.parametrize("a, b", [(-1.0, 2.0), (0.5, 3.0), (-3.0, -0.2), (1.0, math.inf)])
def test_tn_moments_match_quadrature(a, b):
    from dtnclt.numerics import adaptive_simpson

    p = TnParams(0.2, 1.5, a, b)
    hi = b if math.isfinite(b) else p.mu + 40 * p.eta
    f = lambda x: float(tn_pdf(x, p))
    assert adaptive_simpson(f, a, hi) == pytest.approx(1.0, abs=1e-9)
    mean = adaptive_simpson(lambda x: x * f(x), a, hi)
    assert tn_mean(p) == pytest.approx(mean, abs=1e-9)
    var = adaptive_simpson(lambda x: (x - mean) ** 2 * f(x), a, hi)
    assert tn_var(p) == pytest.approx(var, abs=1e-9)


# -- DTN density and CDF --------------------------------------------------------------

def test_dtn_pdf_at_mode():
    p = DtnParams(1.5, 2.0, 0.8)
    expected = 0.3989422804014327 / (2.0 * (2 * float(mpmath.ncdf(0.8)) - 1))
    assert dtn_pdf(1.5, p) == pytest.approx(expected, rel=1e-14)
    assert dtn_pdf(0.0, DtnParams(0, 1, 1)) == pytest.approx(PDF0_DTN011, abs=1e-14)


def test_dtn_pdf_symmetry_example():
    p = DtnParams(0.0, 1.0, 2.0)
    d = 0.37 * p.rho * p.eta
    assert dtn_pdf(d, p) == dtn_pdf(-d, p)


@given(params, st.floats(0, 1))
def test_dtn_pdf_symmetric_about_mu(p, frac):
    # centred at zero the reflection is exact in floating point
    c = center(p)
    d = frac * c.rho * c.eta
    assert dtn_pdf(d, c) == dtn_pdf(-d, c)


# absolute bounds in the TN view cost ~|mu| / (rho eta) ulps, so keep the
# support wide relative to the location
well_scaled = st.builds(DtnParams, mu=st.floats(-5, 5), eta=st.floats(0.1, 3), rho=st.floats(0.05, 10))


@given(well_scaled, st.floats(-60, 60))
def test_dtn_matches_tn(p, x):
    tn = p.to_tn()
    assert dtn_pdf(x, p) == pytest.approx(tn_pdf(x, tn), rel=1e-12, abs=1e-300)
    assert dtn_mean(p) == pytest.approx(tn_mean(tn), abs=1e-12 * max(1.0, abs(p.mu)) + 1e-12 * p.eta)
    assert dtn_var(p) == pytest.approx(tn_var(tn), rel=1e-10, abs=1e-12 * p.eta ** 2)


def test_dtn_pdf_outside_support():
    p = DtnParams(0.0, 1.0, 1.0)
    assert dtn_pdf(np.array([-1.0001, 1.0001, 5.0]), p).tolist() == [0.0, 0.0, 0.0]


def test_dtn_cdf_values():
    p = DtnParams(0.0, 1.0, 1.0)
    assert dtn_cdf(0.0, p) == pytest.approx(0.5, abs=1e-15)
    assert dtn_cdf(1.0, p) == 1.0
    assert dtn_cdf(-1.0, p) == 0.0
    # (Phi(0.5) - Phi(-1)) / (2 Phi(1) - 1), mpmath
    assert dtn_cdf(0.5, p) == pytest.approx(0.7804532125940016, abs=1e-14)


def test_dtn_cdf_matches_pdf_quadrature():
    from dtnclt.numerics import adaptive_simpson

    p = DtnParams(0.0, 1.0, 1.0)
    area = adaptive_simpson(lambda x: float(dtn_pdf(x, p)), -1.0, 0.5)
    assert dtn_cdf(0.5, p) == pytest.approx(area, abs=1e-10)


@given(params)
@settings(max_examples=50)
def test_dtn_cdf_monotone(p):
    x = np.linspace(p.lower - p.eta, p.upper + p.eta, 2001)
    c = dtn_cdf(x, p)
    assert np.all(np.diff(c) >= 0)
    assert c[0] == 0.0 and c[-1] == 1.0


# -- quantile -------------------------------------------------------------------------

def test_dtn_quantile_fixed_points():
    p = DtnParams(2.0, 0.5, 1.7)
    assert dtn_quantile(0.5, p) == 2.0
    assert dtn_quantile(0.0, p) == p.lower
    assert dtn_quantile(1.0, p) == p.upper


@pytest.mark.parametrize("q", [-0.01, 1.01, math.nan])
def test_dtn_quantile_domain(q):
    with pytest.raises(DomainError):
        dtn_quantile(q, DtnParams(0, 1, 1))


@given(params)
@settings(max_examples=60)
def test_dtn_quantile_round_trips(p):
    q = np.linspace(0.0, 1.0, 401)
    x = dtn_quantile(q, p)
    assert np.all((x >= p.lower) & (x <= p.upper))
    assert np.max(np.abs(dtn_cdf(x, p) - q)) <= 1e-9
    grid = np.linspace(p.lower, p.upper, 401)[1:-1]
    # cdf values within an ulp of 0 or 1 cannot be inverted
    c = dtn_cdf(grid, p)
    grid = grid[(c > 1e-14) & (c < 1 - 1e-14)]
    # one ulp of q moves x by about ulp / pdf where the density is tiny
    tol = 1e-8 * max(1.0, p.eta * p.rho) + 1e-15 / dtn_pdf(grid, p)
    assert np.all(np.abs(dtn_quantile(dtn_cdf(grid, p), p) - grid) <= tol)


def test_dtn_quantile_round_trip_unit():
    p = DtnParams(0.0, 1.0, 1.0)
    grid = np.linspace(-0.999, 0.999, 1001)
    np.testing.assert_allclose(dtn_quantile(dtn_cdf(grid, p), p), grid, atol=1e-8)


# -- moments ---------------------------------------------------------------------------

def test_dtn_mean():
    assert dtn_mean(DtnParams(5, 2, 1)) == 5
    assert dtn_mean(DtnParams(0, 3.3, 0.4)) == 0
    p = DtnParams(-1.25, 0.8, 2.2)
    assert dtn_mean(p) == pytest.approx(tn_mean(p.to_tn()), abs=1e-12)


def test_variance_factor_values():
    assert variance_factor(1.0) == pytest.approx(VF1, abs=1e-12)
    assert abs(variance_factor(40.0) - 1.0) <= 1e-12
    ratio = variance_factor(0.01) / (0.01 ** 2 / 3)
    assert 0.99 <= ratio <= 1.01


def test_variance_factor_monte_carlo():
    x = dtn_sample(DtnParams(0, 1, 1), np.random.default_rng(17), size=10_000_000)
    assert x.var() == pytest.approx(VF1, rel=2e-3)


@pytest.mark.parametrize("rho", [0.0, -1.0, math.nan])
def test_variance_factor_domain(rho):
    with pytest.raises(DomainError):
        variance_factor(rho)


@given(st.floats(1e-4, 35))
@settings(max_examples=200)
def test_variance_factor_accuracy(rho):
    assert variance_factor(rho) == pytest.approx(float(mp_variance_factor(rho)), rel=1e-11)


def test_variance_factor_series_switch_is_continuous():
    below, above = np.nextafter(0.02, 0), 0.02
    assert variance_factor(below) == pytest.approx(variance_factor(above), rel=1e-12)


def test_variance_factor_monotone_in_unit_interval():
    # strictly inside (0, 1) only while 1 - g(rho) is representable
    rho = np.linspace(0.05, 8.0, 160)
    vf = variance_factor(rho)
    assert np.all(np.diff(vf) > 0)
    assert np.all((vf > 0) & (vf < 1))
    fine = np.geomspace(1e-3, 8, 5000)
    assert np.all(np.diff(variance_factor(fine)) > 0)
    wide = np.linspace(0.05, 30, 600)
    assert np.all(np.diff(variance_factor(wide)) >= 0)


def test_truncation_ratio_strictly_decreasing():
    rho = np.concatenate([np.geomspace(1e-4, 0.0499, 200), np.linspace(0.05, 30, 600)])
    g = truncation_ratio(rho)
    assert np.all(np.diff(g) < 0)
    assert np.all((g > 0) & (g < 1))
    np.testing.assert_allclose(1.0 - g, variance_factor(rho), rtol=1e-11, atol=1e-16)


@given(st.floats(1e-4, 35))
def test_truncation_ratio_accuracy(rho):
    assert truncation_ratio(rho) == pytest.approx(float(1 - mp_variance_factor(rho)), rel=1e-12)


def test_dtn_var_values():
    assert dtn_var(DtnParams(0, 2, 1)) == pytest.approx(4 * VF1, abs=1e-12)


@given(params, st.floats(0.01, 12))
def test_dtn_var_bound_and_monotone(p, rho2):
    assert dtn_var(p) <= p.eta ** 2
    q = DtnParams(p.mu, p.eta, rho2)
    lo, hi = sorted([p, q], key=lambda d: d.rho)
    assert dtn_var(lo) <= dtn_var(hi)


def test_quadrature_moments_small_grid():
    for p in seeded_triples(n=8, seed=99):
        mass, mean, var = quad_moments(p)
        assert mass == pytest.approx(1.0, abs=1e-8)
        assert mean == pytest.approx(p.mu, abs=1e-8)
        assert var == pytest.approx(dtn_var(p), abs=1e-8)


# -- sampling --------------------------------------------------------------------------

def test_sample_support_and_determinism():
    p = DtnParams(-1.0, 0.3, 0.25)
    a = dtn_sample(p, np.random.default_rng(1), size=100_000)
    b = dtn_sample(p, np.random.default_rng(1), size=100_000)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= p.lower) & (a <= p.upper))


def test_sample_scalar():
    x = dtn_sample(DtnParams(0, 1, 1), np.random.default_rng(0))
    assert isinstance(x, float)


def test_sample_mean():
    p = DtnParams(3.0, 1.0, 2.0)
    x = dtn_sample(p, np.random.default_rng(21), size=1_000_000)
    assert abs(x.mean() - 3.0) <= 4 * math.sqrt(dtn_var(p)) / 1e3


def test_sample_variance():
    x = dtn_sample(DtnParams(0, 1, 1), np.random.default_rng(22), size=1_000_000)
    assert x.var() == pytest.approx(VF1, rel=0.01)


def test_sample_ks_against_cdf():
    p = DtnParams(0.5, 1.5, 0.9)
    x = dtn_sample(p, np.random.default_rng(23), size=100_000)
    assert ks_statistic(x, lambda v: dtn_cdf(v, p)) < 0.006


# -- structural maps --------------------------------------------------------------------

def test_center():
    assert center(DtnParams(5, 1, 1)) == DtnParams(0, 1, 1)
    p = DtnParams(-2.0, 0.4, 3.0)
    assert center(center(p)) == center(p)
    assert dtn_mean(center(p)) == 0


def test_affine_examples():
    out = affine(DtnParams(0, 1, 2), 3, -2)
    assert out == DtnParams(3, 2, 2)
    assert out.eta ** 2 == 4
    p = DtnParams(0, 1.7, 0.6)
    assert affine(p, 0, 1) == p


def test_affine_errors():
    with pytest.raises(DomainError):
        affine(DtnParams(0, 1, 1), 1, 0)
    with pytest.raises(DomainError):
        affine(DtnParams(1, 1, 1), 1, 2)


def test_affine_distribution():
    base = DtnParams(0, 1, 2)
    transformed = 3 - 2 * dtn_sample(base, np.random.default_rng(31), size=1_000_000)
    direct = dtn_sample(affine(base, 3, -2), np.random.default_rng(32), size=1_000_000)
    assert ks_two_sample(transformed, direct) < 0.005
