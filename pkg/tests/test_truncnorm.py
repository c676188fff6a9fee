import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from metrocrowd import truncnorm as tn
from metrocrowd.truncnorm import TruncNormParams


def mp_mass(mu, sigma, a, b):
    mpmath.mp.dps = 50
    r2 = mpmath.sqrt(2)
    return (mpmath.erfc((a - mu) / (sigma * r2)) - mpmath.erfc((b - mu) / (sigma * r2))) / 2


def random_params(rng, n):
    out = []
    for _ in range(n):
        a = rng.uniform(0, 5)
        b = a + rng.uniform(0.3, 10)
        mu = rng.uniform(a - 3, b + 3)
        sigma = rng.uniform(0.2, 4)
        out.append(TruncNormParams(mu, sigma, a, b))
    return out


params_st = st.builds(
    lambda a, w, m, s: TruncNormParams(a + m * w, s, a, a + w),
    st.floats(0, 20), st.floats(0.1, 15), st.floats(-0.5, 1.5), st.floats(0.05, 5),
)


def test_pdf_outside_support_is_zero():
    assert tn.pdf_arr(2.0, 0.0, 1.0, -1.0, 1.0) == 0.0
    p = TruncNormParams(3, 1, 1, 5)
    assert tn.pdf(p, 0.5) == 0.0 and tn.pdf(p, 5.5) == 0.0


def test_pdf_center_matches_high_precision():
    mpmath.mp.dps = 40
    ref = mpmath.npdf(0) / (mpmath.ncdf(1) - mpmath.ncdf(-1))
    got = tn.pdf_arr(0.0, 0.0, 1.0, -1.0, 1.0)
    assert abs(got - float(ref)) < 1e-12
    assert got == pytest.approx(0.5844, abs=1e-4)


def test_std_cdf_accuracy():
    mpmath.mp.dps = 40
    for z in np.linspace(-8, 8, 81):
        assert abs(tn.std_cdf(z) - float(mpmath.ncdf(z))) < 1e-12


def test_pdf_integrates_to_one(rng):
    for p in random_params(rng, 100):
        val, _ = integrate.quad(lambda x: tn.pdf(p, x), p.a, p.b, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert abs(val - 1) < 1e-9


def test_cdf_boundaries_and_symmetry():
    p = TruncNormParams(4, 2, 1, 9)
    assert tn.cdf(p, p.a) == 0.0
    assert tn.cdf(p, p.b) == 1.0
    assert tn.cdf(p, -3) == 0.0 and tn.cdf(p, 30) == 1.0
    assert tn.cdf_arr(0.0, 0.0, 1.0, -1.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_cdf_differences_match_quadrature(rng):
    for p in random_params(rng, 100):
        x1, x2 = np.sort(rng.uniform(p.a, p.b, 2))
        val, _ = integrate.quad(lambda x: tn.pdf(p, x), x1, x2, epsabs=1e-13, epsrel=1e-13)
        assert abs((tn.cdf(p, x2) - tn.cdf(p, x1)) - val) < 1e-8


def test_cdf_derivative_is_pdf(rng):
    h = 1e-5
    for p in random_params(rng, 50):
        x = rng.uniform(p.a + 2 * h, p.b - 2 * h)
        fd = (tn.cdf(p, x + h) - tn.cdf(p, x - h)) / (2 * h)
        assert abs(fd - tn.pdf(p, x)) < 1e-6


def test_degenerate_normalizer_is_an_error():
    with pytest.raises(tn.DegenerateDistributionError):
        tn.pdf(TruncNormParams(0.0, 0.01, 100.0, 101.0), 100.5)
    with pytest.raises(tn.DegenerateDistributionError):
        tn.sample(TruncNormParams(0.0, 0.01, 100.0, 101.0), np.random.default_rng(0))


def test_far_tail_mass_is_stable():
    # both bounds far in the upper tail; naive Phi(b)-Phi(a) would cancel to 0
    lm = tn.log_mass_arr(0.0, 1.0, 30.0, 31.0)
    assert abs(lm - float(mpmath.log(mp_mass(0, 1, 30, 31)))) < 1e-9


@pytest.mark.parametrize("bad", [dict(sigma=0.0), dict(sigma=-1.0), dict(a=5.0, b=5.0), dict(a=-1.0)])
def test_params_validation(bad):
    kw = dict(mu=3.0, sigma=1.0, a=1.0, b=5.0) | bad
    with pytest.raises(ValueError):
        TruncNormParams(**kw)


def analytic_mean(p):
    mpmath.mp.dps = 30
    al, be = (p.a - p.mu) / p.sigma, (p.b - p.mu) / p.sigma
    z = mpmath.ncdf(be) - mpmath.ncdf(al)
    return float(p.mu + p.sigma * (mpmath.npdf(al) - mpmath.npdf(be)) / z)


def test_sample_mean_matches_analytic_mean():
    p = TruncNormParams(5, 1, 3, 7)
    x = tn.sample(p, np.random.default_rng(2024), 100_000)
    assert np.all((x >= p.a) & (x <= p.b))
    assert abs(x.mean() - analytic_mean(p)) < 0.02
    assert abs(p.mean() - analytic_mean(p)) < 1e-12


def test_sample_is_reproducible_and_scalar_without_size():
    p = TruncNormParams(2, 0.5, 1, 4)
    a = tn.sample(p, np.random.default_rng(5), 10)
    b = tn.sample(p, np.random.default_rng(5), 10)
    assert np.array_equal(a, b)
    assert isinstance(tn.sample(p, np.random.default_rng(5)), float)


def test_sample_in_one_sided_tail_stays_in_support():
    p = TruncNormParams(0.0, 1.0, 8.0, 9.0)
    x = tn.sample(p, np.random.default_rng(1), 10_000)
    assert np.all((x >= 8.0) & (x <= 9.0))
    assert abs(x.mean() - analytic_mean(p)) < 0.01


def test_sum_approx_examples():
    one = TruncNormParams(3, 1, 1, 5)
    assert tn.sum_approx([one]) == one
    s = tn.sum_approx([TruncNormParams(3, 1, 1, 5), TruncNormParams(4, 2, 2, 8)])
    assert (s.mu, s.a, s.b) == (7, 3, 13)
    assert s.sigma == pytest.approx(math.sqrt(5), abs=1e-15)
    with pytest.raises(ValueError):
        tn.sum_approx([])


@settings(max_examples=60, deadline=None)
@given(st.lists(params_st, min_size=2, max_size=6), st.randoms(use_true_random=False))
def test_sum_approx_order_independent_and_associative(parts, rnd):
    whole = tn.sum_approx(parts)
    shuffled = list(parts)
    rnd.shuffle(shuffled)
    again = tn.sum_approx(shuffled)
    k = len(parts) // 2
    nested = tn.sum_approx([tn.sum_approx(parts[:k]) if k > 1 else parts[0],
                            tn.sum_approx(parts[k:]) if len(parts) - k > 1 else parts[-1]])
    for other in (again, nested):
        assert other.mu == pytest.approx(whole.mu, abs=1e-9)
        assert other.sigma == pytest.approx(whole.sigma, rel=1e-12)
        assert other.a == pytest.approx(whole.a, abs=1e-9)
        assert other.b == pytest.approx(whole.b, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(params_st, st.lists(st.floats(-5, 60), min_size=2, max_size=20))
def test_pdf_nonnegative_and_cdf_monotone(p, xs):
    assume(tn.log_mass_arr(p.mu, p.sigma, p.a, p.b) > math.log(tn.DEGENERATE_NORMALIZER))
    xs = np.sort(np.array(xs))
    pdf = tn.pdf_arr(xs, p.mu, p.sigma, p.a, p.b)
    cdf = tn.cdf_arr(xs, p.mu, p.sigma, p.a, p.b)
    assert np.all(pdf >= 0)
    assert np.all(pdf[(xs < p.a) | (xs > p.b)] == 0)
    assert np.all(np.diff(cdf) >= -1e-15)
    assert np.all((cdf >= 0) & (cdf <= 1))


def test_loglik_gradients_match_finite_differences(rng):
    """d log pdf / d mu and d log pdf / d var against central differences (so pdf partials follow)."""
    worst = 0.0
    for p in random_params(rng, 100):
        x = rng.uniform(p.a, p.b)
        var = p.sigma ** 2
        _, g_mu, g_var = tn.loglik_grads_arr(x, p.mu, var, p.a, p.b)
        f = lambda m, v: float(tn.logpdf_arr(x, m, math.sqrt(v), p.a, p.b))  # noqa: E731
        h_mu, h_var = 1e-5 * max(1, abs(p.mu)), 1e-6 * var
        fd_mu = (f(p.mu + h_mu, var) - f(p.mu - h_mu, var)) / (2 * h_mu)
        fd_var = (f(p.mu, var + h_var) - f(p.mu, var - h_var)) / (2 * h_var)
        for an, fd in ((g_mu, fd_mu), (g_var, fd_var)):
            err = abs(an - fd) / max(abs(fd), 1e-3)
            worst = max(worst, err)
    assert worst < 1e-5


def test_loglik_outside_support():
    ll, g_mu, g_var = tn.loglik_grads_arr(np.array([0.5, 6.0]), 3.0, 1.0, 1.0, 5.0)
    assert np.all(np.isneginf(ll)) and np.all(g_mu == 0) and np.all(g_var == 0)


def test_sum_approx_ks_distance_on_fixture_ranges(scenario):
    """Exact sums of link draws vs the route-level approximation, on every fixture route shape."""
    rng = np.random.default_rng(77)
    worst = 0.0
    rs = scenario.route_sets()
    checked = 0
    for od in [("EW1", "EW4"), ("EW2", "EW3"), ("EW1", "CC3"), ("CC2", "EW4"), ("CC1", "CC4")]:
        for route in rs[od].routes:
            parts = [scenario.planted[l] for l in route.links]
            total = sum(tn.sample(p, rng, 200_000) for p in parts)
            approx = tn.sum_approx(parts)
            d = stats.kstest(total, lambda x: tn.cdf_arr(x, approx.mu, approx.sigma, approx.a, approx.b)).statistic
            worst = max(worst, d)
            checked += 1
    assert checked >= 6
    assert worst < 0.05
