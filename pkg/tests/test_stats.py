import csv
import math

import numpy as np
import pytest

from arctanlaw import laws
from arctanlaw.errors import DomainError
from arctanlaw.stats import compare, default_grid, dkw_band, ecdf, ks_one_sample, ks_two_sample, log_grid


def test_ecdf_examples():
    assert ecdf([1, 2, 3]).eval(2) == pytest.approx(2 / 3)
    e = ecdf([1.0], valid_range=10.0, censored=1)
    assert e.eval(5) == 0.5
    assert e.censored_fraction == 0.5
    assert ecdf([1, 2, 3]).eval(0) == 0.0


def test_ecdf_nan_and_mask_count_as_censored():
    e = ecdf([1.0, np.nan, 3.0, 4.0], valid_range=5.0, censored=[False, False, False, True])
    assert e.n_total == 4 and e.n_censored == 2
    assert e.eval(5.0) == 0.5


def test_ecdf_range_and_monotonicity():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=500)
    x[x > 3] = np.nan
    e = ecdf(x, valid_range=3.0)
    t = np.linspace(0, 3, 301)
    F = e.eval(t)
    assert np.all(np.diff(F) >= 0)
    assert F[-1] == pytest.approx(1 - e.censored_fraction)
    with pytest.raises(DomainError):
        e.eval(3.5)
    with pytest.raises(DomainError):
        ecdf([])


def test_ks_one_sample_on_quantiles():
    n = 400
    q = (np.arange(1, n + 1) - 0.5) / n
    # quantiles of the BM law with r=1: t = tan(pi q / 2)^2
    e = ecdf(np.tan(np.pi * q / 2) ** 2)
    t = log_grid(1e-3, 1e3)
    assert ks_one_sample(e, lambda s: laws.bm_cdf(s, 1.0), t) <= 1 / (2 * n) + 1e-12


def test_ks_one_sample_against_zero_law():
    e = ecdf([0.1, 0.2, 0.3, 5.0])
    assert ks_one_sample(e, lambda t: np.zeros_like(t), [1.0, 2.0]) == 0.75


def test_ks_one_sample_symmetry():
    t = np.linspace(0.1, 10, 50)
    f = lambda s: laws.bm_cdf(s, 1.0)
    g = lambda s: laws.bm_cdf(s, 2.0)
    d1 = np.max(np.abs(f(t) - g(t)))
    assert d1 == pytest.approx(np.max(np.abs(g(t) - f(t))))


def test_ks_grid_outside_valid_range():
    e = ecdf([1.0, 2.0], valid_range=3.0)
    with pytest.raises(DomainError):
        ks_one_sample(e, lambda t: t, [1.0, 4.0])
    with pytest.raises(DomainError):
        ks_two_sample(e, ecdf([1.0], valid_range=2.0), [2.5])


def test_ks_two_sample_examples():
    x = np.random.default_rng(1).exponential(size=300)
    t = np.linspace(0, 5, 100)
    assert ks_two_sample(ecdf(x), ecdf(x.copy()), t) == 0.0
    a = ecdf(np.full(100, 1.0))
    b = ecdf(np.full(100, 10.0))
    assert ks_two_sample(a, b, t) == 1.0


def test_dkw_band_examples():
    assert dkw_band(10**5, 0.01) == pytest.approx(0.00515, abs=5e-6)
    assert dkw_band(1, 0.5) == pytest.approx(math.sqrt(math.log(4) / 2))
    assert dkw_band(1, 0.5) == pytest.approx(0.8326, abs=1e-4)
    assert dkw_band(10**12, 0.01) < 2e-6
    for bad in [(0, 0.1), (10, 0.0), (10, 1.0)]:
        with pytest.raises(DomainError):
            dkw_band(*bad)


def test_dkw_coverage_over_seed_replicates():
    n = 1000
    band = dkw_band(n, 0.01)
    t = log_grid(1e-3, 1e3)
    F = lambda s: laws.bm_cdf(s, 1.0)
    inside = 0
    for seed in range(100):
        u = np.random.default_rng(seed).uniform(size=n)
        e = ecdf(np.tan(np.pi * u / 2) ** 2)
        inside += ks_one_sample(e, F, t) <= band
    assert inside >= 99


def test_log_grid_endpoints():
    g = log_grid(1e-3, 10.0, 200)
    assert g[0] == 1e-3 and g[-1] == 10.0 and g.size == 200
    assert np.all(np.diff(np.log(g)) > 0)
    assert default_grid(ecdf([1.0], valid_range=20.0), 1e-3)[-1] == 20.0
    with pytest.raises(DomainError):
        log_grid(0.0, 1.0)


def test_comparison_csv(tmp_path):
    e = ecdf([0.5, 1.5, 2.5, np.nan], valid_range=3.0)
    t = np.array([1.0, 2.0, 3.0])
    bp = laws.BoundPair(1.0, lambda s: np.asarray(s, float) / 4, lambda s: 9 * np.asarray(s, float) / 4)
    c = compare(e, t, analytic=lambda s: laws.bm_cdf(s, 1.0), lower=bp.lower, upper=bp.upper)
    assert np.all(np.isnan(c.lower_env))
    np.testing.assert_allclose(c.abs_gap, np.abs(e.eval(t) - laws.bm_cdf(t, 1.0)))
    dest = tmp_path / "c.csv"
    c.to_csv(dest)
    rows = list(csv.reader(dest.open()))
    assert rows[0] == ["t", "empirical", "analytic", "lower_env", "upper_env", "abs_gap"]
    assert rows[1][0] == "1" and rows[1][1] == "0.25" and rows[1][3] == "NA"
    band = compare(e, t, other=e, band=0.1)
    np.testing.assert_allclose(band.upper_env - band.lower_env, 0.2)
