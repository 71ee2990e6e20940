import csv
import math

import numpy as np
import pytest

from arctanlaw import laws
from arctanlaw.catalog import DiffusionSpec, TimeChange, get_entry, scale_function, timechanged_spec
from arctanlaw.errors import ConfigError, DomainError, TabulationRangeError
from arctanlaw.pathsim import (
    PathGrid,
    SamplerConfig,
    empirical_rho,
    monte_carlo,
    occupation_time_positive,
    running_extrema,
    sample_S,
    sample_theta,
    sample_two_interval_S,
    sample_U,
    simulate_path,
)


def grid(values, dt=1.0):
    return PathGrid(dt, np.array(values, dtype=float))


# -- configuration ---------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(dt=0.0), dict(dt=2.0, horizon=1.0), dict(n_paths=0), dict(n_paths=1.5), dict(seed=-1), dict(scheme="milstein")],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SamplerConfig(**kw)


def test_scheme_must_match_spec():
    with pytest.raises(ConfigError):
        simulate_path("bm", SamplerConfig(dt=0.1, horizon=1, n_paths=1, scheme="exact_integrated_bm"), 0)
    with pytest.raises(ConfigError):
        simulate_path("bounded_sigma", SamplerConfig(dt=0.1, horizon=1, n_paths=1, scheme="exact_bm"), 0)
    with pytest.raises(ConfigError):
        simulate_path("integrated_bm", SamplerConfig(dt=0.1, horizon=1, n_paths=1, scheme="euler"), 0)
    with pytest.raises(ConfigError):
        simulate_path("bm", SamplerConfig(dt=0.1, horizon=1, n_paths=1, scheme="exact_clock_bm"), 0)


# -- single-path functionals -----------------------------------------------


def test_running_extrema_examples():
    assert running_extrema(grid([0, 2, 1, 3]), 2) == (2.0, 0.0)
    assert running_extrema(grid([1, 2, 3, 4]), 3) == (4.0, 1.0)
    assert running_extrema(grid([7, 7, 7]), 2) == (7.0, 7.0)
    with pytest.raises(DomainError):
        running_extrema(grid([0, 1]), 2)


def test_sample_S_examples():
    assert sample_S(grid([0, 2, 1, 3]), 1) == 0.0
    assert sample_S(grid([0, 2, 1, 3]), 2) == 1.0
    assert sample_S(grid([3, 2, 1, 0]), 1) is None
    with pytest.raises(DomainError):
        sample_S(grid([0, 1]), 5)


def test_sample_theta_examples():
    assert sample_theta(grid([1, 2, 3, 4]), 3) == 3.0
    assert sample_theta(grid([0, 2, 1, 2]), 3) == 1.0
    assert sample_theta(grid([5, 5, 5]), 2) == 0.0


def test_sample_U_regains_the_minimum():
    # U is the first time after r at which X comes back down to its running minimum
    assert sample_U(grid([3, 2, 1, 0]), 1) == 0.0
    assert sample_U(grid([0, 2, 1, 3]), 2) is None
    assert sample_U(grid([0, 2, 1, -1]), 2) == 1.0
    assert sample_U(grid([0, 1, -5, -5]), 2) == 0.0
    assert sample_U(grid([0, 1, 2, 3]), 2) is None


def test_U_is_S_of_the_reflected_path():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = np.cumsum(rng.standard_normal(60))
        assert sample_U(grid(v), 20) == sample_S(grid(-v), 20)


def test_two_interval_examples():
    p = grid([5, 0, 1, 2, 6])
    # the window maximum 2 is attained at r2 = 3 itself, so the hit is immediate
    assert sample_two_interval_S(p, 1, 3) == 0.0
    assert sample_two_interval_S(grid([5, 0, 3, 2, 6]), 1, 3) == 1.0
    assert sample_two_interval_S(p, 0, 3) == 1.0
    rng = np.random.default_rng(4)
    v = grid(np.cumsum(rng.standard_normal(80)))
    assert sample_two_interval_S(v, 0, 30) == sample_S(v, 30)
    with pytest.raises(DomainError):
        sample_two_interval_S(p, 3, 1)


def test_occupation_examples():
    assert occupation_time_positive(grid([1, 2, 3], dt=1), 2) == 2.0
    assert occupation_time_positive(grid([-1, -2, -3]), 2) == 0.0
    assert occupation_time_positive(grid([1, -1, 1, -1, 1]), 4) == 2.0


def test_empirical_rho_bm_is_time():
    p = simulate_path("bm", SamplerConfig(dt=0.01, horizon=5, n_paths=1, scheme="exact_bm"), 3)
    e = get_entry("bm")
    rho = empirical_rho(p, e.scale, e.spec.diffusion)
    np.testing.assert_allclose(rho, p.times, rtol=1e-12, atol=1e-12)


def test_empirical_rho_feller_with_conjugation_map_is_linear():
    e = get_entry("feller")
    p = simulate_path(e, SamplerConfig(dt=0.01, horizon=5, n_paths=1, scheme="euler"), 1)
    rho = empirical_rho(p, e.mapping, e.spec.diffusion)
    np.testing.assert_allclose(rho, p.times, rtol=1e-12, atol=1e-12)


def test_empirical_rho_bounded_sigma_between_envelopes():
    e = get_entry("bounded_sigma")
    cfg = SamplerConfig(dt=0.01, horizon=10, n_paths=1)
    for i in range(10):
        p = simulate_path(e, cfg, i)
        rho = empirical_rho(p, e.scale, e.spec.diffusion)
        assert np.all(e.timechange.alpha(p.times) <= rho + 1e-12)
        assert np.all(rho <= e.timechange.beta(p.times) + 1e-12)
        assert np.all(np.diff(rho) >= 0)


def test_empirical_rho_outside_table():
    e = get_entry("bm")
    with pytest.raises(TabulationRangeError):
        empirical_rho(grid([0.0, 500.0, 0.0]), e.scale, e.spec.diffusion)


# -- simulation ------------------------------------------------------------


def test_degenerate_sde_gives_constant_path():
    spec = DiffusionSpec("frozen", lambda x: 0 * np.asarray(x, float), lambda x: 0 * np.asarray(x, float), eta=5.0)
    p = simulate_path(spec, SamplerConfig(dt=0.1, horizon=3, n_paths=1), 0)
    assert np.all(p.values == 5.0)


def test_simulate_path_is_deterministic():
    cfg = SamplerConfig(dt=0.01, horizon=2, n_paths=1, seed=99, scheme="exact_bm")
    a = simulate_path("bm", cfg, 7)
    b = simulate_path("bm", cfg, 7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, simulate_path("bm", cfg, 8).values)
    cfg2 = SamplerConfig(dt=0.01, horizon=2, n_paths=1, seed=100, scheme="exact_bm")
    assert not np.array_equal(a.values, simulate_path("bm", cfg2, 7).values)


def test_exact_bm_increments_are_standard_normal():
    p = simulate_path("bm", SamplerConfig(dt=0.5, horizon=20000, n_paths=1, scheme="exact_bm"), 0)
    inc = np.diff(p.values) / math.sqrt(0.5)
    assert abs(inc.mean()) < 4 / math.sqrt(inc.size)
    assert abs(inc.var() - 1) < 4 * math.sqrt(2 / inc.size)


def test_integrated_bm_variance_one_third():
    cfg = SamplerConfig(dt=0.05, horizon=1.0, n_paths=1, seed=11, scheme="exact_integrated_bm")
    n = 100_000
    x1 = np.array([simulate_path("integrated_bm", cfg, i).values[-1] for i in range(n)])
    var = x1.var(ddof=1)
    se = math.sqrt(2 / (n - 1)) / 3
    assert abs(var - 1 / 3) <= 3 * se


def test_exact_clock_bm_variance_follows_clock():
    cfg = SamplerConfig(dt=0.1, horizon=2.0, n_paths=1, seed=5, scheme="exact_clock_bm")
    n = 20_000
    x = np.array([simulate_path("clock_bm", cfg, i).values[-1] for i in range(n)])
    assert abs(x.var(ddof=1) - 8 / 3) <= 4 * (8 / 3) * math.sqrt(2 / n)


def test_clamped_paths_stay_inside():
    for name in ("feller", "wright_fisher"):
        e = get_entry(name)
        for i in range(5):
            p = simulate_path(e, SamplerConfig(dt=0.01, horizon=50, n_paths=1), i)
            assert np.all(e.spec.interval.contains(p.values))


def test_conjugated_exact_route_matches_closed_form_solution():
    e = get_entry("feller")
    cfg = SamplerConfig(dt=0.01, horizon=3, n_paths=1, seed=2, scheme="exact_bm")
    p = simulate_path(e, cfg, 0)
    b = simulate_path("bm", SamplerConfig(dt=0.01, horizon=3, n_paths=1, seed=2, scheme="exact_bm"), 0).values
    # same stream, so v(X) - v(eta) is the Brownian path until X first hits 0
    y = b + 2 * math.sqrt(25.0)
    first_zero = np.argmax(y <= 0) if np.any(y <= 0) else y.size
    np.testing.assert_allclose(p.values[:first_zero], y[:first_zero] ** 2 / 4, rtol=1e-6)


def test_leaving_the_table_reports_path_index():
    w = scale_function(get_entry("gbm").spec, 1.0, window=(0.9, 1.1))
    spec = timechanged_spec("narrow", w, TimeChange.linear(), eta=1.0)
    cfg = SamplerConfig(dt=0.01, horizon=5, n_paths=3)
    with pytest.raises(TabulationRangeError, match="path 0"):
        simulate_path(spec, cfg, 0)
    with pytest.raises(TabulationRangeError, match="path 0"):
        monte_carlo(spec, cfg, 1.0)


# -- Monte Carlo -----------------------------------------------------------


@pytest.mark.parametrize("name", ["bm", "feller", "wright_fisher", "gbm", "bounded_sigma", "integrated_bm", "clock_bm"])
def test_single_path_monte_carlo_equals_direct_extraction(name):
    e = get_entry(name)
    cfg = SamplerConfig(dt=0.01, horizon=12, n_paths=1, seed=31, scheme=e.scheme)
    ss = monte_carlo(e, cfg, 1.0, ("S", "U", "theta", "occupation", "two_interval"), r1=0.5, r2=2.0)
    p = simulate_path(e, cfg, 0)
    fs = ss.sample(0)
    assert (fs.M_r, fs.L_r) == pytest.approx(running_extrema(p, 1.0), abs=1e-12)
    assert fs.S == sample_S(p, 1.0)
    assert fs.U == sample_U(p, 1.0)
    assert fs.theta == sample_theta(p, 1.0)
    assert fs.S12 == sample_two_interval_S(p, 0.5, 2.0)
    if name != "wright_fisher":
        assert fs.occupation == occupation_time_positive(p, 1.0)


def test_workers_do_not_change_results():
    cfg = SamplerConfig(dt=0.01, horizon=11, n_paths=5000, seed=8)
    a = monte_carlo("bounded_sigma", cfg, 1.0, workers=1)
    b = monte_carlo("bounded_sigma", cfg, 1.0, workers=2)
    for col in ("M_r", "L_r", "theta", "occupation", "S", "U"):
        np.testing.assert_array_equal(getattr(a, col), getattr(b, col))


def test_first_index_selects_streams():
    cfg = SamplerConfig(dt=0.01, horizon=6, n_paths=10, seed=8, scheme="exact_bm")
    whole = monte_carlo("bm", cfg, 1.0)
    tail = monte_carlo("bm", SamplerConfig(dt=0.01, horizon=6, n_paths=4, seed=8, scheme="exact_bm"), 1.0, first_index=6)
    np.testing.assert_array_equal(whole.S[6:], tail.S)
    assert list(tail.path_index) == [6, 7, 8, 9]


def test_censored_fraction_matches_law():
    cfg = SamplerConfig(dt=0.01, horizon=11, n_paths=20_000, seed=3, scheme="exact_bm")
    ss = monte_carlo("bm", cfg, 1.0, ("S",))
    p = 1 - laws.bm_cdf(10.0, 1.0)
    se = math.sqrt(p * (1 - p) / len(ss))
    assert abs(ss.censored_fraction("S") - p) <= 4 * se + 0.01
    assert ss.valid_range == pytest.approx(10.0)
    assert np.all(np.isnan(ss.U))


def test_monte_carlo_validation():
    cfg = SamplerConfig(dt=0.1, horizon=2, n_paths=2, scheme="exact_bm")
    with pytest.raises(DomainError):
        monte_carlo("bm", cfg, 3.0)
    with pytest.raises(DomainError):
        monte_carlo("bm", cfg, 0.0)
    with pytest.raises(ConfigError):
        monte_carlo("bm", cfg, 1.0, ("S", "two_interval"))
    with pytest.raises(ConfigError):
        monte_carlo("bm", cfg, 1.0, ("V",))


def test_sample_set_csv(tmp_path):
    cfg = SamplerConfig(dt=0.5, horizon=2, n_paths=40, seed=1, scheme="exact_bm")
    ss = monte_carlo("bm", cfg, 1.0)
    dest = tmp_path / "s.csv"
    ss.to_csv(dest)
    rows = list(csv.DictReader(dest.open()))
    assert list(rows[0]) == ["path_index", "M_r", "L_r", "S", "theta", "U", "occupation", "censored_S", "censored_U"]
    assert len(rows) == 40
    for row, s in zip(rows, ss.S):
        assert (row["S"] == "NA") == math.isnan(s) == (row["censored_S"] == "1")
        if row["S"] != "NA":
            assert float(row["S"]) == s
