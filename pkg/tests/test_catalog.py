import math

import numpy as np
import pytest

from arctanlaw import laws
from arctanlaw.catalog import (
    DiffusionSpec,
    Interval,
    PointMass,
    TimeChange,
    UniformEta,
    builtin_catalog,
    conjugation_map,
    get_entry,
    scale_function,
    timechanged_coefficients,
    timechanged_spec,
    verify_conjugation,
)
from arctanlaw.errors import DivergenceError, DomainError, SingularityError, TabulationRangeError


def simpson(f, a, b, panels):
    x = np.linspace(a, b, 2 * panels + 1)
    y = f(x)
    h = (b - a) / (2 * panels)
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def const_spec(mu, sigma, **kw):
    return DiffusionSpec("test", lambda x: mu * np.ones_like(np.asarray(x, float)),
                         lambda x: sigma * np.ones_like(np.asarray(x, float)), **kw)


# -- intervals and specs -------------------------------------------------


def test_interval_rejects_empty_and_bad_policies():
    with pytest.raises(DomainError):
        Interval(1.0, 1.0)
    with pytest.raises(DomainError):
        Interval(0.0, 1.0, "bounce", "clamp")
    with pytest.raises(DomainError):
        Interval(-math.inf, 0.0, "clamp", "clamp")


def test_interval_clamp_only_at_clamped_ends():
    iv = Interval(0.0, math.inf, "clamp", "unreachable")
    assert iv.clamp(-0.5) == 0.0
    assert iv.clamp(7.0) == 7.0
    assert bool(iv.contains(0.0))
    assert not bool(Interval(0.0, 1.0).contains(0.0))


def test_eta_must_lie_in_interval():
    with pytest.raises(DomainError):
        const_spec(0.0, 1.0, interval=Interval(0.0, 1.0), eta=2.0)
    with pytest.raises(DomainError):
        const_spec(0.0, 1.0, interval=Interval(0.0, 1.0), eta=UniformEta(0.5, 1.5))
    s = const_spec(0.0, 1.0, eta=3.0)
    assert s.eta == PointMass(3.0)


def test_clamped_coefficients_use_projected_state():
    feller = get_entry("feller").spec
    assert feller.diffusion(-1.0) == 0.0
    wf = get_entry("wright_fisher").spec
    assert wf.diffusion(1.5) == 0.0
    assert wf.drift(1.5) == pytest.approx(-0.25)


# -- scale functions -------------------------------------------------------


def test_bm_scale_function_is_identity():
    w = scale_function(const_spec(0.0, 1.0), 0.0, window=(-5.0, 5.0))
    x = np.linspace(-4.9, 4.9, 37)
    np.testing.assert_allclose(w(x), x, atol=1e-12)
    np.testing.assert_allclose(w.prime(x), 1.0, atol=1e-12)
    assert w(0.0) == 0.0 and w.prime(0.0) == 1.0


def test_gbm_scale_function_is_log():
    w = get_entry("gbm").scale
    x = np.geomspace(1e-3, 1e3, 41)
    np.testing.assert_allclose(w(x), np.log(x), atol=1e-8)
    np.testing.assert_allclose(w.prime(x), 1 / x, rtol=1e-8)
    np.testing.assert_allclose(w.second(x), -1 / x**2, rtol=1e-3)


def test_ou_scale_function_against_simpson_oracle():
    ou = DiffusionSpec("ou", lambda x: -np.asarray(x, float), lambda x: math.sqrt(2.0) * np.ones_like(np.asarray(x, float)))
    w = scale_function(ou, 0.0, tol=1e-10, window=(-2.0, 2.0))
    oracle = simpson(lambda t: np.exp(t * t / 2), 0.0, 1.0, 10**6)
    assert abs(w(1.0) - oracle) <= 1e-8


def test_scale_function_ode_residual_and_inverse_roundtrip():
    ou = DiffusionSpec("ou", lambda x: -np.asarray(x, float), lambda x: math.sqrt(2.0) * np.ones_like(np.asarray(x, float)))
    tol = 1e-10
    w = scale_function(ou, 0.0, tol=tol, window=(-2.0, 2.0))
    resid = 0.5 * 2.0 * w.second_deriv + (-w.nodes) * w.deriv
    assert np.max(np.abs(resid)) <= 10 * tol
    back = w.inverse(w.values)
    assert np.max(np.abs(back - w.nodes)) <= 1e-11


def test_scale_function_errors():
    feller = get_entry("feller").spec
    with pytest.raises(DivergenceError, match="basepoint"):
        scale_function(feller, 0.0, window=(0.0, 4.0))
    cube = get_entry("cube").spec
    with pytest.raises(SingularityError):
        scale_function(cube, 1.0, window=(-1.0, 2.0))


def test_scale_function_range_error():
    w = get_entry("bm").scale
    with pytest.raises(TabulationRangeError):
        w(1e3)


def test_affine_rescaling_multiplies_clock_and_leaves_law():
    w = get_entry("bounded_sigma").scale
    a, b = 3.0, -2.0
    w2 = w.rescaled(a, b)
    x = np.linspace(-3, 3, 11)
    sig = get_entry("bounded_sigma").spec.diffusion(x)
    np.testing.assert_allclose((w2.prime(x) * sig) ** 2, a * a * (w.prime(x) * sig) ** 2, rtol=1e-14)
    tc = TimeChange.power(1 / 3, 3)
    law1 = laws.CompoundArctanLaw(1.0, tc)
    law2 = laws.CompoundArctanLaw(1.0, tc.scaled(a * a))
    t = np.linspace(0, 20, 101)
    np.testing.assert_allclose(law1.cdf(t), law2.cdf(t), atol=1e-12)


# -- conjugation maps ------------------------------------------------------


@pytest.mark.parametrize(
    "name, exact, xs",
    [
        ("cube", lambda x: 3 * np.cbrt(x), np.array([-7.0, -1.0, -0.1, -1e-9, 0.0, 1e-12, 1e-3, 0.3, 1.0, 8.0, 26.0])),
        ("feller", lambda x: 2 * np.sqrt(x), np.array([0.0, 1e-12, 1e-8, 1e-4, 0.01, 0.25, 1.0, 4.0, 25.0, 90.0])),
        ("wright_fisher", lambda x: 2 * np.arcsin(np.sqrt(x)),
         np.array([0.0, 1e-12, 1e-4, 0.1, 0.5, 0.9, 1 - 1e-6, 1.0])),
        ("gbm", np.log, np.array([1e-6, 0.01, 1.0, 10.0, 1e6])),
    ],
)
def test_catalog_maps_match_closed_forms(name, exact, xs):
    cmap = get_entry(name).mapping
    np.testing.assert_allclose(cmap(xs), exact(xs), atol=1e-6)
    inner = xs[(xs > cmap.window[0]) & (xs < cmap.window[1])]
    np.testing.assert_allclose(cmap.v_inv(cmap(inner)), inner, atol=1e-9)


def test_conjugation_map_cube_from_zero():
    cmap = conjugation_map(lambda x: np.cbrt(x) ** 2, 0.0, window=(-1.0, 1.0), n=513)
    x = np.array([-0.9, -0.2, 0.2, 0.6, 1.0])
    np.testing.assert_allclose(cmap(x), 3 * np.cbrt(x), atol=1e-7)
    assert cmap(0.0) == 0.0


def test_conjugation_map_gbm_basepoint_zero_diverges():
    with pytest.raises(DivergenceError, match="shift the basepoint"):
        conjugation_map(lambda x: x, 0.0, window=(0.0, 2.0), n=33)


def test_verify_conjugation_feller_and_wright_fisher_pass():
    feller = get_entry("feller")
    rep = verify_conjugation(feller.spec, feller.mapping, [0.25, 1.0, 4.0])
    assert rep.passed
    np.testing.assert_allclose(rep.product, 1.0, atol=1e-12)
    wf = get_entry("wright_fisher")
    assert verify_conjugation(wf.spec, wf.mapping, np.linspace(0.05, 0.95, 19)).passed


def test_verify_conjugation_bm_with_sqrt_map_fails():
    feller_map = get_entry("feller").mapping
    bm = get_entry("bm").spec
    rep = verify_conjugation(bm, feller_map, [0.25, 1.0, 4.0])
    assert not rep.passed
    assert rep.implied_drift_mismatch[1] == pytest.approx(0.25, abs=1e-6)


def test_verify_conjugation_rejects_grid_outside_interval():
    feller = get_entry("feller")
    with pytest.raises(DomainError):
        verify_conjugation(feller.spec, feller.mapping, [-1.0, 1.0])


@pytest.mark.parametrize("name", ["cube", "feller", "wright_fisher", "gbm"])
def test_product_constant_on_interior(name):
    e = get_entry(name)
    lo, hi = e.mapping.window
    if name == "gbm":
        grid = np.geomspace(1e-3, 1e3, 50)
    else:
        grid = np.linspace(lo, hi, 52)[1:-1]
        grid = grid[grid != 0.0]
    prod = e.mapping.v_prime(grid) * e.spec.diffusion(grid)
    assert np.ptp(prod) <= 1e-8


# -- clock ---------------------------------------------------------------


@pytest.mark.parametrize("name, c", [("bm", 1.0), ("cube", 1.0), ("feller", 1.0), ("wright_fisher", 0.25), ("gbm", 1.0)])
def test_clock_constants(name, c):
    e = get_entry(name)
    assert e.timechange.deterministic
    assert float(e.timechange.rho(2.0)) == pytest.approx(2.0 * c, rel=1e-9)


def test_timechange_validation_and_inverse():
    tc = TimeChange.power(1 / 3, 3)
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(tc.rho_inv(tc.rho(t)), t, atol=1e-12)
    num = TimeChange.from_functions(lambda t: np.asarray(t) ** 2 + np.asarray(t), lambda t: 2 * np.asarray(t) + 1)
    assert num.rho_inv(6.0) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DomainError):
        TimeChange(kind="deterministic")
    with pytest.raises(DomainError):
        TimeChange.linear_envelopes(2.0, 1.0)


def test_timechanged_coefficients_recover_bm_and_clock_bm():
    w = get_entry("bm").scale
    x = np.linspace(-3, 3, 7)
    drift, diff = timechanged_coefficients(w, TimeChange.linear().rho_prime)
    np.testing.assert_allclose(drift(x, 0.7), 0.0, atol=1e-12)
    np.testing.assert_allclose(diff(x, 0.7), 1.0, atol=1e-12)
    drift, diff = timechanged_coefficients(w, TimeChange.power(1 / 3, 3).rho_prime)
    np.testing.assert_allclose(drift(x, 2.0), 0.0, atol=1e-12)
    np.testing.assert_allclose(diff(x, 2.0), 2.0, rtol=1e-12)


def test_timechanged_coefficients_recover_gbm():
    w = get_entry("gbm").scale
    gbm = get_entry("gbm").spec
    drift, diff = timechanged_coefficients(w, TimeChange.linear().rho_prime)
    x = np.geomspace(0.01, 100, 31)
    # w'' is linear between nodes of a 1.5 % geometric grid: relative error ~2e-4
    np.testing.assert_allclose(drift(x, 1.0), gbm.drift(x), rtol=1e-3)
    np.testing.assert_allclose(diff(x, 1.0), gbm.diffusion(x), rtol=1e-8)
    spec = timechanged_spec("gbm_tc", w, TimeChange.linear(), eta=1.0)
    assert spec.time_dependent and spec.kernel.name == "timechange"
    with pytest.raises(DomainError):
        timechanged_spec("bad", w, get_entry("bounded_sigma").timechange)


def test_timechanged_coefficients_singular_when_slope_vanishes():
    w = get_entry("bm").scale.rescaled(1.0, 0.0)
    object.__setattr__(w, "deriv", np.zeros_like(w.deriv))
    drift, _ = timechanged_coefficients(w, TimeChange.linear().rho_prime)
    with pytest.raises(SingularityError):
        drift(np.array([0.5]), 1.0)


# -- catalog ---------------------------------------------------------------


def test_catalog_contents():
    names = [e.name for e in builtin_catalog()]
    for n in ("bm", "cube", "feller", "wright_fisher", "gbm", "integrated_bm", "bounded_sigma"):
        assert n in names
    ib = get_entry("integrated_bm")
    assert ib.special and ib.scheme == "exact_integrated_bm"
    assert ib.timechange.label == "rho(t)=t^3/3"
    assert float(ib.timechange.rho(3.0)) == pytest.approx(9.0)
    feller = get_entry("feller")
    assert feller.conjugation == "2*sqrt(x)"
    assert "(B_t+2*sqrt(x))^2/4" in feller.solution
    assert get_entry("wright_fisher").conjugation == "2*arcsin(sqrt(x))"


def test_bounded_sigma_envelopes():
    e = get_entry("bounded_sigma")
    assert not e.timechange.deterministic
    t = np.array([0.0, 1.0, 4.0])
    np.testing.assert_allclose(e.timechange.alpha(t), t / 4)
    np.testing.assert_allclose(e.timechange.beta(t), 9 * t / 4)
    x = np.linspace(-10, 10, 1001)
    sig2 = e.spec.diffusion(x) ** 2
    assert sig2.min() >= 0.25 and sig2.max() <= 2.25


def test_catalog_serialization_and_unknown_entry():
    import json

    for e in builtin_catalog():
        d = json.loads(e.to_text())
        assert d["name"] == e.name and "timechange" in d
    with pytest.raises(KeyError):
        get_entry("nope")
