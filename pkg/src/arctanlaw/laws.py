"""Closed-form laws of the post-``r`` recovery time and related functionals.

For a diffusion whose scale-transformed martingale runs on a deterministic
clock ``rho``, the time ``S(r)`` needed after ``r`` to regain the running
maximum of ``[0, r]`` satisfies::

    P(S(r) <= t) = (2/pi) arctan sqrt((rho(t+r) - rho(r)) / rho(r))

with ``rho(t) = t`` giving the Brownian arctangent law. A random clock
squeezed between envelopes ``alpha <= rho <= beta`` yields upper and lower
bounds instead. All functions accept scalars or arrays for ``t`` and return
a float for scalar input.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .catalog import TimeChange
from .errors import DomainError, InconsistentEnvelopeWarning, SingularityError, UndefinedBoundError

TWO_OVER_PI = 2.0 / math.pi


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _times(t, name="t"):
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)):
        raise DomainError(f"{name} contains NaN")
    if np.any(t < 0):
        raise DomainError(f"{name} must be nonnegative")
    return t


def _positive(r, name="r"):
    r = float(r)
    if not r > 0 or math.isinf(r):
        raise DomainError(f"{name} must be a positive finite time, got {r!r}")
    return r


def _arctan_law(ratio):
    return TWO_OVER_PI * np.arctan(np.sqrt(ratio))


# --------------------------------------------------------------------------
# Brownian motion
# --------------------------------------------------------------------------


def bm_cdf(t, r):
    """``P(S(r) <= t) = (2/pi) arctan sqrt(t/r)`` for Brownian motion."""
    r = _positive(r)
    t = _times(t)
    return _out(_arctan_law(t / r))


def bm_pdf(t, r):
    """Density ``sqrt(r) / (pi (r+t) sqrt(t))``; singular at ``t = 0``."""
    r = _positive(r)
    t = _times(t)
    if np.any(t == 0):
        raise SingularityError("the arctangent density is infinite at t=0")
    return _out(math.sqrt(r) / (math.pi * (r + t) * np.sqrt(t)))


# --------------------------------------------------------------------------
# Deterministic clock
# --------------------------------------------------------------------------


def _deterministic(tc: TimeChange, what: str) -> TimeChange:
    if not isinstance(tc, TimeChange):
        raise DomainError(f"{what} needs a TimeChange, got {type(tc).__name__}")
    if not tc.deterministic:
        raise DomainError(f"{what} needs a deterministic clock; use BoundPair for envelopes")
    return tc


@dataclass(frozen=True)
class CompoundArctanLaw:
    """Law of ``S(r)`` under a deterministic clock ``rho``."""

    r: float
    timechange: TimeChange

    def __post_init__(self):
        _positive(self.r)
        _deterministic(self.timechange, "CompoundArctanLaw")
        if not float(self.timechange.rho(self.r)) > 0:
            raise DomainError(f"rho(r) must be positive at r={self.r!r}")

    @property
    def rho_r(self) -> float:
        return float(self.timechange.rho(self.r))

    def cdf(self, t):
        return compound_cdf(t, self)

    def pdf(self, t):
        return compound_pdf(t, self)


def _increment(t, law: CompoundArctanLaw):
    rho = law.timechange.rho
    d = np.asarray(rho(t + law.r), dtype=float) - law.rho_r
    if np.any(d < 0):
        raise DomainError("rho(t+r) < rho(r): the clock is not nondecreasing")
    return d


def compound_cdf(t, law: CompoundArctanLaw):
    """``(2/pi) arctan sqrt((rho(t+r) - rho(r)) / rho(r))``."""
    t = _times(t)
    return _out(_arctan_law(_increment(t, law) / law.rho_r))


def compound_pdf(t, law: CompoundArctanLaw):
    """``rho'(t+r) sqrt(rho(r)) / (pi rho(t+r) sqrt(rho(t+r) - rho(r)))``.

    This is the exact derivative of :func:`compound_cdf`; with ``rho(t)=t``
    it reduces to :func:`bm_pdf`.
    """
    t = _times(t)
    d = _increment(t, law)
    if np.any(d == 0):
        raise SingularityError("the density is infinite where rho(t+r) = rho(r) (t=0)")
    rr = law.rho_r
    rp = np.asarray(law.timechange.rho_prime(t + law.r), dtype=float)
    return _out(rp * math.sqrt(rr) / (math.pi * (rr + d) * np.sqrt(d)))


def two_interval_cdf(t, r1, r2, timechange: TimeChange):
    """Law of the time after ``r2`` to regain the maximum over ``[r1, r2]``.

    ``(2/pi) arctan sqrt((rho(t+r2) - rho(r2)) / (rho(r2) - rho(r1)))``.
    """
    tc = _deterministic(timechange, "two_interval_cdf")
    r1 = float(r1)
    r2 = _positive(r2, "r2")
    if r1 < 0 or not r1 < r2:
        raise DomainError(f"need 0 <= r1 < r2, got r1={r1!r}, r2={r2!r}")
    t = _times(t)
    width = float(tc.rho(r2)) - float(tc.rho(r1))
    if not width > 0:
        raise DomainError(f"degenerate window: rho(r2) - rho(r1) = {width!r}")
    d = np.asarray(tc.rho(t + r2), dtype=float) - float(tc.rho(r2))
    if np.any(d < 0):
        raise DomainError("rho(t+r2) < rho(r2): the clock is not nondecreasing")
    return _out(_arctan_law(d / width))


# --------------------------------------------------------------------------
# Random clock between envelopes
# --------------------------------------------------------------------------


def t_bar(r: float, alpha: Callable, beta: Callable, tol: float = 1e-10, max_doublings: int = 200) -> float:
    """Smallest ``t >= 0`` with ``alpha(r + t) >= beta(r)``; ``inf`` if none is found.

    The bracket starts at ``[0, 1]`` and doubles until it contains a crossing,
    then bisection runs to an absolute tolerance ``tol``. ``inf`` is returned
    when ``alpha`` stays below ``beta(r)`` after ``max_doublings`` doublings,
    which is how a bounded ``alpha`` shows up.
    """
    target = float(beta(r))

    def ok(t):
        return float(alpha(r + t)) >= target

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(max_doublings):
        if ok(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class BoundPair:
    """Envelopes ``alpha <= rho <= beta`` of a random clock, at a fixed ``r``."""

    r: float
    alpha: Callable
    beta: Callable
    t_bar: float = field(init=False)

    def __post_init__(self):
        _positive(self.r)
        if not float(self.alpha(self.r)) > 0:
            raise DomainError("alpha(r) must be positive")
        if float(self.alpha(self.r)) > float(self.beta(self.r)):
            warnings.warn("alpha(r) > beta(r): envelopes are inconsistent", InconsistentEnvelopeWarning, stacklevel=2)
        object.__setattr__(self, "t_bar", t_bar(self.r, self.alpha, self.beta))

    @classmethod
    def from_timechange(cls, r: float, tc: TimeChange) -> "BoundPair":
        if tc.deterministic:
            return cls(r, tc.rho, tc.rho)
        return cls(r, tc.alpha, tc.beta)

    def upper(self, t):
        return upper_bound_cdf(t, self)

    def lower(self, t):
        return lower_bound_cdf(t, self)


def upper_bound_cdf(t, bounds: BoundPair):
    """``(2/pi) arctan sqrt((beta(t+r) - alpha(r)) / alpha(r))``, an upper bound on ``P(S(r) <= t)``.

    Where ``beta(t+r) < alpha(r)`` (impossible for ordered envelopes) the value
    is 0 and an :class:`InconsistentEnvelopeWarning` is issued.
    """
    t = _times(t)
    a = float(bounds.alpha(bounds.r))
    d = np.asarray(bounds.beta(t + bounds.r), dtype=float) - a
    if np.any(d < 0):
        warnings.warn("beta(t+r) < alpha(r): inconsistent envelopes, bound set to 0",
                      InconsistentEnvelopeWarning, stacklevel=2)
        d = np.maximum(d, 0.0)
    return _out(_arctan_law(d / a))


def lower_bound_cdf(t, bounds: BoundPair):
    """``(2/pi) arctan sqrt((alpha(t+r) - beta(r)) / beta(r))``, a lower bound for ``t > t_bar``."""
    t = _times(t)
    if np.any(t <= bounds.t_bar):
        raise UndefinedBoundError(
            f"the lower bound is only defined for t > t_bar = {bounds.t_bar!r} (alpha(r+t) >= beta(r))"
        )
    b = float(bounds.beta(bounds.r))
    d = np.asarray(bounds.alpha(t + bounds.r), dtype=float) - b
    return _out(_arctan_law(np.maximum(d, 0.0) / b))


# --------------------------------------------------------------------------
# Arcsine laws
# --------------------------------------------------------------------------


def _within(t, r):
    t = _times(t)
    if np.any(t > r):
        raise DomainError(f"t must lie in [0, r={r!r}]")
    return t


def theta_arcsine_cdf(t, r, timechange: TimeChange):
    """Law of the first time the maximum over ``[0, r]`` is attained: ``(2/pi) arcsin sqrt(rho(t)/rho(r))``."""
    tc = _deterministic(timechange, "theta_arcsine_cdf")
    r = _positive(r)
    t = _within(t, r)
    ratio = np.asarray(tc.rho(t), dtype=float) / float(tc.rho(r))
    return _out(TWO_OVER_PI * np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0))))


def occupation_arcsine_cdf(t, r):
    """Law of the time Brownian motion spends above 0 during ``[0, r]``."""
    r = _positive(r)
    t = _within(t, r)
    return _out(TWO_OVER_PI * np.arcsin(np.sqrt(t / r)))


# --------------------------------------------------------------------------
# Mean of S(r)
# --------------------------------------------------------------------------


def expectation_finite(gamma: float) -> bool:
    """Whether ``E S(r) < inf`` for a clock growing like ``t**gamma``: iff ``gamma > 2``."""
    gamma = float(gamma)
    if not gamma > 0:
        raise DomainError(f"growth exponent must be positive, got {gamma!r}")
    return gamma > 2.0


@dataclass(frozen=True)
class TruncatedMean:
    """``int_0^T t f(t) dt`` and, for pure power clocks with ``gamma > 2``,
    an upper bound on the missing tail ``int_T^inf t f(t) dt``."""

    t_cut: float
    value: float
    abserr: float
    tail_bound: float | None = None

    @property
    def upper(self) -> float | None:
        return None if self.tail_bound is None else self.value + self.tail_bound


def truncated_mean(r: float, timechange: TimeChange, t_cut: float) -> TruncatedMean:
    """Truncated first moment of ``S(r)`` by adaptive quadrature.

    The substitution ``t = u**2`` removes the ``t**-1/2`` behaviour of the
    density at 0. For ``rho(t) = c t**gamma`` with ``gamma > 2``,
    superadditivity of ``rho`` gives ``1 - F(t) <= (2/pi) (r/t)**(gamma/2)``
    and hence the tail bound
    ``(2/pi) r**(gamma/2) T**(1 - gamma/2) gamma / (gamma - 2)``.
    """
    law = CompoundArctanLaw(r, _deterministic(timechange, "truncated_mean"))
    t_cut = float(t_cut)
    if t_cut < 0:
        raise DomainError("T_cut must be nonnegative")
    if t_cut == 0:
        return TruncatedMean(0.0, 0.0, 0.0, None)

    def integrand(u):
        if u == 0.0:
            return 0.0
        t = u * u
        return 2.0 * u * t * compound_pdf(t, law)

    ucut = math.sqrt(t_cut)
    pts = [p for p in (math.sqrt(r), 1.0, 10.0, 30.0) if 0 < p < ucut]
    value, err = integrate.quad(integrand, 0.0, ucut, points=pts or None, limit=500, epsabs=1e-13, epsrel=1e-12)
    tail = None
    g = timechange.gamma
    if g is not None and g > 2.0:
        tail = TWO_OVER_PI * law.r ** (g / 2.0) * t_cut ** (1.0 - g / 2.0) * g / (g - 2.0)
    return TruncatedMean(t_cut, float(value), float(err), tail)
