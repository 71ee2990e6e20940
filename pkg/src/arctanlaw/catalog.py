"""Diffusion models, scale functions, conjugation maps and the built-in catalog.

A diffusion ``dX = mu(X) dt + sigma(X) dB`` is reduced to Brownian motion by
its scale function ``w`` (``L w = 0``, normalised ``w(x0) = 0, w'(x0) = 1``)
and the clock ``rho(t) = int_0^t (w'(X) sigma(X))^2 ds``. Diffusions whose
drift is ``sigma sigma' / 2`` are conjugated to Brownian motion through
``v = int dx / sigma`` and run on a linear clock.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import DivergenceError, DomainError, SingularityError
from .tables import MonotoneTable, hermite, hermite_slope, linear, check_range

CLAMP = "clamp"
ABSORB = "absorb"
UNREACHABLE = "unreachable"
POLICIES = (CLAMP, ABSORB, UNREACHABLE)

DEFAULT_TABLE_SIZE = 4096


# --------------------------------------------------------------------------
# State space and initial law
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf
    lo_policy: str = UNREACHABLE
    hi_policy: str = UNREACHABLE

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"empty interval [{self.lo}, {self.hi}]")
        for p in (self.lo_policy, self.hi_policy):
            if p not in POLICIES:
                raise DomainError(f"unknown boundary policy {p!r}")
        if math.isinf(self.lo) and self.lo_policy != UNREACHABLE:
            raise DomainError("an infinite endpoint can only be unreachable")
        if math.isinf(self.hi) and self.hi_policy != UNREACHABLE:
            raise DomainError("an infinite endpoint can only be unreachable")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        lo_ok = x > self.lo if self.lo_policy == UNREACHABLE else x >= self.lo
        hi_ok = x < self.hi if self.hi_policy == UNREACHABLE else x <= self.hi
        return lo_ok & hi_ok

    def clamp(self, x):
        """Project onto the closed interval at endpoints with a clamp/absorb policy."""
        lo = self.lo if self.lo_policy != UNREACHABLE else -math.inf
        hi = self.hi if self.hi_policy != UNREACHABLE else math.inf
        if lo == -math.inf and hi == math.inf:
            return x
        return np.minimum(np.maximum(x, lo), hi)

    def describe(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "lo_policy": self.lo_policy, "hi_policy": self.hi_policy}


@dataclass(frozen=True)
class PointMass:
    value: float

    def sample(self, rng) -> float:
        return float(self.value)

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def __str__(self):
        return f"point({self.value!r})"


@dataclass(frozen=True)
class UniformEta:
    """Initial state uniform on ``[lo, hi]``; consumes one draw of the path stream."""

    lo: float
    hi: float

    def sample(self, rng) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def __str__(self):
        return f"uniform({self.lo!r}, {self.hi!r})"


def as_eta(eta) -> PointMass | UniformEta:
    if isinstance(eta, (PointMass, UniformEta)):
        return eta
    return PointMass(float(eta))


# --------------------------------------------------------------------------
# Diffusion models
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Coefficient model the compiled Euler kernel knows how to evaluate.

    ``name`` is one of ``const``, ``cube``, ``feller``, ``wright_fisher``,
    ``gbm``, ``bounded_sigma`` or ``timechange``. The last one carries a scale
    table ``(nodes, w', w'')`` and a clock derivative.
    """

    name: str
    params: tuple = ()
    table: tuple | None = None
    rho_prime: Callable | None = None


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """A one-dimensional SDE with its state interval and initial law.

    ``mu`` and ``sigma`` are vectorised callables of ``x`` (or of ``(x, t)``
    when ``time_dependent``). Under the clamp policy they are evaluated at the
    state projected onto the interval, which is how ``sqrt(x v 0)`` style
    coefficients are honoured.
    """

    name: str
    mu: Callable | None
    sigma: Callable | None
    interval: Interval = field(default_factory=Interval)
    eta: PointMass | UniformEta = PointMass(0.0)
    formulas: dict = field(default_factory=dict)
    kernel: KernelModel | None = None
    time_dependent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eta", as_eta(self.eta))
        lo, hi = self.eta.support()
        if not (bool(self.interval.contains(lo)) and bool(self.interval.contains(hi))):
            raise DomainError(f"{self.name}: initial law {self.eta} is not inside the state interval")

    def drift(self, x, t=0.0):
        xc = self.interval.clamp(x)
        return self.mu(xc, t) if self.time_dependent else self.mu(xc)

    def diffusion(self, x, t=0.0):
        xc = self.interval.clamp(x)
        return self.sigma(xc, t) if self.time_dependent else self.sigma(xc)

    def with_eta(self, eta) -> "DiffusionSpec":
        return replace(self, eta=as_eta(eta))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "mu": self.formulas.get("mu", "<callable>"),
            "sigma": self.formulas.get("sigma", "<callable>"),
            "interval": self.interval.describe(),
            "eta": str(self.eta),
            "time_dependent": self.time_dependent,
        }


# --------------------------------------------------------------------------
# Time changes
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeChange:
    """Deterministic clock ``rho`` or envelopes ``alpha <= rho <= beta``.

    ``unbounded`` records the (unchecked) declaration ``rho(+inf) = +inf``.
    ``gamma`` is the growth exponent when ``rho(t) = coef * t**gamma`` exactly.
    """

    kind: str
    rho: Callable | None = None
    rho_prime: Callable | None = None
    rho_inv: Callable | None = None
    alpha: Callable | None = None
    beta: Callable | None = None
    label: str = ""
    gamma: float | None = None
    coef: float | None = None
    unbounded: bool = True

    def __post_init__(self):
        if self.kind not in ("deterministic", "stochastic"):
            raise DomainError(f"unknown time-change kind {self.kind!r}")
        if self.kind == "deterministic" and (self.rho is None or self.rho_prime is None):
            raise DomainError("a deterministic time change needs rho and rho_prime")
        if self.kind == "stochastic" and (self.alpha is None or self.beta is None):
            raise DomainError("a stochastic time change needs alpha and beta envelopes")

    @property
    def deterministic(self) -> bool:
        return self.kind == "deterministic"

    @classmethod
    def power(cls, coef: float = 1.0, gamma: float = 1.0) -> "TimeChange":
        """``rho(t) = coef * t**gamma``."""
        if coef <= 0 or gamma <= 0:
            raise DomainError("power clock needs coef > 0 and gamma > 0")
        label = f"rho(t)={coef!r}*t" if gamma == 1 else f"rho(t)={coef!r}*t^{gamma!r}"
        return cls(
            kind="deterministic",
            rho=lambda t: coef * np.asarray(t, dtype=float) ** gamma,
            rho_prime=lambda t: coef * gamma * np.asarray(t, dtype=float) ** (gamma - 1.0),
            rho_inv=lambda s: (np.asarray(s, dtype=float) / coef) ** (1.0 / gamma),
            label=label,
            gamma=float(gamma),
            coef=float(coef),
        )

    @classmethod
    def linear(cls, coef: float = 1.0) -> "TimeChange":
        return cls.power(coef, 1.0)

    @classmethod
    def from_functions(cls, rho, rho_prime, rho_inv=None, label="rho(t)=<callable>") -> "TimeChange":
        if rho_inv is None:
            rho_inv = _numeric_inverse(rho)
        return cls(kind="deterministic", rho=rho, rho_prime=rho_prime, rho_inv=rho_inv, label=label)

    @classmethod
    def envelopes(cls, alpha, beta, label="") -> "TimeChange":
        return cls(kind="stochastic", alpha=alpha, beta=beta, label=label)

    @classmethod
    def linear_envelopes(cls, a: float, b: float) -> "TimeChange":
        if not 0 < a <= b:
            raise DomainError("need 0 < a <= b for linear envelopes")
        return cls(
            kind="stochastic",
            alpha=lambda t: a * np.asarray(t, dtype=float),
            beta=lambda t: b * np.asarray(t, dtype=float),
            label=f"alpha(t)={a!r}*t, beta(t)={b!r}*t",
            coef=None,
        )

    def scaled(self, factor: float) -> "TimeChange":
        """The clock of the rescaled scale function ``a w + b``: ``a**2 * rho``."""
        if not self.deterministic:
            a, b = self.alpha, self.beta
            return TimeChange.envelopes(lambda t: factor * a(t), lambda t: factor * b(t), f"{factor!r}*({self.label})")
        rho, rp, ri = self.rho, self.rho_prime, self.rho_inv
        return replace(
            self,
            rho=lambda t: factor * rho(t),
            rho_prime=lambda t: factor * rp(t),
            rho_inv=None if ri is None else (lambda s: ri(np.asarray(s) / factor)),
            label=f"{factor!r}*({self.label})",
            coef=None if self.coef is None else factor * self.coef,
        )

    def describe(self) -> dict:
        d = {"kind": self.kind, "label": self.label, "unbounded": self.unbounded}
        if self.gamma is not None:
            d["gamma"] = self.gamma
            d["coef"] = self.coef
        return d


def _numeric_inverse(f):
    def inv(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        for k, v in enumerate(s):
            hi = 1.0
            while f(hi) < v:
                hi *= 2.0
            out[k] = optimize.brentq(lambda t: f(t) - v, 0.0, hi, xtol=1e-14) if v > 0 else 0.0
        return out if out.size > 1 else float(out[0])

    return inv


# --------------------------------------------------------------------------
# Scale function
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaleFunction:
    """Tabulated scale function with exact node derivatives.

    ``values``, ``deriv`` and ``second_deriv`` hold ``w``, ``w'`` and ``w''``
    at ``nodes``. Between nodes ``w`` and ``w'`` are cubic Hermite
    interpolants and ``w''`` is linear.
    """

    basepoint: float
    nodes: np.ndarray
    values: np.ndarray
    deriv: np.ndarray
    second_deriv: np.ndarray
    root_tol: float = 1e-12
    label: str = "w"

    def __post_init__(self):
        object.__setattr__(
            self, "_table", MonotoneTable(self.nodes, self.values, self.deriv, self.root_tol, self.label)
        )

    @property
    def window(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def __call__(self, x):
        return self._table(x)

    def prime(self, x):
        check_range(self.nodes, x, self.label)
        out = hermite(self.nodes, self.deriv, self.second_deriv, x)
        return out if np.ndim(out) else float(out)

    def second(self, x):
        check_range(self.nodes, x, self.label)
        out = linear(self.nodes, self.second_deriv, x)
        return out if np.ndim(out) else float(out)

    def inverse(self, y):
        return self._table.inverse(y)

    def rescaled(self, a: float, b: float) -> "ScaleFunction":
        """``a * w + b`` (no longer normalised at the basepoint)."""
        if a <= 0:
            raise DomainError("scale functions only admit positive rescaling")
        return ScaleFunction(
            self.basepoint, self.nodes, a * self.values + b, a * self.deriv, a * self.second_deriv,
            self.root_tol, f"{a!r}*{self.label}+{b!r}",
        )


def _window_nodes(window, x0, n, spacing="uniform"):
    lo, hi = map(float, window)
    if not lo < hi:
        raise DomainError(f"empty tabulation window {window}")
    if not lo <= x0 <= hi:
        raise DomainError(f"basepoint {x0!r} is outside the tabulation window [{lo!r}, {hi!r}]")
    if spacing == "geometric":
        if lo <= 0:
            raise DomainError("geometric tabulation needs a positive window")
        nodes = np.geomspace(lo, hi, n)
    elif spacing == "uniform":
        nodes = np.linspace(lo, hi, n)
    else:
        raise DomainError(f"unknown tabulation spacing {spacing!r}")
    return np.union1d(nodes, [x0])


def _default_window(interval: Interval, x0: float, half_width: float = 10.0):
    return (max(interval.lo, x0 - half_width), min(interval.hi, x0 + half_width))


def scale_function(
    spec: DiffusionSpec,
    x0: float = 0.0,
    tol: float = 1e-10,
    window: tuple[float, float] | None = None,
    n: int = DEFAULT_TABLE_SIZE,
    spacing: str = "uniform",
) -> ScaleFunction:
    """Tabulate ``w(x) = int_{x0}^x exp(-int_{x0}^t 2 mu / sigma^2 dz) dt``.

    The nested integral is integrated as the quadrature pair
    ``w' = exp(L)``, ``L' = -2 mu / sigma^2`` with an error-controlled
    eighth-order Runge-Kutta rule outward from ``x0``, absolute tolerance
    ``tol``. ``w''`` at the nodes follows from ``L w = 0``.

    Raises
    ------
    DivergenceError
        If ``sigma(x0) = 0`` or the inner integral blows up towards a
        window endpoint.
    SingularityError
        If ``sigma`` vanishes at a tabulation node other than the basepoint.
    """
    if spec.time_dependent:
        raise DomainError("scale functions are defined for time-homogeneous diffusions only")
    if window is None:
        window = _default_window(spec.interval, x0)
    nodes = _window_nodes(window, x0, n, spacing)
    if not bool(spec.interval.contains(x0)):
        raise DomainError(f"basepoint {x0!r} is outside the state interval")

    s0 = float(spec.diffusion(x0))
    if not s0 > 0:
        raise DivergenceError(
            f"{spec.name}: sigma vanishes at the basepoint x0={x0!r}, so the inner integral "
            f"of 2 mu / sigma^2 diverges there; choose an interior basepoint"
        )
    sig = np.asarray(spec.diffusion(nodes), dtype=float) * np.ones_like(nodes)
    if np.any(~(sig > 0)):
        bad = nodes[~(sig > 0)]
        where = "window endpoint" if bad[0] in (nodes[0], nodes[-1]) else "interior point"
        raise SingularityError(
            f"{spec.name}: sigma vanishes at {where} x={bad[0]!r}; shrink the tabulation window"
        )

    def g(x):
        return 2.0 * spec.drift(x) / spec.diffusion(x) ** 2

    def rhs(x, y):
        return np.array([math.exp(y[1]), -float(g(x))])

    j0 = int(np.searchsorted(nodes, x0))
    w = np.zeros_like(nodes)
    L = np.zeros_like(nodes)
    for side, grid in (("upper", nodes[j0:]), ("lower", nodes[: j0 + 1][::-1])):
        if len(grid) < 2:
            continue
        end = grid[-1]
        with np.errstate(over="raise", divide="raise", invalid="raise"):
            try:
                sol = integrate.solve_ivp(
                    rhs, (x0, end), [0.0, 0.0], method="DOP853", t_eval=grid,
                    rtol=1e-12, atol=tol * 1e-2,
                )
            except (FloatingPointError, OverflowError) as exc:
                raise DivergenceError(f"{spec.name}: scale integral overflows towards the {side} endpoint x={end!r}") from exc
        if sol.status != 0 or not np.all(np.isfinite(sol.y)):
            raise DivergenceError(
                f"{spec.name}: inner integral does not converge towards the {side} window endpoint x={end!r}"
            )
        if side == "upper":
            w[j0:], L[j0:] = sol.y
        else:
            w[: j0 + 1], L[: j0 + 1] = sol.y[:, ::-1]
    w[j0] = 0.0
    L[j0] = 0.0
    wp = np.exp(L)
    wpp = -np.asarray(g(nodes), dtype=float) * wp
    if not np.all(np.diff(w) > 0):
        raise DivergenceError(f"{spec.name}: tabulated scale function is not increasing; the window is too wide")
    return ScaleFunction(float(x0), nodes, w, wp, wpp, label=f"w[{spec.name}]")


# --------------------------------------------------------------------------
# Conjugation to Brownian motion
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConjugationMap:
    """``v(x) = int_{x0}^x dr / sigma(r)`` tabulated, with inverse and ``v' = 1/sigma``."""

    v: MonotoneTable
    v_prime: Callable
    basepoint: float
    formula: str = ""

    def __call__(self, x):
        return self.v(x)

    def v_inv(self, y):
        return self.v.inverse(y)

    @property
    def window(self):
        return self.v.window


ROUNDOFF_ABSERR = 1e-8


def _refine_at_zeros(nodes, sigma, depth: int = 200):
    """Add geometrically graded nodes next to every node where ``sigma`` vanishes.

    Near such a point ``v`` behaves like a fractional power, which a cubic
    Hermite cell of the base width resolves poorly; grading the neighbouring
    cells restores accuracy.
    """
    sig = np.array([float(sigma(x)) for x in nodes])
    extra = []
    for k in np.flatnonzero(~(sig > 0)):
        z = nodes[k]
        for nb in (nodes[k - 1] if k > 0 else None, nodes[k + 1] if k < len(nodes) - 1 else None):
            if nb is None:
                continue
            h = abs(nb - z)
            # offsets below ~1e-9 |z| run into cancellation in sigma (e.g. x(1-x) next to 1)
            floor = min(0.5, max(1e-9 * abs(z) / h, 1e-15))
            extra.append(z + (nb - z) * np.geomspace(floor, 1.0, depth)[:-1])
    return np.union1d(nodes, np.concatenate(extra)) if extra else nodes


def conjugation_map(
    sigma: Callable,
    x0: float = 0.0,
    tol: float = 1e-10,
    window: tuple[float, float] = (-10.0, 10.0),
    n: int = DEFAULT_TABLE_SIZE,
    spacing: str = "uniform",
    formula: str = "",
) -> ConjugationMap:
    """Tabulate the map ``v`` conjugating ``dX = sigma sigma'/2 dt + sigma dB`` to BM.

    Each node-to-node piece is integrated with QUADPACK's extrapolating rule,
    which copes with integrable ``1/sigma`` singularities at the nodes
    (e.g. ``sigma(x) = x**(2/3)`` at 0).
    """
    nodes = _refine_at_zeros(_window_nodes(window, x0, n, spacing), sigma)
    j0 = int(np.searchsorted(nodes, x0))

    def inv_sigma(x):
        s = float(sigma(x))
        return 1.0 / s if s > 0 else math.inf

    def piece(a, b, epsabs, epsrel):
        # next to a zero z of sigma substitute x = z + (other - z) u^2, which
        # turns a 1/sqrt singularity into a bounded integrand
        if not float(sigma(a)) > 0:
            z, d = a, b - a
        elif not float(sigma(b)) > 0:
            z, d = b, a - b
        else:
            return integrate.quad(inv_sigma, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)[:2]

        def g(u):
            # z + d u^2 can round onto z itself for tiny u; those points carry no weight
            val = 2.0 * u * inv_sigma(z + d * u * u)
            return val if math.isfinite(val) else 0.0

        val, err = integrate.quad(g, 0.0, 1.0, epsabs=epsabs / abs(d), epsrel=epsrel, limit=200)
        return abs(d) * val, abs(d) * err

    pieces = np.empty(len(nodes) - 1)
    seg_tol = tol / len(nodes)
    for k in range(len(nodes) - 1):
        a, b = nodes[k], nodes[k + 1]
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = piece(a, b, seg_tol, 1e-12)
                err = 0.0
            except integrate.IntegrationWarning:
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                # roundoff in sigma next to one of its zeros (e.g. x(1-x) near 1)
                # limits the attainable accuracy; accept a small error estimate
                val, err = piece(a, b, tol, 1e-10)
        if not err <= ROUNDOFF_ABSERR:
            if a == x0 or b == x0:
                raise DivergenceError(
                    f"int 1/sigma diverges at the basepoint x0={x0!r}; shift the basepoint "
                    f"to a point where sigma > 0 (geometric BM needs x0 > 0)"
                )
            raise DivergenceError(f"int 1/sigma diverges on [{a!r}, {b!r}]")
        if not math.isfinite(val):
            raise DivergenceError(f"int 1/sigma is not finite on [{a!r}, {b!r}]")
        pieces[k] = val
    values = np.zeros_like(nodes)
    values[j0 + 1:] = np.cumsum(pieces[j0:])
    values[:j0] = -np.cumsum(pieces[:j0][::-1])[::-1]
    with np.errstate(divide="ignore"):
        slopes = 1.0 / np.array([float(sigma(x)) for x in nodes])
    bad = ~np.isfinite(slopes)
    if bad.any():
        slopes[bad] = interpolate.PchipInterpolator(nodes, values).derivative()(nodes[bad])

    def v_prime(x):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(sigma(x), dtype=float)

    table = MonotoneTable(nodes, values, slopes, name=formula or "v")
    return ConjugationMap(table, v_prime, float(x0), formula)


def central_difference(f, x, rel: float = 1e-6):
    x = np.asarray(x, dtype=float)
    h = np.maximum(1e-6, rel * np.abs(x))
    return (np.asarray(f(x + h), dtype=float) - np.asarray(f(x - h), dtype=float)) / (2.0 * h)


@dataclass(frozen=True)
class ConjugationReport:
    grid: np.ndarray
    drift_deviation: np.ndarray
    product: np.ndarray
    implied_drift_mismatch: np.ndarray
    tol: float

    @property
    def max_drift_deviation(self) -> float:
        return float(np.max(self.drift_deviation))

    @property
    def product_spread(self) -> float:
        return float(np.ptp(self.product))

    @property
    def passed(self) -> bool:
        return self.max_drift_deviation <= self.tol and self.product_spread <= self.tol


def verify_conjugation(spec: DiffusionSpec, cmap, grid, tol: float = 1e-6) -> ConjugationReport:
    """Check that ``spec`` is conjugated to BM by ``cmap`` on ``grid``.

    Two checks: ``mu = sigma sigma' / 2`` and ``v' sigma`` constant. The
    report also carries, per grid point, the gap between ``mu`` and the drift
    ``s s' / 2`` of the unit-speed diffusion ``s = 1 / v'`` that the map
    conjugates.
    """
    grid = np.asarray(grid, dtype=float)
    if not np.all(spec.interval.contains(grid)):
        raise DomainError(f"grid point outside the state interval of {spec.name}")
    vp = cmap.v_prime if hasattr(cmap, "v_prime") else cmap.prime
    mu = np.asarray(spec.drift(grid), dtype=float) * np.ones_like(grid)
    sig = np.asarray(spec.diffusion(grid), dtype=float) * np.ones_like(grid)
    sig_d = central_difference(spec.diffusion, grid)
    s = lambda x: 1.0 / np.asarray(vp(x), dtype=float)
    implied = 0.5 * s(grid) * central_difference(s, grid)
    return ConjugationReport(
        grid=grid,
        drift_deviation=np.abs(mu - 0.5 * sig * sig_d),
        product=np.asarray(vp(grid), dtype=float) * sig,
        implied_drift_mismatch=np.abs(mu - implied),
        tol=tol,
    )


# --------------------------------------------------------------------------
# Clock-driven coefficients
# --------------------------------------------------------------------------


def timechanged_coefficients(w: ScaleFunction, rho_prime: Callable):
    """Drift and diffusion of ``X = w^{-1}(B(rho(t)) + w(eta))`` as functions of ``(x, t)``.

    drift = -rho'(t) w''(x) / (2 w'(x)^3), diffusion = sqrt(rho'(t)) / w'(x).
    """

    def _wp(x):
        wp = np.asarray(w.prime(x), dtype=float)
        if np.any(wp <= 0):
            raise SingularityError("w' vanishes in the evaluation range")
        return wp

    def drift(x, t):
        wp = _wp(x)
        rp = np.asarray(rho_prime(t), dtype=float)
        return -rp * np.asarray(w.second(x), dtype=float) / (2.0 * wp * wp * wp)

    def diffusion(x, t):
        wp = _wp(x)
        rp = np.asarray(rho_prime(t), dtype=float)
        if np.any(rp < 0):
            raise DomainError("rho' must be nonnegative")
        return np.sqrt(rp) / wp

    return drift, diffusion


def timechanged_spec(
    name: str,
    w: ScaleFunction,
    timechange: TimeChange,
    interval: Interval | None = None,
    eta=0.0,
) -> DiffusionSpec:
    """Time-inhomogeneous diffusion driven by the clock-changed coefficients."""
    if not timechange.deterministic:
        raise DomainError("the clock-changed SDE needs a deterministic rho")
    drift, diffusion = timechanged_coefficients(w, timechange.rho_prime)
    lo, hi = w.window
    return DiffusionSpec(
        name=name,
        mu=drift,
        sigma=diffusion,
        interval=interval or Interval(lo, hi, UNREACHABLE, UNREACHABLE),
        eta=eta,
        formulas={"mu": f"-rho'(t) w''(x)/(2 w'(x)^3) [{w.label}, {timechange.label}]",
                  "sigma": f"sqrt(rho'(t))/w'(x) [{w.label}, {timechange.label}]"},
        kernel=KernelModel("timechange", table=(w.nodes, w.deriv, w.second_deriv), rho_prime=timechange.rho_prime),
        time_dependent=True,
    )


# --------------------------------------------------------------------------
# Built-in catalog
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    spec: DiffusionSpec
    mapping: ConjugationMap | ScaleFunction | None
    timechange: TimeChange
    scheme: str
    scale: ScaleFunction | None = None
    conjugation: str | None = None
    solution: str | None = None
    special: bool = False
    note: str = ""

    @property
    def name(self) -> str:
        return self.spec.name

    def describe(self) -> dict:
        d = {
            "name": self.name,
            "spec": self.spec.describe(),
            "timechange": self.timechange.describe(),
            "scheme": self.scheme,
            "special": self.special,
        }
        if self.conjugation:
            d["conjugation"] = self.conjugation
        if self.solution:
            d["solution"] = self.solution
        if self.scale is not None:
            d["scale_basepoint"] = self.scale.basepoint
        if self.note:
            d["note"] = self.note
        return d

    def to_text(self) -> str:
        return json.dumps(self.describe(), sort_keys=True)


def clock_constant(scale: ScaleFunction, sigma: Callable, x_ref: float) -> float:
    """``(w'(x) sigma(x))^2`` at a reference point: the slope of a linear clock."""
    return float((scale.prime(x_ref) * float(sigma(x_ref))) ** 2)


def _bm_spec():
    return DiffusionSpec(
        "bm", lambda x: np.zeros_like(np.asarray(x, dtype=float)), lambda x: np.ones_like(np.asarray(x, dtype=float)),
        Interval(), 0.0, {"mu": "0", "sigma": "1"}, KernelModel("const", (0.0, 1.0)),
    )


def _cube_spec():
    return DiffusionSpec(
        "cube", lambda x: np.cbrt(x) / 3.0, lambda x: np.cbrt(x) ** 2,
        Interval(), 1.0, {"mu": "x^(1/3)/3", "sigma": "x^(2/3)"}, KernelModel("cube"),
    )


def _feller_spec():
    return DiffusionSpec(
        "feller", lambda x: np.full_like(np.asarray(x, dtype=float), 0.25),
        lambda x: np.sqrt(np.maximum(x, 0.0)),
        Interval(0.0, math.inf, CLAMP, UNREACHABLE), 25.0,
        {"mu": "1/4", "sigma": "sqrt(x v 0)"}, KernelModel("feller", (0.25,)),
    )


def _wright_fisher_spec():
    return DiffusionSpec(
        "wright_fisher", lambda x: 0.25 - 0.5 * np.asarray(x, dtype=float),
        lambda x: np.sqrt(np.maximum(x * (1.0 - x), 0.0)),
        Interval(0.0, 1.0, CLAMP, CLAMP), 0.5,
        {"mu": "1/4 - x/2", "sigma": "sqrt(x(1-x) v 0)"}, KernelModel("wright_fisher"),
    )


def _gbm_spec(s: float = 1.0):
    return DiffusionSpec(
        "gbm", lambda x: 0.5 * s * s * np.asarray(x, dtype=float), lambda x: s * np.asarray(x, dtype=float),
        Interval(0.0, math.inf, UNREACHABLE, UNREACHABLE), 1.0,
        {"mu": f"{s * s / 2!r}*x", "sigma": f"{s!r}*x"}, KernelModel("gbm", (s,)),
    )


def _bounded_sigma_spec():
    return DiffusionSpec(
        "bounded_sigma", lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x: 1.0 + 0.5 * np.sin(x),
        Interval(), 0.0, {"mu": "0", "sigma": "1 + sin(x)/2"}, KernelModel("bounded_sigma", (1.0, 0.5)),
    )


def _integrated_bm_spec():
    return DiffusionSpec(
        "integrated_bm", None, None, Interval(), 0.0,
        {"mu": "n/a (X = int_0^t B ds)", "sigma": "n/a"},
    )


def _clock_bm_spec():
    return DiffusionSpec(
        "clock_bm", lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x, t: np.asarray(t, dtype=float) * np.ones_like(np.asarray(x, dtype=float)),
        Interval(), 0.0, {"mu": "0", "sigma": "t"}, time_dependent=True,
    )


def _cubic_clock() -> TimeChange:
    return replace(TimeChange.power(1.0 / 3.0, 3.0), label="rho(t)=t^3/3")


@lru_cache(maxsize=None)
def builtin_catalog() -> tuple[CatalogEntry, ...]:
    """The worked examples: Brownian motion, the four conjugated diffusions,
    integrated BM, a bounded-volatility diffusion with a random clock, and
    BM run on the cubic clock ``t^3/3``."""
    entries = []

    bm = _bm_spec()
    w_bm = scale_function(bm, 0.0, window=(-200.0, 200.0))
    entries.append(CatalogEntry(bm, w_bm, TimeChange.linear(1.0), "exact_bm", scale=w_bm, solution="X(t)=eta+B_t"))

    conjugated = [
        (_cube_spec(), 0.0, (-8.0, 27.0), "uniform", "3*x^(1/3)", "X(t)=(x^(1/3)+B_t/3)^3", 1.0, (1e-6, 216.0)),
        (_feller_spec(), 0.0, (0.0, 100.0), "uniform", "2*sqrt(x)", "X(t)=(B_t+2*sqrt(x))^2/4", 1.0, (1e-6, 400.0)),
        (_wright_fisher_spec(), 0.0, (0.0, 1.0), "uniform", "2*arcsin(sqrt(x))",
         "X(t)=sin^2(B_t/2+arcsin(sqrt(x)))", 0.5, (1e-9, 1.0 - 1e-9)),
        (_gbm_spec(1.0), 1.0, (math.exp(-30.0), math.exp(30.0)), "geometric", "ln(x)/1.0",
         "X(t)=exp(1.0*B_t+ln(x))", 1.0, (math.exp(-30.0), math.exp(30.0))),
    ]
    for spec, v0, vwin, spacing, vform, sol, w0, wwin in conjugated:
        cmap = conjugation_map(spec.diffusion, v0, window=vwin, spacing=spacing, formula=vform)
        w = scale_function(spec, w0, window=wwin, spacing=spacing)
        c = clock_constant(w, spec.diffusion, w0)
        entries.append(CatalogEntry(spec, cmap, TimeChange.linear(c), "euler", scale=w, conjugation=vform, solution=sol))

    entries.append(CatalogEntry(
        _integrated_bm_spec(), None, _cubic_clock(), "exact_integrated_bm",
        solution="X(t)=int_0^t B_s ds", special=True,
        note="Gaussian with Var X(t)=t^3/3; not a Markov diffusion in X alone",
    ))

    bs = _bounded_sigma_spec()
    w_bs = scale_function(bs, 0.0, window=(-100.0, 100.0))
    entries.append(CatalogEntry(bs, w_bs, TimeChange.linear_envelopes(0.25, 2.25), "euler", scale=w_bs,
                                note="random clock rho(t)=int sigma(X)^2 ds squeezed by sigma in [1/2, 3/2]"))

    entries.append(CatalogEntry(
        _clock_bm_spec(), None, _cubic_clock(), "exact_clock_bm",
        solution="X(t)=B(t^3/3)", note="Brownian motion on the deterministic clock t^3/3 (dX = t dB)",
    ))
    return tuple(entries)


def get_entry(name: str) -> CatalogEntry:
    for e in builtin_catalog():
        if e.name == name:
            return e
    raise KeyError(f"no catalog entry named {name!r}; known: {', '.join(e.name for e in builtin_catalog())}")
