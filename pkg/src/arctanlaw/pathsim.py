"""Path simulation and extraction of the running-maximum functionals.

Grid conventions: a path is observed at ``k * dt`` for ``k = 0..n_steps``;
a time ``r`` is rounded to the nearest grid index. Hitting times are the
first grid exceedance (``>=``) at or after ``r``; a path that has not hit by
the horizon is censored.

Functionals extracted from one path::

    M_r, L_r   max and min over grid times in [0, r]
    S          first t >= r with X(t) >= M_r, minus r
    U          first t >= r with X(t) <= L_r, minus r
    theta      first grid time in [0, r] attaining M_r
    occupation dt * #{k : k dt < r, X(k dt) > 0}
    S12        first t >= r2 with X(t) >= max over [r1, r2], minus r2
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .catalog import CatalogEntry, ConjugationMap, DiffusionSpec, ScaleFunction, get_entry
from .errors import ConfigError, DomainError, TabulationRangeError
from .rng import path_bitgen

SCHEMES = ("euler", "exact_bm", "exact_integrated_bm", "exact_clock_bm")
FUNCTIONALS = ("S", "U", "theta", "occupation", "two_interval")
CHUNK = 2048


@dataclass(frozen=True)
class SamplerConfig:
    """Grid, sample size, seed and scheme of a Monte Carlo run."""

    dt: float = 1e-3
    horizon: float = 21.0
    n_paths: int = 100_000
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not self.horizon >= self.dt:
            raise ConfigError(f"need 0 < dt <= horizon, got dt={self.dt!r}, horizon={self.horizon!r}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def index(self, r: float, name: str = "r") -> int:
        """Grid index nearest to time ``r``."""
        return grid_index(r, self.dt, self.n_steps, name)


def grid_index(r: float, dt: float, n_steps: int, name: str = "r") -> int:
    r = float(r)
    if r < 0 or math.isnan(r):
        raise DomainError(f"{name} must be nonnegative")
    k = int(round(r / dt))
    if k > n_steps:
        raise DomainError(f"{name}={r!r} lies beyond the horizon {n_steps * dt!r}")
    return k


@dataclass
class PathGrid:
    """A trajectory sampled at ``k * dt`` for ``k = 0..n_steps``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("values must be a nonempty 1-d array")

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    def index(self, r, name="r") -> int:
        return grid_index(r, self.dt, self.n_steps, name)


@dataclass(frozen=True)
class FunctionalSample:
    """Functionals of one path; censored hitting times are ``None``."""

    path_index: int
    M_r: float
    L_r: float
    S: float | None
    theta: float
    U: float | None
    occupation: float
    S12: float | None = None


# --------------------------------------------------------------------------
# Single-path extraction
# --------------------------------------------------------------------------


def running_extrema(path: PathGrid, r: float) -> tuple[float, float]:
    k = path.index(r)
    seg = path.values[: k + 1]
    return float(seg.max()), float(seg.min())


def sample_S(path: PathGrid, r: float) -> float | None:
    """First grid time ``t >= r`` with ``X(t) >= M_r``, minus ``r``; ``None`` if censored."""
    k = path.index(r)
    m = path.values[: k + 1].max()
    hit = np.flatnonzero(path.values[k:] >= m)
    return None if hit.size == 0 else float(hit[0] * path.dt)


def sample_U(path: PathGrid, r: float) -> float | None:
    """First grid time ``t >= r`` with ``X(t) <= L_r``, minus ``r``; ``None`` if censored."""
    k = path.index(r)
    low = path.values[: k + 1].min()
    hit = np.flatnonzero(path.values[k:] <= low)
    return None if hit.size == 0 else float(hit[0] * path.dt)


def sample_theta(path: PathGrid, r: float) -> float:
    """Earliest grid time in ``[0, r]`` at which the maximum over ``[0, r]`` is attained."""
    k = path.index(r)
    return float(int(np.argmax(path.values[: k + 1])) * path.dt)


def sample_two_interval_S(path: PathGrid, r1: float, r2: float) -> float | None:
    """First grid time ``t >= r2`` with ``X(t) >= max over [r1, r2]``, minus ``r2``."""
    if not float(r1) < float(r2):
        raise DomainError(f"need r1 < r2, got r1={r1!r}, r2={r2!r}")
    k1 = path.index(r1, "r1")
    k2 = path.index(r2, "r2")
    if not k1 < k2:
        raise DomainError("r1 and r2 round to the same grid point")
    m = path.values[k1:k2 + 1].max()
    hit = np.flatnonzero(path.values[k2:] >= m)
    return None if hit.size == 0 else float(hit[0] * path.dt)


def occupation_time_positive(path: PathGrid, r: float, level: float = 0.0) -> float:
    """Left-endpoint estimate of the time spent above ``level`` during ``[0, r]``."""
    k = path.index(r)
    return float(np.count_nonzero(path.values[:k] > level) * path.dt)


def empirical_rho(path: PathGrid, w: ScaleFunction | ConjugationMap, sigma) -> np.ndarray:
    """Left Riemann sum of ``(w'(X) sigma(X))**2`` on the grid, starting at 0.

    Raises :class:`TabulationRangeError` if the path leaves the window on
    which ``w'`` is tabulated.
    """
    x = path.values[:-1]
    wp = w.prime(x) if isinstance(w, ScaleFunction) else w.v_prime(x)
    integrand = (np.asarray(wp, dtype=float) * np.asarray(sigma(x), dtype=float)) ** 2
    return np.concatenate([[0.0], np.cumsum(integrand * path.dt)])


# --------------------------------------------------------------------------
# Engines for a (spec, config)
# --------------------------------------------------------------------------


def _resolve(spec) -> tuple[DiffusionSpec, CatalogEntry | None]:
    if isinstance(spec, CatalogEntry):
        return spec.spec, spec
    if isinstance(spec, str):
        e = get_entry(spec)
        return e.spec, e
    if isinstance(spec, DiffusionSpec):
        try:
            e = get_entry(spec.name)
        except KeyError:
            return spec, None
        return spec, e if e.spec.name == spec.name and _same_model(e.spec, spec) else None
    raise TypeError(f"expected a DiffusionSpec or CatalogEntry, got {type(spec).__name__}")


def _same_model(a: DiffusionSpec, b: DiffusionSpec) -> bool:
    return a.mu is b.mu and a.sigma is b.sigma


@dataclass
class _Plan:
    """Everything a worker needs to turn path indices into functionals."""

    scheme: str
    kscheme: str
    spec: DiffusionSpec
    sd: np.ndarray | None = None
    cmap: ConjugationMap | None = None
    occ_level: float = 0.0

    def x0(self, bitgen) -> float:
        gen = np.random.Generator(bitgen)
        x = self.spec.eta.sample(gen)
        return float(self.cmap(x)) if self.cmap is not None else x

    def to_state(self, y):
        if self.cmap is None:
            return y
        lo, hi = self.cmap.v.values[0], self.cmap.v.values[-1]
        return self.cmap.v_inv(np.clip(y, lo, hi))


def _plan(spec, config: SamplerConfig) -> _Plan:
    s, entry = _resolve(spec)
    scheme = config.scheme
    n = config.n_steps
    dt = config.dt
    if scheme == "euler":
        if s.mu is None or s.sigma is None:
            raise ConfigError(f"{s.name} has no SDE coefficients; use its exact scheme")
        return _Plan(scheme, "euler", s)
    if scheme == "exact_integrated_bm":
        if s.name != "integrated_bm":
            raise ConfigError("exact_integrated_bm only applies to the integrated_bm entry")
        return _Plan(scheme, "intbm", s)
    if scheme == "exact_clock_bm":
        if entry is None or entry.scheme != "exact_clock_bm":
            raise ConfigError("exact_clock_bm only applies to Brownian motion on a deterministic clock")
        rho = entry.timechange.rho
        t = np.arange(n + 1) * dt
        sd = np.sqrt(np.diff(np.asarray(rho(t), dtype=float)))
        return _Plan(scheme, "gauss", s, sd=sd)
    # exact_bm: Brownian motion itself, or a conjugated diffusion through v^{-1}
    sd = np.full(n, math.sqrt(dt))
    if s.name == "bm" and entry is not None:
        return _Plan(scheme, "gauss", s, sd=sd)
    if entry is not None and isinstance(entry.mapping, ConjugationMap):
        cmap = entry.mapping
        lo, hi = cmap.window
        level = float(cmap(0.0)) if lo <= 0.0 <= hi else (-math.inf if lo > 0 else math.inf)
        return _Plan(scheme, "gauss", s, sd=sd, cmap=cmap, occ_level=level)
    raise ConfigError(f"exact_bm does not apply to {s.name}: it is neither BM nor conjugated to BM")


def _engine(plan: _Plan, config: SamplerConfig, rk, r1k=-1, r2k=-1, need=("S", "U"), backend=None):
    return kernels.make_engine(
        plan.kscheme, config.n_steps, config.dt, rk, r1k, r2k,
        need_S="S" in need, need_U="U" in need, need_two="two_interval" in need,
        spec=plan.spec, sd=plan.sd, occ_level=plan.occ_level, backend=backend,
    )


def simulate_path(spec, config: SamplerConfig, stream_index: int, backend: str | None = None) -> PathGrid:
    """Simulate path ``stream_index`` of the run ``(spec, config)`` over the full horizon.

    Raises
    ------
    ConfigError
        If the scheme does not apply to ``spec``.
    TabulationRangeError
        If the path leaves the window of a tabulated coefficient.
    """
    plan = _plan(spec, config)
    eng = _engine(plan, config, 0, need=(), backend=backend)
    bg = path_bitgen(config.seed, stream_index)
    x0 = plan.x0(bg)
    values, fail = eng.path(bg, x0)
    if fail >= 0:
        raise TabulationRangeError(
            f"path {stream_index} left the tabulated coefficient window at step {fail} "
            f"(x={values[-1]!r}); rebuild the table on a wider window"
        )
    values = plan.to_state(values)
    _check_inside(plan.spec, values, stream_index)
    return PathGrid(config.dt, values)


def _check_inside(spec: DiffusionSpec, values, where):
    iv = spec.interval
    inside = iv.contains(values)
    if not np.all(inside):
        # only unreachable endpoints can be crossed; the clamp policy projects
        raise AssertionError(
            f"internal invariant violated: {spec.name} path {where} left its state interval "
            f"({iv.lo}, {iv.hi}); reduce dt"
        )


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


@dataclass
class SampleSet:
    """Columnar functionals of ``n`` paths; censored hitting times are NaN."""

    r: float
    dt: float
    horizon: float
    path_index: np.ndarray
    M_r: np.ndarray
    L_r: np.ndarray
    theta: np.ndarray
    occupation: np.ndarray
    S: np.ndarray
    U: np.ndarray
    S12: np.ndarray | None = None
    r1: float | None = None
    r2: float | None = None
    functionals: tuple = field(default=FUNCTIONALS)

    def __len__(self):
        return int(self.path_index.size)

    @property
    def valid_range(self) -> float:
        """Largest ``t`` for which ``P(S <= t)`` is estimated without bias."""
        return self.horizon - self.r

    @property
    def valid_range_two(self) -> float:
        return self.horizon - self.r2

    def censored(self, what: str = "S") -> np.ndarray:
        return np.isnan(getattr(self, what))

    def censored_fraction(self, what: str = "S") -> float:
        return float(self.censored(what).mean())

    def sample(self, i: int) -> FunctionalSample:
        def opt(a):
            return None if a is None or math.isnan(a[i]) else float(a[i])

        return FunctionalSample(int(self.path_index[i]), float(self.M_r[i]), float(self.L_r[i]), opt(self.S),
                                float(self.theta[i]), opt(self.U), float(self.occupation[i]), opt(self.S12))

    def to_csv(self, path) -> None:
        """Write ``path_index, M_r, L_r, S, theta, U, occupation, censored_S, censored_U``."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["path_index", "M_r", "L_r", "S", "theta", "U", "occupation", "censored_S", "censored_U"])
            for i in range(len(self)):
                s, u = self.S[i], self.U[i]
                wr.writerow([
                    int(self.path_index[i]), fmt(self.M_r[i]), fmt(self.L_r[i]),
                    "NA" if math.isnan(s) else fmt(s), fmt(self.theta[i]),
                    "NA" if math.isnan(u) else fmt(u), fmt(self.occupation[i]),
                    int(math.isnan(s)), int(math.isnan(u)),
                ])


def fmt(x) -> str:
    """Shortest round-trip decimal, with integral values printed without ``.0``."""
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


_TASK = None


def _run_chunk(bounds):
    lo, hi = bounds
    plan, config, eng = _TASK
    bgs = [path_bitgen(config.seed, i) for i in range(lo, hi)]
    x0 = np.array([plan.x0(bg) for bg in bgs])
    M, L, M12, theta, occ, S, U, S12, fail = eng.scan(bgs, x0)
    if fail >= 0:
        return ("fail", lo + fail)
    return ("ok", (M, L, M12, theta, occ, S, U, S12))


def monte_carlo(spec, config: SamplerConfig, r: float, functionals=("S", "U", "theta", "occupation"),
                r1: float | None = None, r2: float | None = None, workers: int = 1,
                backend: str | None = None, first_index: int = 0) -> SampleSet:
    """Functionals of paths ``first_index .. first_index + n_paths - 1``.

    Path ``k`` uses the stream ``(config.seed, k)`` only, so the result does
    not depend on ``workers``. ``M_r``, ``L_r``, ``theta`` and ``occupation``
    are always extracted; ``functionals`` selects which hitting times are
    needed, and paths stop as soon as those are resolved. ``two_interval``
    requires ``r1`` and ``r2``.
    """
    global _TASK
    bad = set(functionals) - set(FUNCTIONALS)
    if bad:
        raise ConfigError(f"unknown functionals {sorted(bad)}")
    plan = _plan(spec, config)
    rk = config.index(r)
    if rk < 1:
        raise DomainError("r must be at least one grid step")
    r1k = r2k = -1
    if "two_interval" in functionals:
        if r1 is None or r2 is None:
            raise ConfigError("the two-interval functional needs r1 and r2")
        if not float(r1) < float(r2):
            raise DomainError("need r1 < r2")
        r1k, r2k = config.index(r1, "r1"), config.index(r2, "r2")
        if not r1k < r2k:
            raise DomainError("r1 and r2 round to the same grid point")
    eng = _engine(plan, config, rk, r1k, r2k, functionals, backend)
    n = int(config.n_paths)
    chunks = [(first_index + a, first_index + min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
    _TASK = (plan, config, eng)
    try:
        workers = max(1, min(int(workers), len(chunks)))
        if workers == 1:
            results = [_run_chunk(c) for c in chunks]
        else:
            with mp.get_context("fork").Pool(workers) as pool:
                results = pool.map(_run_chunk, chunks, chunksize=1)
    finally:
        _TASK = None
    for status, payload in results:
        if status == "fail":
            raise TabulationRangeError(
                f"path {payload} left the tabulated coefficient window; rebuild the table on a wider window"
            )
    cols = [np.concatenate([p[j] for _, p in results]) for j in range(8)]
    M, L, M12, theta, occ, S, U, S12 = cols
    dt = config.dt

    def times(steps):
        return np.where(steps >= 0, steps * dt, np.nan)

    M_state, L_state = plan.to_state(M), plan.to_state(L)
    if plan.kscheme == "euler":
        _check_inside(plan.spec, np.concatenate([M_state, L_state]), "(some)")
    return SampleSet(
        r=rk * dt, dt=dt, horizon=config.n_steps * dt,
        path_index=np.arange(first_index, first_index + n),
        M_r=M_state, L_r=L_state, theta=theta * dt, occupation=occ * dt,
        S=times(S) if "S" in functionals else np.full(n, np.nan),
        U=times(U) if "U" in functionals else np.full(n, np.nan),
        S12=times(S12) if "two_interval" in functionals else None,
        r1=None if r1k < 0 else r1k * dt, r2=None if r2k < 0 else r2k * dt,
        functionals=tuple(functionals),
    )


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
