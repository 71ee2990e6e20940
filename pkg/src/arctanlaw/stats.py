"""Empirical distribution functions with right censoring, KS distances on a
fixed grid, and the Dvoretzky-Kiefer-Wolfowitz band."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .pathsim import fmt


@dataclass(frozen=True)
class EmpiricalCDF:
    """ECDF of a sample whose censored members are only known to exceed ``valid_range``.

    ``eval(t) = #{x <= t} / n_total`` is unbiased for ``t <= valid_range`` and
    may not be queried beyond it.
    """

    values: np.ndarray
    n_total: int
    n_censored: int
    valid_range: float

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.valid_range):
            raise DomainError(f"ECDF queried beyond its valid range {self.valid_range!r}")
        out = np.searchsorted(self.values, t, side="right") / self.n_total
        return float(out) if out.ndim == 0 else out

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_total


def ecdf(samples, valid_range: float = math.inf, censored=None) -> EmpiricalCDF:
    """Build an :class:`EmpiricalCDF`.

    Parameters
    ----------
    samples : array_like
        Observed values; NaN entries count as censored.
    valid_range : float
        Largest ``t`` at which the estimate may be evaluated.
    censored : array_like of bool or int, optional
        Extra censoring mask, or a count of censored observations not present
        in ``samples``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    cens = np.isnan(x)
    extra = 0
    if censored is not None:
        if np.ndim(censored) == 0:
            extra = int(censored)
        else:
            cens = cens | np.asarray(censored, dtype=bool).ravel()
    n_total = x.size + extra
    if n_total == 0:
        raise DomainError("an ECDF needs at least one sample")
    kept = np.sort(x[~cens])
    return EmpiricalCDF(kept, n_total, int(cens.sum()) + extra, float(valid_range))


def log_grid(lo: float, hi: float, n: int = 200) -> np.ndarray:
    """``n`` logarithmically spaced points on ``[lo, hi]``."""
    if not 0 < lo < hi:
        raise DomainError("a log grid needs 0 < lo < hi")
    g = np.geomspace(lo, hi, n)
    g[0], g[-1] = lo, hi
    return g


def default_grid(e: EmpiricalCDF, dt: float, n: int = 200) -> np.ndarray:
    """Default KS grid: ``n`` log-spaced points over ``[dt, valid_range]``."""
    return log_grid(dt, e.valid_range, n)


def _check_grid(t_grid, valid):
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0:
        raise DomainError("empty t grid")
    if np.any(t < 0) or np.any(t > valid):
        raise DomainError(f"t grid must lie in [0, {valid!r}]")
    return t


def ks_one_sample(e: EmpiricalCDF, analytic_cdf: Callable, t_grid) -> float:
    """``max |ecdf(t) - F(t)|`` over ``t_grid``."""
    t = _check_grid(t_grid, e.valid_range)
    return float(np.max(np.abs(e.eval(t) - np.asarray(analytic_cdf(t), dtype=float))))


def ks_two_sample(a: EmpiricalCDF, b: EmpiricalCDF, t_grid) -> float:
    """``max |ecdf_a(t) - ecdf_b(t)|`` over ``t_grid``."""
    t = _check_grid(t_grid, min(a.valid_range, b.valid_range))
    return float(np.max(np.abs(a.eval(t) - b.eval(t))))


def dkw_band(n: int, delta: float) -> float:
    """Half-width ``sqrt(ln(2/delta) / (2n))`` of the level ``1 - delta`` DKW band."""
    if not n >= 1:
        raise DomainError("n must be at least 1")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class Comparison:
    """ECDF and reference curves on a grid, as written to the comparison CSV."""

    t: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray
    lower_env: np.ndarray
    upper_env: np.ndarray

    @property
    def abs_gap(self) -> np.ndarray:
        return np.abs(self.empirical - self.analytic)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "empirical", "analytic", "lower_env", "upper_env", "abs_gap"])
            for row in zip(self.t, self.empirical, self.analytic, self.lower_env, self.upper_env, self.abs_gap):
                wr.writerow(["NA" if math.isnan(v) else fmt(v) for v in row])


def compare(e: EmpiricalCDF, t_grid, analytic: Callable | None = None, other: EmpiricalCDF | None = None,
            lower: Callable | None = None, upper: Callable | None = None, band: float | None = None) -> Comparison:
    """Tabulate an ECDF against an analytic law (or a second ECDF) and envelopes.

    Envelope columns default to ``reference -/+ band`` when ``band`` is given
    and are NaN otherwise; ``lower``/``upper`` override them with explicit
    curves (NaN where a curve raises).
    """
    t = _check_grid(t_grid, e.valid_range)
    emp = e.eval(t)
    if other is not None:
        ref = other.eval(t)
    elif analytic is not None:
        ref = np.asarray(analytic(t), dtype=float)
    else:
        raise ValueError("need an analytic law or a second ECDF")
    nan = np.full(t.shape, np.nan)
    lo = ref - band if band is not None else nan.copy()
    hi = ref + band if band is not None else nan.copy()
    if lower is not None:
        lo = _pointwise(lower, t)
    if upper is not None:
        hi = _pointwise(upper, t)
    return Comparison(t, emp, ref, lo, hi)


def _pointwise(f, t):
    out = np.full(t.shape, np.nan)
    for i, x in enumerate(t):
        try:
            out[i] = float(f(x))
        except DomainError:
            pass
    return out
