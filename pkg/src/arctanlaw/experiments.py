"""Named verification experiments: Monte Carlo samples against the closed-form laws.

Each experiment reads an :class:`ExperimentManifest`, runs one or more
Monte Carlo batches, and returns an :class:`ExperimentReport` with a list of
checks ``(statistic, threshold, passed)``. Comparison tables are written as
CSV next to the JSON report.

Manifests are flat ``key = value`` text files; ``#`` starts a comment. Every
key can be overridden from the command line.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import integrate

from . import laws, pathsim, stats
from .catalog import Interval, TimeChange, UniformEta, builtin_catalog, get_entry, timechanged_spec
from .errors import ConfigError

OUT_ENV = "ARCTANLAW_OUT"
DEFAULT_OUT = "arctanlaw_out"
DEFAULT_SEED = 20240229


@dataclass
class ExperimentManifest:
    """Parameters of one experiment run; ``None`` means the experiment's default."""

    experiment: str
    spec: str | None = None
    r: float | None = None
    r1: float | None = None
    r2: float | None = None
    dt: float | None = None
    horizon: float | None = None
    paths: int | None = None
    seed: int = DEFAULT_SEED
    workers: int = 1
    tolerance: float | None = None
    out: str | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}")
        if self.spec is not None:
            try:
                get_entry(self.spec)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if self.paths is not None and self.paths < 1:
            raise ConfigError("paths must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for k in ("r", "dt", "horizon"):
            v = getattr(self, k)
            if v is not None and not v > 0:
                raise ConfigError(f"{k} must be positive")

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


_TYPES = {f.name: f.type for f in fields(ExperimentManifest)}


def _coerce(key: str, raw: str):
    typ = str(_TYPES[key])
    raw = raw.strip()
    if raw.lower() in ("", "none", "default"):
        return None
    if "int" in typ:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if "float" in typ:
        return float(raw)
    return raw


def parse_manifest(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of typed manifest fields."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"manifest line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"manifest line {n}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, val)
        except ValueError:
            raise ConfigError(f"manifest line {n}: bad value {val!r} for {key}") from None
    return out


def load_manifest(path=None, **overrides) -> ExperimentManifest:
    """Manifest from a file (optional) with non-``None`` overrides applied on top."""
    data = {}
    if path is not None:
        data = parse_manifest(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in data:
        raise ConfigError("the manifest names no experiment")
    return ExperimentManifest(**data)


@dataclass
class Check:
    name: str
    statistic: float
    threshold: float
    passed: bool
    relation: str = "<="

    @classmethod
    def at_most(cls, name, statistic, threshold):
        return cls(name, float(statistic), float(threshold), bool(statistic <= threshold))

    @classmethod
    def below(cls, name, statistic, threshold):
        return cls(name, float(statistic), float(threshold), bool(statistic < threshold), "<")

    @classmethod
    def within(cls, name, statistic, lo, hi):
        return cls(name, float(statistic), [float(lo), float(hi)], bool(lo <= statistic <= hi), "in")


@dataclass
class ExperimentReport:
    manifest: dict
    effective: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    duration_s: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "effective": self.effective,
            "checks": [asdict(c) for c in self.checks],
            "info": self.info,
            "passed": self.passed,
            "error": self.error,
            "duration_s": self.duration_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def statistics(self) -> list:
        """``(name, statistic)`` pairs; equal across worker counts for a fixed seed."""
        return [(c.name, c.statistic) for c in self.checks]


class _Run:
    """Shared plumbing handed to experiment bodies."""

    def __init__(self, m: ExperimentManifest, report: ExperimentReport):
        self.m = m
        self.report = report
        self.tables: dict[str, stats.Comparison] = {}

    def thr(self, default: float) -> float:
        return self.m.tolerance if self.m.tolerance is not None else default

    def specs(self, default: list[str]) -> list[str]:
        return [self.m.spec] if self.m.spec else default

    def sample(self, label, spec, *, r=None, dt=None, horizon=None, n=None, scheme=None, seed_offset=0,
               functionals=("S",), r1=None, r2=None, entry_spec=None):
        m = self.m
        entry = get_entry(spec)
        r = m.r if m.r is not None else (r if r is not None else 1.0)
        dt = m.dt if m.dt is not None else (dt or 1e-3)
        if "two_interval" in functionals:
            r1 = m.r1 if m.r1 is not None else r1
            r2 = m.r2 if m.r2 is not None else r2
        far = r2 if "two_interval" in functionals else r
        horizon = m.horizon if m.horizon is not None else (horizon if horizon is not None else far + 20.0)
        n = m.paths if m.paths is not None else n
        cfg = pathsim.SamplerConfig(dt=dt, horizon=horizon, n_paths=n, seed=m.seed + seed_offset,
                                    scheme=scheme or entry.scheme)
        target = entry_spec if entry_spec is not None else entry
        ss = pathsim.monte_carlo(target, cfg, r, functionals, r1=r1, r2=r2, workers=m.workers, backend=m.backend)
        eff = {
            "spec": getattr(target, "name", spec), "scheme": cfg.scheme, "r": ss.r, "dt": dt,
            "horizon": ss.horizon, "n_paths": n, "seed": cfg.seed,
            "censored_fraction_S": ss.censored_fraction("S") if "S" in functionals else None,
        }
        if "U" in functionals:
            eff["censored_fraction_U"] = ss.censored_fraction("U")
        if ss.S12 is not None:
            eff.update(r1=ss.r1, r2=ss.r2, censored_fraction_S12=ss.censored_fraction("S12"))
        self.report.effective[label] = eff
        return ss, cfg


def _grid(lo, hi, n=200):
    return stats.log_grid(lo, hi, n)


# --------------------------------------------------------------------------
# Experiment bodies
# --------------------------------------------------------------------------


def exp_bm_arctangent(run: _Run):
    """Brownian motion against ``(2/pi) arctan sqrt(t/r)``."""
    spec = run.specs(["bm"])[0]
    ss, cfg = run.sample(spec, spec, n=100_000, horizon=None)
    e = stats.ecdf(ss.S, ss.valid_range)
    law = lambda t: laws.bm_cdf(t, ss.r)  # noqa: E731
    pts = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    gaps = np.abs(e.eval(pts) - law(pts))
    for t, g in zip(pts, gaps):
        run.report.checks.append(Check.at_most(f"pointwise_gap_t={pathsim.fmt(t)}", g, run.thr(0.02)))
    grid = _grid(0.01, min(10.0, ss.valid_range))
    run.report.checks.append(Check.at_most("grid_ks", stats.ks_one_sample(e, law, grid), run.thr(0.03)))
    run.report.info["dkw_99"] = stats.dkw_band(len(ss), 0.01)
    run.report.info["theoretical_censored_fraction"] = 1.0 - laws.bm_cdf(ss.valid_range, ss.r)
    run.tables[spec] = stats.compare(e, grid, law, band=stats.dkw_band(len(ss), 0.01))


REDUCTION_DT = {"cube": 5e-4, "feller": 5e-4, "wright_fisher": 5e-4, "gbm": 1e-3}


def _reduction(run: _Run, names):
    for name in names:
        ss, cfg = run.sample(name, name, n=50_000, dt=REDUCTION_DT.get(name, 1e-3), scheme="euler")
        e = stats.ecdf(ss.S, ss.valid_range)
        law = lambda t, r=ss.r: laws.bm_cdf(t, r)  # noqa: E731
        grid = _grid(cfg.dt, ss.valid_range)
        run.report.checks.append(Check.at_most(f"{name}_grid_ks", stats.ks_one_sample(e, law, grid), run.thr(0.035)))
        run.tables[name] = stats.compare(e, grid, law, band=stats.dkw_band(len(ss), 0.01))


def exp_conjugated_reduction(run: _Run):
    """All four conjugated diffusions against the Brownian arctangent law."""
    _reduction(run, run.specs(list(REDUCTION_DT)))


def _single_reduction(name):
    def body(run: _Run):
        _reduction(run, run.specs([name]))

    body.__doc__ = f"``{name}`` (Euler) against the Brownian arctangent law."
    return body


def _compound(run: _Run, default_spec, pts):
    spec = run.specs([default_spec])[0]
    entry = get_entry(spec)
    ss, cfg = run.sample(spec, spec, n=100_000, horizon=11.0)
    e = stats.ecdf(ss.S, ss.valid_range)
    law = laws.CompoundArctanLaw(ss.r, entry.timechange)
    pts = np.asarray(pts, dtype=float)
    for t, g in zip(pts, np.abs(e.eval(pts) - law.cdf(pts))):
        run.report.checks.append(Check.at_most(f"pointwise_gap_t={pathsim.fmt(t)}", g, run.thr(0.02)))
    grid = _grid(cfg.dt, ss.valid_range)
    run.report.checks.append(Check.at_most("grid_ks", stats.ks_one_sample(e, law.cdf, grid), run.thr(0.03)))
    run.tables[spec] = stats.compare(e, grid, law.cdf, band=stats.dkw_band(len(ss), 0.01))


def exp_integrated_bm_compound(run: _Run):
    """Integrated BM against the compound law with ``rho = t^3/3``."""
    _compound(run, "integrated_bm", [0.25, 1.0, 2.0, 4.0])


def exp_clock_bm_compound(run: _Run):
    """BM run on the clock ``t^3/3`` against the same compound law."""
    _compound(run, "clock_bm", [0.25, 1.0, 2.0, 4.0])


def exp_density_consistency(run: _Run):
    """Density against a central difference of the CDF, and its total mass."""
    h = 1e-5
    clocks = {"identity": TimeChange.linear(1.0), "cubic": TimeChange.power(1.0 / 3.0, 3.0)}
    worst_rel = 0.0
    worst_mass = 0.0
    for cname, tc in clocks.items():
        for r in (0.5, 1.0):
            law = laws.CompoundArctanLaw(r, tc)
            for t in (0.5, 1.0, 2.0):
                fd = (law.cdf(t + h) - law.cdf(t - h)) / (2 * h)
                rel = abs(law.pdf(t) - fd) / law.pdf(t)
                worst_rel = max(worst_rel, rel)
            mass = total_mass(law)
            worst_mass = max(worst_mass, abs(mass - 1.0))
            run.report.info[f"mass_{cname}_r={pathsim.fmt(r)}"] = mass
    run.report.checks.append(Check.at_most("pdf_vs_central_difference_rel", worst_rel, run.thr(1e-6)))
    run.report.checks.append(Check.at_most("total_mass_error", worst_mass, 1e-8))


def total_mass(law: laws.CompoundArctanLaw) -> float:
    """``int_0^inf f(t) dt`` after ``t = u**2``, which removes the endpoint singularity."""

    def g(u):
        return 0.0 if u == 0.0 else 2.0 * u * law.pdf(u * u)

    a, _ = integrate.quad(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    b, _ = integrate.quad(g, 1.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return a + b


def exp_stochastic_bounds(run: _Run):
    """``bounded_sigma`` against the upper and lower envelope laws."""
    spec = run.specs(["bounded_sigma"])[0]
    entry = get_entry(spec)
    ss, cfg = run.sample(spec, spec, n=100_000, horizon=41.0)
    e = stats.ecdf(ss.S, ss.valid_range)
    bp = laws.BoundPair.from_timechange(ss.r, entry.timechange)
    tmax = min(30.0, ss.valid_range)
    grid = np.concatenate([[0.0], _grid(cfg.dt, tmax)])
    emp = e.eval(grid)
    over = float(np.max(emp - bp.upper(grid)))
    run.report.checks.append(Check.at_most("ecdf_minus_upper", over, run.thr(0.015)))
    low = grid[grid > bp.t_bar]
    under = float(np.max(bp.lower(low) - e.eval(low))) if low.size else -math.inf
    run.report.checks.append(Check.at_most("lower_minus_ecdf", under, run.thr(0.015)))
    run.report.info["t_bar"] = bp.t_bar
    violations = envelope_violations(entry, cfg, 100)
    run.report.checks.append(Check.at_most("pathwise_rho_envelope_violations", violations, 0))
    run.tables[spec] = stats.compare(e, grid, lambda t: np.full(np.shape(t), np.nan), lower=bp.lower, upper=bp.upper)


def envelope_violations(entry, cfg: pathsim.SamplerConfig, n: int) -> int:
    """Grid points where ``alpha(t) <= rho_hat(t) <= beta(t)`` fails, over ``n`` paths."""
    tc = entry.timechange
    bad = 0
    for i in range(n):
        p = pathsim.simulate_path(entry, cfg, i)
        rho = pathsim.empirical_rho(p, entry.scale, entry.spec.diffusion)
        t = p.times
        bad += int(np.count_nonzero((rho < tc.alpha(t)) | (rho > tc.beta(t))))
    return bad


def exp_two_interval(run: _Run):
    """The maximum over ``[r1, r2]`` regained after ``r2``."""
    for spec in run.specs(["bm", "integrated_bm"]):
        entry = get_entry(spec)
        ss, cfg = run.sample(spec, spec, n=50_000, functionals=("two_interval",), r1=1.0, r2=2.0)
        valid = ss.valid_range_two
        e = stats.ecdf(ss.S12, valid)
        law = lambda t, ss=ss, tc=entry.timechange: laws.two_interval_cdf(t, ss.r1, ss.r2, tc)  # noqa: E731
        grid = _grid(cfg.dt, valid)
        run.report.checks.append(Check.at_most(f"{spec}_grid_ks", stats.ks_one_sample(e, law, grid), run.thr(0.03)))
        run.tables[spec] = stats.compare(e, grid, law, band=stats.dkw_band(len(ss), 0.01))


def exp_u_equals_s(run: _Run):
    """Time to regain the minimum against time to regain the maximum, on the same paths."""
    for spec in run.specs(["bm", "feller"]):
        entry = get_entry(spec)
        ss, cfg = run.sample(spec, spec, n=50_000, functionals=("S", "U"), scheme=entry.scheme)
        es = stats.ecdf(ss.S, ss.valid_range)
        eu = stats.ecdf(ss.U, ss.valid_range)
        grid = _grid(cfg.dt, ss.valid_range)
        run.report.checks.append(Check.at_most(f"{spec}_two_sample_ks", stats.ks_two_sample(eu, es, grid),
                                               run.thr(0.02)))
        run.tables[spec] = stats.compare(eu, grid, other=es)


def exp_arcsine_laws(run: _Run):
    """Occupation time of BM above 0 and the argmax time of BM and integrated BM."""
    ss, cfg = run.sample("occupation_bm", "bm", n=100_000, functionals=("occupation",))
    e = stats.ecdf(ss.occupation, ss.r)
    law = lambda t, r=ss.r: laws.occupation_arcsine_cdf(t, r)  # noqa: E731
    grid = _grid(cfg.dt, ss.r)
    run.report.checks.append(Check.at_most("occupation_grid_ks", stats.ks_one_sample(e, law, grid), run.thr(0.02)))
    run.tables["occupation_bm"] = stats.compare(e, grid, law)
    for spec in run.specs(["bm", "integrated_bm"]):
        entry = get_entry(spec)
        ss, cfg = run.sample(f"theta_{spec}", spec, n=100_000, functionals=("theta",))
        e = stats.ecdf(ss.theta, ss.r)
        law = lambda t, r=ss.r, tc=entry.timechange: laws.theta_arcsine_cdf(t, r, tc)  # noqa: E731
        grid = _grid(cfg.dt, ss.r)
        run.report.checks.append(Check.at_most(f"theta_{spec}_grid_ks", stats.ks_one_sample(e, law, grid),
                                               run.thr(0.02)))
        run.tables[f"theta_{spec}"] = stats.compare(e, grid, law)


def exp_expectation_dichotomy(run: _Run):
    """Truncated means: unbounded growth for BM, convergence for integrated BM."""
    r = run.m.r if run.m.r is not None else 1.0
    bm = [laws.truncated_mean(r, TimeChange.linear(1.0), T) for T in (10.0, 1e2, 1e3, 1e4)]
    vals = [b.value for b in bm]
    inc = np.diff(vals)
    run.report.checks.append(Check.at_most("bm_strictly_increasing_violations", int(np.sum(inc <= 0)), 0))
    for k, ratio in enumerate(inc[1:] / inc[:-1]):
        run.report.checks.append(Check.within(f"bm_increment_ratio_{k + 1}", ratio, 2.5, 4.0))
    tc = TimeChange.power(1.0 / 3.0, 3.0)
    ib = [laws.truncated_mean(r, tc, T) for T in (1e2, 1e3)]
    run.report.checks.append(Check.below("integrated_bm_mean_difference", abs(ib[1].value - ib[0].value),
                                         run.thr(1e-2)))
    run.report.info["bm_truncated_means"] = vals
    run.report.info["integrated_bm_truncated_means"] = [b.value for b in ib]
    run.report.info["integrated_bm_tail_bounds"] = [b.tail_bound for b in ib]
    run.report.info["expectation_finite"] = {"bm": laws.expectation_finite(1.0),
                                             "integrated_bm": laws.expectation_finite(3.0)}


def exp_eta_invariance(run: _Run):
    """The law of ``S(r)`` does not depend on the initial law."""
    spec = run.specs(["bm"])[0]
    entry = get_entry(spec)
    a, cfg = run.sample("eta_point", spec, n=50_000)
    lo, hi = entry.spec.eta.support()
    uni = entry.spec.with_eta(UniformEta(lo - 1.0, hi + 1.0))
    b, _ = run.sample("eta_uniform", spec, n=50_000, seed_offset=1, entry_spec=uni)
    ea, eb = stats.ecdf(a.S, a.valid_range), stats.ecdf(b.S, b.valid_range)
    grid = _grid(cfg.dt, a.valid_range)
    run.report.checks.append(Check.at_most("two_sample_ks", stats.ks_two_sample(ea, eb, grid), run.thr(0.02)))
    run.tables[spec] = stats.compare(eb, grid, other=ea)


def exp_timechange_crossval(run: _Run):
    """The clock-changed SDE built from ``w = ln x`` and ``rho(t) = t`` against direct GBM."""
    entry = get_entry("gbm")
    direct, cfg = run.sample("gbm_direct", "gbm", n=50_000, scheme="euler")
    w = entry.scale
    tc_spec = timechanged_spec("gbm_timechange", w, TimeChange.linear(1.0),
                               Interval(w.window[0], w.window[1]), eta=entry.spec.eta)
    tc, _ = run.sample("gbm_timechange", "gbm", n=50_000, scheme="euler", seed_offset=1, entry_spec=tc_spec)
    ea, eb = stats.ecdf(direct.S, direct.valid_range), stats.ecdf(tc.S, tc.valid_range)
    grid = _grid(cfg.dt, direct.valid_range)
    run.report.checks.append(Check.at_most("two_sample_ks", stats.ks_two_sample(ea, eb, grid), run.thr(0.025)))
    run.tables["gbm"] = stats.compare(eb, grid, other=ea)


EXPERIMENTS = {
    "bm_arctangent": exp_bm_arctangent,
    "cube_reduction": _single_reduction("cube"),
    "feller_reduction": _single_reduction("feller"),
    "wright_fisher_reduction": _single_reduction("wright_fisher"),
    "gbm_reduction": _single_reduction("gbm"),
    "conjugated_reduction": exp_conjugated_reduction,
    "integrated_bm_compound": exp_integrated_bm_compound,
    "clock_bm_compound": exp_clock_bm_compound,
    "density_consistency": exp_density_consistency,
    "stochastic_bounds": exp_stochastic_bounds,
    "two_interval": exp_two_interval,
    "u_equals_s": exp_u_equals_s,
    "arcsine_laws": exp_arcsine_laws,
    "expectation_dichotomy": exp_expectation_dichotomy,
    "eta_invariance": exp_eta_invariance,
    "timechange_crossval": exp_timechange_crossval,
}


def describe_experiments() -> dict:
    return {k: (v.__doc__ or "").strip().splitlines()[0] for k, v in EXPERIMENTS.items()}


def run_experiment(manifest: ExperimentManifest, write: bool = True) -> ExperimentReport:
    """Run ``manifest.experiment``; write ``<name>_report.json`` and comparison CSVs.

    Configuration errors propagate. Other failures are recorded in the
    report's ``error`` field and the partial report is still written.
    """
    echo = {k: v for k, v in asdict(manifest).items() if k not in ("out", "workers", "backend")}
    report = ExperimentReport(manifest=echo)
    run = _Run(manifest, report)
    start = time.perf_counter()
    try:
        EXPERIMENTS[manifest.experiment](run)
    except ConfigError:
        raise
    except Exception as exc:  # keep partial results
        report.error = f"{type(exc).__name__}: {exc}"
    report.duration_s = round(time.perf_counter() - start, 3)
    if write:
        out = manifest.out_dir
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{manifest.experiment}_report.json").write_text(report.to_json() + "\n")
        for label, table in run.tables.items():
            table.to_csv(out / f"{manifest.experiment}_{label}.csv")
    return report


def catalog_names() -> list[str]:
    return [e.name for e in builtin_catalog()]
