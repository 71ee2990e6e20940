"""Command-line front end.

Exit codes: 0 success (or all checks passed), 1 a verification check failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, kernels, laws, pathsim
from .catalog import builtin_catalog, get_entry
from .errors import ConfigError, DomainError, SingularityError

LAWS = ("bm_cdf", "bm_pdf", "compound_cdf", "compound_pdf", "upper_bound", "lower_bound",
        "two_interval", "theta_arcsine", "occupation_arcsine")


class UsageError(Exception):
    pass


def parse_times(text: str) -> np.ndarray:
    """``"1"``, ``"0.5,1,2"`` or ``"start:stop:num"`` (inclusive linspace)."""
    try:
        if text.count(":") == 2:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise UsageError(f"cannot parse times {text!r}") from None


def _entry(name, default):
    try:
        return get_entry(name or default)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def evaluate_law(law: str, t, spec=None, r=None, r1=None, r2=None) -> np.ndarray:
    if law not in LAWS:
        raise UsageError(f"unknown law {law!r}; choose from {', '.join(LAWS)}")
    r = 1.0 if r is None else r
    if law == "bm_cdf":
        return laws.bm_cdf(t, r)
    if law == "bm_pdf":
        return laws.bm_pdf(t, r)
    if law == "occupation_arcsine":
        return laws.occupation_arcsine_cdf(t, r)
    if law in ("upper_bound", "lower_bound"):
        bp = laws.BoundPair.from_timechange(r, _entry(spec, "bounded_sigma").timechange)
        return bp.upper(t) if law == "upper_bound" else bp.lower(t)
    tc = _entry(spec, "bm").timechange
    if law == "compound_cdf":
        return laws.compound_cdf(t, laws.CompoundArctanLaw(r, tc))
    if law == "compound_pdf":
        return laws.compound_pdf(t, laws.CompoundArctanLaw(r, tc))
    if law == "two_interval":
        if r2 is None:
            raise UsageError("two_interval needs --r2 (and --r1, default 0)")
        return laws.two_interval_cdf(t, 0.0 if r1 is None else r1, r2, tc)
    return laws.theta_arcsine_cdf(t, r, tc)


def cmd_catalog(args) -> int:
    entries = builtin_catalog()
    if args.spec:
        entries = [_entry(args.spec, None)]
    for e in entries:
        if args.json:
            print(e.to_text())
            continue
        d = e.spec.describe()
        iv = d["interval"]
        print(e.name)
        print(f"  mu = {d['mu']}")
        print(f"  sigma = {d['sigma']}")
        print(f"  interval = ({iv['lo']}, {iv['hi']}) [{iv['lo_policy']}, {iv['hi_policy']}]")
        print(f"  eta = {d['eta']}")
        print(f"  time change = {e.timechange.kind}: {e.timechange.label}")
        if e.conjugation:
            print(f"  conjugation v(x) = {e.conjugation}")
        if e.solution:
            print(f"  solution {e.solution}")
        print(f"  scheme = {e.scheme}")
        if e.note:
            print(f"  note: {e.note}")
    return 0


def cmd_law_eval(args) -> int:
    t = parse_times(args.t)
    values = np.atleast_1d(evaluate_law(args.law, t, args.spec, args.r, args.r1, args.r2))
    lines = ["t,value"] + [f"{pathsim.fmt(a)},{pathsim.fmt(b)}" for a, b in zip(t, values)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    entry = _entry(args.spec, "bm")
    r = 1.0 if args.r is None else args.r
    cfg = pathsim.SamplerConfig(
        dt=args.dt or 1e-3, horizon=args.horizon or r + 20.0, n_paths=args.paths or 1000,
        seed=experiments.DEFAULT_SEED if args.seed is None else args.seed, scheme=args.scheme or entry.scheme,
    )
    ss = pathsim.monte_carlo(entry, cfg, r, ("S", "U", "theta", "occupation"), workers=args.workers,
                             backend=args.backend)
    if args.out:
        dest = Path(args.out)
    else:
        outdir = experiments.ExperimentManifest("bm_arctangent").out_dir
        outdir.mkdir(parents=True, exist_ok=True)
        dest = outdir / f"samples_{entry.name}.csv"
    ss.to_csv(dest)
    print(json.dumps({"spec": entry.name, "scheme": cfg.scheme, "r": ss.r, "dt": cfg.dt, "horizon": ss.horizon,
                      "n_paths": len(ss), "censored_fraction_S": ss.censored_fraction("S"),
                      "censored_fraction_U": ss.censored_fraction("U"), "csv": str(dest)}, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    if args.experiment == "list":
        for k, v in experiments.describe_experiments().items():
            print(f"{k}: {v}")
        return 0
    m = experiments.load_manifest(
        args.manifest, experiment=args.experiment, spec=args.spec, r=args.r, r1=args.r1, r2=args.r2, dt=args.dt,
        horizon=args.horizon, paths=args.paths, seed=args.seed, workers=args.workers, tolerance=args.tolerance,
        out=args.out, backend=args.backend,
    )
    report = experiments.run_experiment(m)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.statistic!r} {c.relation} {c.threshold!r}")
    if report.error:
        print(f"ERROR {report.error}")
    print(f"{m.experiment}: {'PASS' if report.passed else 'FAIL'} ({report.duration_s} s) -> {m.out_dir}")
    return 0 if report.passed else 1


def _common(p, *names):
    adders = {
        "spec": lambda: p.add_argument("--spec", help="catalog entry name"),
        "r": lambda: p.add_argument("--r", type=float, help="reference time r"),
        "r1": lambda: p.add_argument("--r1", type=float, help="start of the two-interval window"),
        "r2": lambda: p.add_argument("--r2", type=float, help="end of the two-interval window"),
        "t": lambda: p.add_argument("--t", default="1", help="times: 1 | 0.5,1,2 | start:stop:num"),
        "dt": lambda: p.add_argument("--dt", type=float, help="grid step"),
        "horizon": lambda: p.add_argument("--horizon", type=float, help="simulated time span"),
        "paths": lambda: p.add_argument("--paths", type=int, help="number of paths"),
        "seed": lambda: p.add_argument("--seed", type=int, help="64-bit seed"),
        "workers": lambda: p.add_argument("--workers", type=int, default=1, help="worker processes"),
        "out": lambda: p.add_argument("--out", help="output file or directory"),
        "tolerance": lambda: p.add_argument("--tolerance", type=float, help="override every check threshold"),
        "backend": lambda: p.add_argument("--backend", choices=kernels.available_backends(),
                                          help="path kernel backend"),
    }
    for n in names:
        adders[n]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arctanlaw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="list the built-in diffusions")
    _common(p, "spec")
    p.add_argument("--json", action="store_true", help="one JSON object per entry")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("law", help="closed-form laws")
    lsub = p.add_subparsers(dest="law_command", required=True)
    pe = lsub.add_parser("eval", help="evaluate a law as t,value CSV")
    pe.add_argument("law", help=", ".join(LAWS))
    _common(pe, "spec", "r", "r1", "r2", "t", "out")
    pe.set_defaults(func=cmd_law_eval)

    p = sub.add_parser("simulate", help="dump per-path functionals as CSV")
    _common(p, "spec", "r", "dt", "horizon", "paths", "seed", "workers", "out", "backend")
    p.add_argument("--scheme", choices=pathsim.SCHEMES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a named experiment ('list' to enumerate)")
    p.add_argument("experiment")
    p.add_argument("--manifest", help="key = value manifest file; flags override it")
    _common(p, "spec", "r", "r1", "r2", "dt", "horizon", "paths", "seed", "workers", "out", "tolerance", "backend")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DomainError, SingularityError, KeyError) as exc:
        msg = exc.args[0] if exc.args else type(exc).__name__
        print(f"arctanlaw: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
