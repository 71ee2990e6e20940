"""Compiled against pure-Python path kernels.

Times ``monte_carlo`` for a few catalog entries on both backends and checks
that the hitting times agree. Run from the repository root::

    python benchmarks/bench_kernels.py --paths 4000
"""

import argparse
import time

import numpy as np

from arctanlaw import kernels
from arctanlaw.catalog import get_entry
from arctanlaw.pathsim import SamplerConfig, monte_carlo

CASES = [
    ("bm", "exact_bm", 1e-3),
    ("integrated_bm", "exact_integrated_bm", 1e-3),
    ("feller", "euler", 5e-4),
    ("bounded_sigma", "euler", 1e-3),
]


def timed(name, cfg, backend, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = monte_carlo(get_entry(name), cfg, 1.0, ("S", "U", "theta", "occupation"), backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=4000)
    p.add_argument("--horizon", type=float, default=21.0)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    for name, _, _ in CASES:  # build the catalog tables outside the timed region
        get_entry(name)
    print(f"backends: {', '.join(backends)}; {args.paths} paths, horizon {args.horizon}")
    header = f"{'entry':<15}{'scheme':<22}" + "".join(f"{b + ' [s]':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'S agree':>9}"
    print(header)
    for name, scheme, dt in CASES:
        cfg = SamplerConfig(dt=dt, horizon=args.horizon, n_paths=args.paths, seed=args.seed, scheme=scheme)
        results = {b: timed(name, cfg, b, args.repeat) for b in backends}
        row = f"{name:<15}{scheme:<22}" + "".join(f"{results[b][0]:>14.3f}" for b in backends)
        if len(backends) == 2:
            (tc, a), (tp, b) = results["compiled"], results["python"]
            agree = np.array_equal(a.S, b.S, equal_nan=True)
            row += f"{tp / tc:>10.1f}{'yes' if agree else 'NO':>9}"
        print(row)


if __name__ == "__main__":
    main()
