"""Backend selection for the path kernels.

The compiled extension is used when it imports and the environment variable
``ARCTANLAW_BACKEND`` is not set to ``python``. Euler runs of specs that carry
no :class:`~arctanlaw.catalog.KernelModel` always use the numpy kernel since
the compiled one only knows the built-in coefficient models.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - exercised only without a build
    _compiled = None


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def default_backend() -> str:
    want = os.environ.get("ARCTANLAW_BACKEND", "").strip().lower()
    if want == "python" or _compiled is None:
        return "python"
    return "compiled"


BACKEND = default_backend()


def make_engine(scheme: str, n_steps: int, dt: float, rk: int, r1k: int = -1, r2k: int = -1,
                need_S: bool = True, need_U: bool = True, need_two: bool = False,
                spec=None, sd=None, occ_level: float = 0.0, backend: str | None = None):
    """Build a path engine.

    Parameters
    ----------
    scheme : {"gauss", "intbm", "euler"}
        Gaussian increments with per-step standard deviations ``sd``, the
        exact integrated-BM step, or Euler-Maruyama for ``spec``.
    rk, r1k, r2k : int
        Grid indices of ``r``, ``r1`` and ``r2`` (the latter two only matter
        when ``need_two``).
    backend : str, optional
        ``"compiled"`` or ``"python"``; defaults to :data:`BACKEND`.
    """
    backend = backend or BACKEND
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and _compiled is None:
        raise ImportError("the compiled kernel is not built")
    common = dict(need_S=need_S, need_U=need_U, need_two=need_two, occ_level=occ_level)
    lo, hi, lo_pol, hi_pol = -math.inf, math.inf, "unreachable", "unreachable"
    if spec is not None:
        iv = spec.interval
        lo, hi, lo_pol, hi_pol = iv.lo, iv.hi, iv.lo_policy, iv.hi_policy
    kernel = getattr(spec, "kernel", None)
    if backend == "compiled" and (scheme != "euler" or kernel is not None):
        extra = {}
        if scheme == "euler":
            extra = dict(model=kernel.name, params=kernel.params, table=kernel.table)
            if kernel.rho_prime is not None:
                t = np.arange(n_steps) * dt
                extra["rho_prime"] = np.array(np.broadcast_to(np.asarray(kernel.rho_prime(t), dtype=float), t.shape))
        return _compiled.Engine(scheme, n_steps, dt, rk, r1k, r2k, lo=lo, hi=hi, lo_policy=lo_pol,
                                hi_policy=hi_pol, sd=sd, **extra, **common)
    drift = diffusion = None
    if scheme == "euler":
        drift, diffusion = spec.drift, spec.diffusion
    return _pykernels.Engine(scheme, n_steps, dt, rk, r1k, r2k, drift=drift, diffusion=diffusion,
                             lo=lo, hi=hi, lo_policy=lo_pol, hi_policy=hi_pol, sd=sd, **common)
