"""Piecewise cubic Hermite tables for increasing functions.

The same formulas are used by the compiled Euler kernel, so evaluation here
and there agrees to rounding.
"""

from __future__ import annotations

import numpy as np

from .errors import TabulationRangeError


def locate(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index ``i`` of the segment ``[nodes[i], nodes[i+1]]`` holding each ``x``."""
    i = np.searchsorted(nodes, x, side="right") - 1
    return np.clip(i, 0, len(nodes) - 2)


def check_range(nodes: np.ndarray, x: np.ndarray, what: str = "table") -> None:
    x = np.asarray(x)
    if x.size and (np.nanmin(x) < nodes[0] or np.nanmax(x) > nodes[-1]):
        bad = x[(x < nodes[0]) | (x > nodes[-1])].flat[0]
        raise TabulationRangeError(
            f"{what} queried at x={bad!r}, outside the tabulated window "
            f"[{nodes[0]!r}, {nodes[-1]!r}]; rebuild with a wider window"
        )


def hermite(nodes, values, slopes, x):
    x = np.asarray(x, dtype=float)
    i = locate(nodes, x)
    x0 = nodes[i]
    h = nodes[i + 1] - x0
    s = (x - x0) / h
    s1 = 1.0 - s
    return (
        (1.0 + 2.0 * s) * s1 * s1 * values[i]
        + s * s1 * s1 * h * slopes[i]
        + s * s * (3.0 - 2.0 * s) * values[i + 1]
        + s * s * (s - 1.0) * h * slopes[i + 1]
    )


def hermite_slope(nodes, values, slopes, x):
    x = np.asarray(x, dtype=float)
    i = locate(nodes, x)
    x0 = nodes[i]
    h = nodes[i + 1] - x0
    s = (x - x0) / h
    return (
        (6.0 * s * s - 6.0 * s) * (values[i] - values[i + 1]) / h
        + (3.0 * s * s - 4.0 * s + 1.0) * slopes[i]
        + (3.0 * s * s - 2.0 * s) * slopes[i + 1]
    )


def linear(nodes, values, x):
    x = np.asarray(x, dtype=float)
    i = locate(nodes, x)
    x0 = nodes[i]
    s = (x - x0) / (nodes[i + 1] - x0)
    return values[i] + s * (values[i + 1] - values[i])


class MonotoneTable:
    """Increasing function tabulated with values and slopes at sorted nodes.

    Evaluation outside ``[nodes[0], nodes[-1]]`` raises
    :class:`TabulationRangeError`. The inverse is computed by bisection inside
    the bracketing segment, so ``inverse(values[k]) == nodes[k]`` up to
    ``root_tol``.
    """

    def __init__(self, nodes, values, slopes, root_tol: float = 1e-12, name: str = "table"):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.root_tol = root_tol
        self.name = name
        if not np.all(np.diff(self.values) > 0):
            k = int(np.argmin(np.diff(self.values)))
            raise ValueError(f"{name} is not strictly increasing near x={self.nodes[k]!r}")

    @property
    def window(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def __call__(self, x):
        check_range(self.nodes, x, self.name)
        out = hermite(self.nodes, self.values, self.slopes, x)
        return out if np.ndim(out) else float(out)

    def derivative(self, x):
        check_range(self.nodes, x, self.name)
        out = hermite_slope(self.nodes, self.values, self.slopes, x)
        return out if np.ndim(out) else float(out)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        check_range(self.values, y, f"inverse of {self.name}")
        i = locate(self.values, y)
        lo = self.nodes[i].copy()
        hi = self.nodes[i + 1].copy()
        # exact hits on nodes short-circuit the bisection
        at_lo = y == self.values[i]
        at_hi = y == self.values[i + 1]
        for _ in range(200):
            if np.all(hi - lo <= self.root_tol):
                break
            mid = 0.5 * (lo + hi)
            below = hermite(self.nodes, self.values, self.slopes, mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = np.where(at_lo, self.nodes[i], np.where(at_hi, self.nodes[i + 1], 0.5 * (lo + hi)))
        return out if np.ndim(out) else float(out)
