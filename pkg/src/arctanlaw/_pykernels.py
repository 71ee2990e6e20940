"""Pure numpy path kernels, used when the compiled extension is unavailable.

The interface matches the compiled :class:`Engine`. Paths of a batch are
advanced together in blocks of grid steps; paths whose hitting times are all
resolved drop out between blocks. Each path draws its normals from its own
generator in the same order as the compiled kernel, so both backends see the
same noise. For the exact schemes the results agree bit for bit; Euler runs
agree up to libm-versus-numpy rounding in the coefficients.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import TabulationRangeError

_BLOCK_ELEMS = 1 << 21


class Engine:
    def __init__(self, scheme, n_steps, dt, rk, r1k=-1, r2k=-1, need_S=True, need_U=True, need_two=False,
                 drift=None, diffusion=None, lo=-math.inf, hi=math.inf,
                 lo_policy="unreachable", hi_policy="unreachable", sd=None, occ_level=0.0):
        if scheme not in ("gauss", "intbm", "euler"):
            raise KeyError(scheme)
        self.scheme = scheme
        self.n_steps = int(n_steps)
        self.dt = float(dt)
        self.sqdt = math.sqrt(dt)
        self.c1 = dt * math.sqrt(dt) / 2.0
        self.c2 = dt * math.sqrt(dt) / math.sqrt(12.0)
        self.rk, self.r1k, self.r2k = int(rk), int(r1k), int(r2k)
        self.need_S, self.need_U, self.need_two = bool(need_S), bool(need_U), bool(need_two)
        self.drift, self.diffusion = drift, diffusion
        self.lo, self.hi = float(lo), float(hi)
        self.lo_policy, self.hi_policy = lo_policy, hi_policy
        self.sd = None if sd is None else np.asarray(sd, dtype=float)
        self.occ_level = float(occ_level)
        if scheme == "gauss" and (self.sd is None or len(self.sd) < self.n_steps):
            raise ValueError("gauss scheme needs one step deviation per step")
        if scheme == "euler" and (drift is None or diffusion is None):
            raise ValueError("euler scheme needs drift and diffusion callables")

    # -- stepping ---------------------------------------------------------

    def _draw(self, gens, b):
        m = 2 if self.scheme == "intbm" else 1
        return np.stack([g.standard_normal(b * m) for g in gens]) if gens else np.empty((0, b * m))

    def _block(self, state, z, k0):
        """Advance ``state = (x, v, absorbed)`` over ``b`` steps from index k0.

        Returns ``(values, fail)``: values at indices ``k0+1 .. k0+b`` with
        shape ``(A, b)`` and ``fail = (path, step)`` when a path leaves the
        coefficient table (values are then truncated before that step).
        """
        x, v, absorbed = state
        a = x.shape[0]
        b = z.shape[1] // (2 if self.scheme == "intbm" else 1)
        if self.scheme == "gauss":
            inc = self.sd[k0:k0 + b] * z
            out = np.cumsum(np.concatenate([x[:, None], inc], axis=1), axis=1)[:, 1:]
            x[:] = out[:, -1]
            return out, None
        if self.scheme == "intbm":
            z1 = z[:, 0::2]
            z2 = z[:, 1::2]
            vel = np.cumsum(np.concatenate([v[:, None], self.sqdt * z1], axis=1), axis=1)
            inc = vel[:, :-1] * self.dt + (self.c1 * z1 + self.c2 * z2)
            out = np.cumsum(np.concatenate([x[:, None], inc], axis=1), axis=1)[:, 1:]
            x[:] = out[:, -1]
            v[:] = vel[:, -1]
            return out, None
        out = np.empty((a, b))
        for j in range(b):
            t = (k0 + j) * self.dt
            try:
                mu = self.drift(x, t)
                sig = self.diffusion(x, t)
            except TabulationRangeError:
                return out[:, :j], (self._culprit(x, t), k0 + j)
            y = x + mu * self.dt + sig * self.sqdt * z[:, j]
            was = absorbed.copy()
            if self.lo_policy == "clamp":
                y = np.where(y < self.lo, self.lo, y)
            elif self.lo_policy == "absorb":
                hit = y <= self.lo
                y = np.where(hit, self.lo, y)
                absorbed |= hit
            if self.hi_policy == "clamp":
                y = np.where(y > self.hi, self.hi, y)
            elif self.hi_policy == "absorb":
                hit = y >= self.hi
                y = np.where(hit, self.hi, y)
                absorbed |= hit
            x[:] = np.where(was, x, y)
            out[:, j] = x
        return out, None

    def _culprit(self, x, t):
        for i in range(x.shape[0]):
            try:
                self.drift(x[i:i + 1], t)
                self.diffusion(x[i:i + 1], t)
            except TabulationRangeError:
                return i
        return 0

    def path(self, bit_generator, x0):
        """Full trajectory on the grid, no early stopping."""
        gen = np.random.Generator(bit_generator)
        out = np.empty(self.n_steps + 1)
        out[0] = x0
        state = (np.array([float(x0)]), np.zeros(1), np.zeros(1, dtype=bool))
        k = 0
        while k < self.n_steps:
            b = min(4096, self.n_steps - k)
            vals, fail = self._block(state, self._draw([gen], b), k)
            if fail is not None:
                step = fail[1]
                out[k + 1:step + 1] = vals[0]
                return out[: step + 1], step
            out[k + 1:k + 1 + b] = vals[0]
            k += b
        return out, -1

    # -- functionals ------------------------------------------------------

    def scan(self, bit_generators, x0s):
        n = len(bit_generators)
        gens = [np.random.Generator(bg) for bg in bit_generators]
        x0s = np.asarray(x0s, dtype=float).copy()
        rk, r1k, r2k = self.rk, self.r1k, self.r2k
        last = max(rk, r2k)
        M = x0s.copy()
        L = x0s.copy()
        M12 = np.where((r1k == 0) & self.need_two, x0s, -np.inf)
        theta = np.zeros(n, dtype=np.int64)
        occ = ((rk > 0) & (x0s > self.occ_level)).astype(np.int64)
        S = np.full(n, -1, dtype=np.int64)
        U = np.full(n, -1, dtype=np.int64)
        S12 = np.full(n, -1, dtype=np.int64)
        x = x0s.copy()
        v = np.zeros(n)
        absorbed = np.zeros(n, dtype=bool)
        active = np.arange(n)
        k = 0
        while k < self.n_steps and active.size:
            b = int(min(self.n_steps - k, max(256, _BLOCK_ELEMS // active.size)))
            if k < last:
                b = min(b, max(last - k + 256, 256))
            z = self._draw([gens[i] for i in active], b)
            state = (x[active], v[active], absorbed[active])
            X, fail = self._block(state, z, k)
            if fail is not None:
                return M, L, M12, theta, occ, S, U, S12, int(active[fail[0]])
            x[active], v[active], absorbed[active] = state
            self._update(active, X, k + 1, M, L, M12, theta, occ, S, U, S12)
            k += b
            if k >= last:
                done = np.ones(active.size, dtype=bool)
                if self.need_S:
                    done &= S[active] >= 0
                if self.need_U:
                    done &= U[active] >= 0
                if self.need_two:
                    done &= S12[active] >= 0
                active = active[~done]
        return M, L, M12, theta, occ, S, U, S12, -1

    def _update(self, act, X, k0, M, L, M12, theta, occ, S, U, S12):
        b = X.shape[1]
        rk, r1k, r2k = self.rk, self.r1k, self.r2k
        c1 = min(max(rk - k0 + 1, 0), b)
        if c1 > 0:
            xa = X[:, :c1]
            top = xa.max(axis=1)
            arg = xa.argmax(axis=1)
            up = top > M[act]
            M[act[up]] = top[up]
            theta[act[up]] = k0 + arg[up]
            L[act] = np.minimum(L[act], xa.min(axis=1))
            c0 = min(max(rk - k0, 0), b)
            occ[act] += (X[:, :c0] > self.occ_level).sum(axis=1)
        if self.need_two:
            j0, j1 = max(r1k - k0, 0), min(r2k - k0 + 1, b)
            if j1 > j0:
                M12[act] = np.maximum(M12[act], X[:, j0:j1].max(axis=1))
        j = max(rk - k0, 0)
        if j < b:
            if self.need_S:
                _first_hit(act, X[:, j:], M, S, k0 + j - rk, np.greater_equal)
            if self.need_U:
                _first_hit(act, X[:, j:], L, U, k0 + j - rk, np.less_equal)
        if self.need_two:
            j = max(r2k - k0, 0)
            if j < b:
                _first_hit(act, X[:, j:], M12, S12, k0 + j - r2k, np.greater_equal)


def _first_hit(act, xs, level, out, offset, cmp):
    pend = out[act] < 0
    if not pend.any():
        return
    idx = act[pend]
    hits = cmp(xs[pend], level[idx][:, None])
    got = hits.any(axis=1)
    out[idx[got]] = offset + hits[got].argmax(axis=1)
