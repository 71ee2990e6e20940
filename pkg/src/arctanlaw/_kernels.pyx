# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels.

One path at a time: draw normals straight from the path's Philox bit
generator, advance the state (exact Gaussian, exact integrated BM or Euler
with a built-in coefficient model) and update the running-maximum
functionals in the same loop, stopping as soon as every requested hitting
time is resolved.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport INFINITY, cbrt, sin, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()

cdef enum:
    SCHEME_GAUSS = 0
    SCHEME_INTBM = 1
    SCHEME_EULER = 2

cdef enum:
    M_CONST = 0
    M_CUBE = 1
    M_FELLER = 2
    M_WF = 3
    M_GBM = 4
    M_BOUNDED = 5
    M_TIMECHANGE = 6

cdef enum:
    B_NONE = 0
    B_CLAMP = 1
    B_ABSORB = 2

SCHEMES = {"gauss": SCHEME_GAUSS, "intbm": SCHEME_INTBM, "euler": SCHEME_EULER}
MODELS = {
    "const": M_CONST, "cube": M_CUBE, "feller": M_FELLER, "wright_fisher": M_WF,
    "gbm": M_GBM, "bounded_sigma": M_BOUNDED, "timechange": M_TIMECHANGE,
}
BOUNDARY = {"unreachable": B_NONE, "clamp": B_CLAMP, "absorb": B_ABSORB}

_EMPTY = np.zeros(2)


cdef bitgen_t* _bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("not a numpy bit generator")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef class Engine:
    cdef int scheme, model, lo_mode, hi_mode
    cdef int need_S, need_U, need_two
    cdef long n_steps, rk, r1k, r2k, n_nodes
    cdef double dt, sqdt, p0, p1, lo, hi, c1, c2, occ_level
    cdef double[::1] sd, rho_prime, nodes, wp, wpp

    def __init__(self, str scheme, long n_steps, double dt, long rk, long r1k=-1, long r2k=-1,
                 bint need_S=True, bint need_U=True, bint need_two=False,
                 str model="const", params=(), double lo=-INFINITY, double hi=INFINITY,
                 str lo_policy="unreachable", str hi_policy="unreachable",
                 sd=None, rho_prime=None, table=None, double occ_level=0.0):
        self.scheme = SCHEMES[scheme]
        self.model = MODELS[model]
        self.n_steps = n_steps
        self.dt = dt
        self.sqdt = sqrt(dt)
        self.c1 = dt * sqrt(dt) / 2.0
        self.c2 = dt * sqrt(dt) / sqrt(12.0)
        self.rk = rk
        self.r1k = r1k
        self.r2k = r2k
        self.need_S = need_S
        self.need_U = need_U
        self.need_two = need_two
        self.occ_level = occ_level
        p = tuple(params) + (0.0, 0.0)
        self.p0 = p[0]
        self.p1 = p[1]
        self.lo = lo
        self.hi = hi
        self.lo_mode = BOUNDARY[lo_policy]
        self.hi_mode = BOUNDARY[hi_policy]
        self.sd = np.ascontiguousarray(sd if sd is not None else _EMPTY, dtype=np.float64)
        self.rho_prime = np.ascontiguousarray(rho_prime if rho_prime is not None else _EMPTY, dtype=np.float64)
        if table is not None:
            self.nodes = np.ascontiguousarray(table[0], dtype=np.float64)
            self.wp = np.ascontiguousarray(table[1], dtype=np.float64)
            self.wpp = np.ascontiguousarray(table[2], dtype=np.float64)
            self.n_nodes = self.nodes.shape[0]
        else:
            self.nodes = _EMPTY
            self.wp = _EMPTY
            self.wpp = _EMPTY
            self.n_nodes = 0
        if self.scheme == SCHEME_GAUSS and self.sd.shape[0] < n_steps:
            raise ValueError("gauss scheme needs one step deviation per step")
        if self.model == M_TIMECHANGE and (self.n_nodes < 2 or self.rho_prime.shape[0] < n_steps):
            raise ValueError("timechange model needs a scale table and rho' per step")

    cdef inline int _coeffs(self, double x, long k, double* mu, double* sig) noexcept nogil:
        cdef double xc = x, s, s1, h, w1, w2, rp
        cdef long a, b, m
        if self.lo_mode != B_NONE and xc < self.lo:
            xc = self.lo
        if self.hi_mode != B_NONE and xc > self.hi:
            xc = self.hi
        if self.model == M_CONST:
            mu[0] = self.p0
            sig[0] = self.p1
        elif self.model == M_CUBE:
            s = cbrt(xc)
            mu[0] = s / 3.0
            sig[0] = s * s
        elif self.model == M_FELLER:
            mu[0] = self.p0
            sig[0] = sqrt(xc if xc > 0.0 else 0.0)
        elif self.model == M_WF:
            mu[0] = 0.25 - 0.5 * xc
            s = xc * (1.0 - xc)
            sig[0] = sqrt(s if s > 0.0 else 0.0)
        elif self.model == M_GBM:
            mu[0] = 0.5 * self.p0 * self.p0 * xc
            sig[0] = self.p0 * xc
        elif self.model == M_BOUNDED:
            mu[0] = 0.0
            sig[0] = self.p0 + self.p1 * sin(xc)
        else:
            if xc < self.nodes[0] or xc > self.nodes[self.n_nodes - 1] or xc != xc:
                return -1
            a = 0
            b = self.n_nodes - 1
            while b - a > 1:
                m = (a + b) >> 1
                if self.nodes[m] <= xc:
                    a = m
                else:
                    b = m
            h = self.nodes[a + 1] - self.nodes[a]
            s = (xc - self.nodes[a]) / h
            s1 = 1.0 - s
            w1 = ((1.0 + 2.0 * s) * s1 * s1 * self.wp[a]
                  + s * s1 * s1 * h * self.wpp[a]
                  + s * s * (3.0 - 2.0 * s) * self.wp[a + 1]
                  + s * s * (s - 1.0) * h * self.wpp[a + 1])
            w2 = self.wpp[a] + s * (self.wpp[a + 1] - self.wpp[a])
            if w1 <= 0.0:
                return -1
            rp = self.rho_prime[k]
            mu[0] = -rp * w2 / (2.0 * w1 * w1 * w1)
            sig[0] = sqrt(rp) / w1
        return 0

    cdef inline int _advance(self, bitgen_t* bg, long k, double* x, double* v, int* absorbed) noexcept nogil:
        """Move the state from grid index k to k + 1."""
        cdef double z, z2, mu = 0.0, sig = 0.0, y
        if self.scheme == SCHEME_GAUSS:
            z = random_standard_normal(bg)
            x[0] = x[0] + self.sd[k] * z
        elif self.scheme == SCHEME_INTBM:
            z = random_standard_normal(bg)
            z2 = random_standard_normal(bg)
            x[0] = x[0] + (v[0] * self.dt + (self.c1 * z + self.c2 * z2))
            v[0] = v[0] + self.sqdt * z
        else:
            z = random_standard_normal(bg)
            if absorbed[0]:
                return 0
            if self._coeffs(x[0], k, &mu, &sig) != 0:
                return -1
            y = x[0] + mu * self.dt + sig * self.sqdt * z
            if self.lo_mode == B_CLAMP and y < self.lo:
                y = self.lo
            elif self.lo_mode == B_ABSORB and y <= self.lo:
                y = self.lo
                absorbed[0] = 1
            if self.hi_mode == B_CLAMP and y > self.hi:
                y = self.hi
            elif self.hi_mode == B_ABSORB and y >= self.hi:
                y = self.hi
                absorbed[0] = 1
            x[0] = y
        return 0

    def path(self, object bit_generator, double x0):
        """Full trajectory on the grid, no early stopping."""
        cdef bitgen_t* bg = _bitgen(bit_generator)
        cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(self.n_steps + 1)
        cdef double[::1] o = out
        cdef double x = x0, v = 0.0
        cdef int absorbed = 0
        cdef long k
        o[0] = x
        for k in range(self.n_steps):
            if self._advance(bg, k, &x, &v, &absorbed) != 0:
                return out[: k + 1], k
            o[k + 1] = x
        return out, -1

    def scan(self, list bit_generators, double[::1] x0s):
        """Functionals of a batch of paths.

        Returns ``(M, L, M12, theta, occ, S, U, S12, failed)``; hitting times
        are grid-step counts after ``r`` (or ``r2``), ``-1`` when censored.
        ``failed`` is the batch position of a path that left the coefficient
        table, ``-1`` otherwise.
        """
        cdef Py_ssize_t n = len(bit_generators), p
        M = np.empty(n)
        L = np.empty(n)
        M12 = np.full(n, -INFINITY)
        theta = np.zeros(n, dtype=np.int64)
        occ = np.zeros(n, dtype=np.int64)
        S = np.full(n, -1, dtype=np.int64)
        U = np.full(n, -1, dtype=np.int64)
        S12 = np.full(n, -1, dtype=np.int64)
        cdef double[::1] vM = M, vL = L, vM12 = M12
        cdef long[::1] vth = theta, vocc = occ, vS = S, vU = U, vS12 = S12
        cdef bitgen_t* bg
        cdef double x, v, m, l, m12
        cdef long k, th, oc, s, u, s12, rk = self.rk, r1k = self.r1k, r2k = self.r2k
        cdef long last = rk if rk > r2k else r2k
        cdef int absorbed, fail
        for p in range(n):
            bg = _bitgen(bit_generators[p])
            x = x0s[p]
            v = 0.0
            absorbed = 0
            m = x
            l = x
            m12 = -INFINITY
            th = 0
            oc = 0
            s = -1
            u = -1
            s12 = -1
            k = 0
            fail = 0
            with nogil:
                while True:
                    if k <= rk:
                        if x > m:
                            m = x
                            th = k
                        if x < l:
                            l = x
                        if k < rk and x > self.occ_level:
                            oc += 1
                    if self.need_two and k >= r1k and k <= r2k and x > m12:
                        m12 = x
                    if k >= rk:
                        if self.need_S and s < 0 and x >= m:
                            s = k - rk
                        if self.need_U and u < 0 and x <= l:
                            u = k - rk
                    if self.need_two and k >= r2k and s12 < 0 and x >= m12:
                        s12 = k - r2k
                    if k >= last and (not self.need_S or s >= 0) and (not self.need_U or u >= 0) \
                            and (not self.need_two or s12 >= 0):
                        break
                    if k >= self.n_steps:
                        break
                    if self._advance(bg, k, &x, &v, &absorbed) != 0:
                        fail = 1
                        break
                    k += 1
            if fail:
                # left the coefficient table
                return M, L, M12, theta, occ, S, U, S12, p
            vM[p] = m
            vL[p] = l
            vM12[p] = m12
            vth[p] = th
            vocc[p] = oc
            vS[p] = s
            vU[p] = u
            vS12[p] = s12
        return M, L, M12, theta, occ, S, U, S12, -1
