# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled IMEX backward-induction loop.

Identical contract to ``_imex_py.backward_induction``: direct truncated
convolution for the jump gain, a precomputed-factor Thomas solve for the
implicit tridiagonal system, boundary/extension fills from the asymptotic
value, and the American projection after each step. Runs without the GIL
so independent solves can share a thread pool.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def backward_induction(double[:, ::1] values, double[::1] v_ext,
                       double[::1] s_ext, double[::1] kern, int k_lo,
                       double[::1] disc, double a, double c,
                       double[::1] inv_m, double[::1] cp,
                       double dt, double strike, int n_ext,
                       bint is_call, bint american):
    cdef int n_t = values.shape[0] - 1
    cdef int n_x = values.shape[1] - 1
    cdef int n_full = v_ext.shape[0]
    cdef int nk = kern.shape[0]
    cdef int n_unk = n_x - 1

    work = np.empty((3, n_unk))
    cdef double[:, ::1] w3 = work
    cdef double[::1] rhs = w3[0]
    cdef double[::1] dp = w3[1]
    cdef double[::1] conv = w3[2]

    cdef double* pv = &v_ext[0]
    cdef double* pk = &kern[0]
    cdef double* pconv = &conv[0]
    cdef double* pwin

    cdef int i, j, q
    cdef double wq, left, right, pay, v

    with nogil:
        for j in range(n_t - 1, -1, -1):
            # explicit jump gain for interior core nodes; tap-outer loop
            # keeps the inner update elementwise so the compiler can SIMD it
            for i in range(n_unk):
                pconv[i] = 0.0
            for q in range(nk):
                wq = pk[q]
                pwin = pv + n_ext + 1 + k_lo + q
                for i in range(n_unk):
                    pconv[i] += wq * pwin[i]
            for i in range(n_unk):
                rhs[i] = v_ext[n_ext + 1 + i] + dt * pconv[i]

            # Dirichlet boundary values at the new level
            if is_call:
                left = 0.0
                right = s_ext[n_ext + n_x] - disc[j]
                if right < 0.0:
                    right = 0.0
            else:
                left = disc[j] - s_ext[n_ext]
                if left < 0.0:
                    left = 0.0
                right = 0.0
            if american:
                pay = _payoff(s_ext[n_ext], strike, is_call)
                if left < pay:
                    left = pay
                pay = _payoff(s_ext[n_ext + n_x], strike, is_call)
                if right < pay:
                    right = pay
            rhs[0] += a * left
            rhs[n_unk - 1] += c * right

            # Thomas sweep with precomputed elimination factors
            dp[0] = rhs[0] * inv_m[0]
            for i in range(1, n_unk):
                dp[i] = (rhs[i] + a * dp[i - 1]) * inv_m[i]
            v_ext[n_ext + n_unk] = dp[n_unk - 1]
            for i in range(n_unk - 2, -1, -1):
                dp[i] = dp[i] - cp[i] * dp[i + 1]
                v_ext[n_ext + 1 + i] = dp[i]

            v_ext[n_ext] = left
            v_ext[n_ext + n_x] = right

            # extension fill from the asymptotic boundary behaviour
            if is_call:
                for i in range(n_ext):
                    v_ext[i] = 0.0
                for i in range(n_ext + n_x + 1, n_full):
                    v = s_ext[i] - disc[j]
                    v_ext[i] = v if v > 0.0 else 0.0
            else:
                for i in range(n_ext):
                    v = disc[j] - s_ext[i]
                    v_ext[i] = v if v > 0.0 else 0.0
                for i in range(n_ext + n_x + 1, n_full):
                    v_ext[i] = 0.0

            if american:
                for i in range(n_full):
                    pay = _payoff(s_ext[i], strike, is_call)
                    if v_ext[i] < pay:
                        v_ext[i] = pay

            for i in range(n_x + 1):
                values[j, i] = v_ext[n_ext + i]


cdef inline double _payoff(double s, double strike, bint is_call) nogil:
    cdef double v = s - strike if is_call else strike - s
    return v if v > 0.0 else 0.0
