"""NumPy implementation of the IMEX backward-induction loop.

Same contract as the compiled kernel in ``_imex.pyx``: the jump gain term
is a discrete convolution (done here with a precomputed real FFT of the
kernel), the implicit tridiagonal solve uses scipy's pivoting banded
solver, and the American constraint is applied after each step.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.linalg import solve_banded


def backward_induction(values, v_ext, s_ext, kern, k_lo, disc,
                       a, b, c, dt, strike, n_ext, is_call, american):
    n_t = values.shape[0] - 1
    n_x = values.shape[1] - 1
    n_full = v_ext.shape[0]
    nk = kern.shape[0]

    # correlation conv_i = sum_q v_ext[i_full + k_lo + q] * kern[q] realised
    # as a linear convolution with the reversed kernel
    fft_len = next_fast_len(n_full + nk - 1)
    kern_f = rfft(kern[::-1], fft_len)
    # full-convolution index of the first interior core node (i = 1)
    off = (nk - 1) + n_ext + 1 + k_lo

    ab = np.zeros((3, n_x - 1))
    ab[0, 1:] = -c
    ab[1, :] = b
    ab[2, :-1] = -a

    s_lo, s_hi = s_ext[n_ext], s_ext[n_ext + n_x]
    pay_core = np.maximum(s_ext[n_ext:n_ext + n_x + 1] - strike, 0.0) if is_call \
        else np.maximum(strike - s_ext[n_ext:n_ext + n_x + 1], 0.0)
    pay_ext_l = np.maximum(s_ext[:n_ext] - strike, 0.0) if is_call \
        else np.maximum(strike - s_ext[:n_ext], 0.0)
    pay_ext_r = np.maximum(s_ext[n_ext + n_x + 1:] - strike, 0.0) if is_call \
        else np.maximum(strike - s_ext[n_ext + n_x + 1:], 0.0)

    for j in range(n_t - 1, -1, -1):
        conv_full = irfft(rfft(v_ext, fft_len) * kern_f, fft_len)
        conv = conv_full[off:off + n_x - 1]
        rhs = v_ext[n_ext + 1:n_ext + n_x] + dt * conv

        if is_call:
            left = 0.0
            right = max(s_hi - disc[j], 0.0)
        else:
            left = max(disc[j] - s_lo, 0.0)
            right = 0.0
        if american:
            left = max(left, pay_core[0])
            right = max(right, pay_core[n_x])
        rhs[0] += a * left
        rhs[-1] += c * right

        interior = solve_banded((1, 1), ab, rhs)

        v_ext[n_ext] = left
        v_ext[n_ext + 1:n_ext + n_x] = interior
        v_ext[n_ext + n_x] = right
        if is_call:
            v_ext[:n_ext] = 0.0
            v_ext[n_ext + n_x + 1:] = np.maximum(
                s_ext[n_ext + n_x + 1:] - disc[j], 0.0)
        else:
            v_ext[:n_ext] = np.maximum(disc[j] - s_ext[:n_ext], 0.0)
            v_ext[n_ext + n_x + 1:] = 0.0
        if american:
            np.maximum(v_ext[n_ext:n_ext + n_x + 1], pay_core,
                       out=v_ext[n_ext:n_ext + n_x + 1])
            np.maximum(v_ext[:n_ext], pay_ext_l, out=v_ext[:n_ext])
            np.maximum(v_ext[n_ext + n_x + 1:], pay_ext_r,
                       out=v_ext[n_ext + n_x + 1:])
        values[j] = v_ext[n_ext:n_ext + n_x + 1]
