# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled row kernel for time-decayed attention.

Same contract as tempora._kernels_py.attention_rows. Documents are sorted by
slice, so rows sharing a slice share one neighbor range. Per slice run the
score block is one BLAS matmul written directly into the output buffer and
the exp pass stays vectorized in numpy; everything numpy would spend
broadcast temporaries on (decay scaling, max subtraction, normalization) is
fused into C passes over that buffer.
"""

import numpy as np

from libc.math cimport exp, sqrt
from libc.stdint cimport int64_t


def attention_rows(const double[:, ::1] H, const int64_t[::1] slice_of,
                   const int64_t[::1] lo, const int64_t[::1] indptr,
                   double lam, double[::1] out):
    cdef Py_ssize_t n = H.shape[0]
    cdef Py_ssize_t d = H.shape[1]
    cdef double inv_sqrt_d = 1.0 / sqrt(<double> d)
    cdef Py_ssize_t a, b, r, j, j0, width
    cdef int64_t dt
    cdef double m, z, s
    cdef double[:, ::1] S
    cdef double[::1] decay

    H_nd = np.asarray(H)
    out_nd = np.asarray(out)
    slice_nd = np.asarray(slice_of)
    run_starts = np.flatnonzero(np.r_[True, slice_nd[1:] != slice_nd[:-1]])
    run_stops = np.r_[run_starts[1:], n]
    for a, b in zip(run_starts, run_stops):
        j0 = lo[a]
        width = indptr[a + 1] - indptr[a]
        block = out_nd[indptr[a] : indptr[b]].reshape(b - a, width)
        np.matmul(H_nd[a:b], H_nd[j0 : j0 + width].T, out=block)
        decay = np.empty(width)
        S = block
        with nogil:
            for j in range(width):
                dt = slice_of[j0 + j] - slice_of[a]
                if dt < 0:
                    dt = -dt
                decay[j] = inv_sqrt_d * exp(-lam * <double> dt)
            for r in range(b - a):
                m = -1e300
                for j in range(width):
                    s = S[r, j] * decay[j]
                    S[r, j] = s
                    if s > m:
                        m = s
                for j in range(width):
                    S[r, j] -= m
        np.exp(block, out=block)
        with nogil:
            for r in range(b - a):
                z = 0.0
                for j in range(width):
                    z += S[r, j]
                for j in range(width):
                    S[r, j] /= z
