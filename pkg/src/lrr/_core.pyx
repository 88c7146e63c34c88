# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the gather/scatter/im2col inner loops.

Only the loops that numpy cannot express without large temporaries or
slow scatter primitives live here; dense matmuls stay on BLAS. A pure
numpy twin of this module is `lrr._core_py`; `lrr.kernels` picks one at
import time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(cnp.ndarray[cnp.float32_t, ndim=3] xpad, int kh, int kw):
    """Unfold (Hp, Wp, C) into rows of kh*kw*C patch values.

    Output row (i, j) holds the window whose top-left corner is (i, j),
    laid out as (di, dj, c) fastest-last.
    """
    cdef int Hp = xpad.shape[0]
    cdef int Wp = xpad.shape[1]
    cdef int C = xpad.shape[2]
    cdef int Ho = Hp - kh + 1
    cdef int Wo = Wp - kw + 1
    out_arr = np.empty((Ho * Wo, kh * kw * C), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] out = out_arr
    cdef cnp.float32_t[:, :, ::1] x = np.ascontiguousarray(xpad)
    cdef int i, j, a, b, c, row, col
    for i in range(Ho):
        for j in range(Wo):
            row = i * Wo + j
            col = 0
            for a in range(kh):
                for b in range(kw):
                    for c in range(C):
                        out[row, col] = x[i + a, j + b, c]
                        col += 1
    return out_arr


def gather2x2(cnp.ndarray[cnp.float32_t, ndim=3] plane,
              cnp.ndarray[cnp.int64_t, ndim=3] sites):
    """Fetch the 4 neighbor vectors per query: (H, W, D) x (Q, 4, 2) -> (Q, 4, D)."""
    cdef int Q = sites.shape[0]
    cdef int D = plane.shape[2]
    out_arr = np.empty((Q, 4, D), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    cdef cnp.float32_t[:, :, ::1] p = np.ascontiguousarray(plane)
    cdef cnp.int64_t[:, :, ::1] s = np.ascontiguousarray(sites)
    cdef int q, k, d
    cdef cnp.int64_t si, sj
    for q in range(Q):
        for k in range(4):
            si = s[q, k, 0]
            sj = s[q, k, 1]
            for d in range(D):
                out[q, k, d] = p[si, sj, d]
    return out_arr


def scatter2x2_add(cnp.ndarray[cnp.float32_t, ndim=3] out,
                   cnp.ndarray[cnp.int64_t, ndim=3] sites,
                   cnp.ndarray[cnp.float32_t, ndim=3] grads):
    """Accumulate (Q, 4, D) gradients back into the (H, W, D) plane in place."""
    cdef cnp.float32_t[:, :, ::1] o = out
    cdef cnp.int64_t[:, :, ::1] s = np.ascontiguousarray(sites)
    cdef cnp.float32_t[:, :, ::1] g = np.ascontiguousarray(grads)
    cdef int Q = sites.shape[0]
    cdef int D = out.shape[2]
    cdef int q, k, d
    cdef cnp.int64_t si, sj
    for q in range(Q):
        for k in range(4):
            si = s[q, k, 0]
            sj = s[q, k, 1]
            for d in range(D):
                o[si, sj, d] += g[q, k, d]
    return out
