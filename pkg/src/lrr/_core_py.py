"""Pure numpy fallback for the compiled kernels in ``lrr._core``.

Function-for-function equivalent; im2col and gather are bit-identical,
the scatter accumulates through float64 bincount so it can differ from
the compiled float32 accumulation at rounding level.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xpad, kh, kw):
    v = sliding_window_view(xpad, (kh, kw), axis=(0, 1))  # (Ho, Wo, C, kh, kw)
    ho, wo, c = v.shape[0], v.shape[1], v.shape[2]
    cols = np.ascontiguousarray(v.transpose(0, 1, 3, 4, 2))
    return cols.reshape(ho * wo, kh * kw * c)


def gather2x2(plane, sites):
    return np.ascontiguousarray(plane[sites[..., 0], sites[..., 1]])


def scatter2x2_add(out, sites, grads):
    h, w, d = out.shape
    flat = (sites[..., 0] * w + sites[..., 1]).ravel()  # (Q*4,)
    idx = (flat[:, None] * d + np.arange(d, dtype=np.int64)[None, :]).ravel()
    acc = np.bincount(idx, weights=grads.reshape(-1, d).ravel().astype(np.float64),
                      minlength=h * w * d)
    out += acc.reshape(h, w, d).astype(np.float32)
    return out
