"""Pure-numpy attention kernel, the fallback when the compiled one is absent.

Documents are sorted by slice, so every document in one slice shares the
same neighbor range; the kernel batches score/softmax work per slice run and
lets BLAS do the dot products.
"""

from __future__ import annotations

import math

import numpy as np


def attention_rows(
    H: np.ndarray,
    slice_of: np.ndarray,
    lo: np.ndarray,
    indptr: np.ndarray,
    lam: float,
    out: np.ndarray,
) -> None:
    """Fill ``out`` with normalized decayed-attention rows.

    Row i covers neighbors lo[i] .. lo[i] + (indptr[i+1] - indptr[i]); its
    weights are the softmax of (h_i . h_j / sqrt(d)) * exp(-lam * |dt_ij|)
    over that range.
    """
    n, d = H.shape
    inv_sqrt_d = 1.0 / math.sqrt(d)
    run_starts = np.flatnonzero(np.r_[True, slice_of[1:] != slice_of[:-1]])
    run_stops = np.r_[run_starts[1:], n]
    for a, b in zip(run_starts, run_stops):
        j0 = int(lo[a])
        width = int(indptr[a + 1] - indptr[a])
        block = H[j0 : j0 + width]
        scores = (H[a:b] @ block.T) * inv_sqrt_d
        dt = np.abs(slice_of[j0 : j0 + width] - slice_of[a]).astype(np.float64)
        scores *= np.exp(-lam * dt)[None, :]
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        out[indptr[a] : indptr[b]] = scores.ravel()
