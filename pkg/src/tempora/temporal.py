"""Time-decayed attention over document embeddings.

Attention weights follow

    a_ij = exp((h_i . h_j / sqrt(d)) * g(dt_ij)) / sum_k exp((h_i . h_k / sqrt(d)) * g(dt_ik))

with g(dt) = exp(-lambda * dt) and dt the absolute slice distance. The decay
multiplies the scaled score inside the exponent, so distant neighbors are
pulled toward uniform weight rather than masked out; the hard cutoff is the
window, which restricts each row to slice distances <= window.

The row kernel exists twice: a compiled extension (tempora._kernels, built
from Cython) and a pure-numpy fallback. Import picks the compiled one when
present; set TEMPORA_PURE_PYTHON=1 to force the fallback. Both satisfy the
same contract and agree to floating-point roundoff; benchmarks/bench_kernels.py
compares their throughput.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .errors import TemporaError

if os.environ.get("TEMPORA_PURE_PYTHON", "0") not in ("", "0"):
    _kernels_native = None
else:
    try:
        from . import _kernels as _kernels_native
    except ImportError:
        _kernels_native = None

KERNEL_BACKEND = "compiled" if _kernels_native is not None else "python"


class TemporalError(TemporaError):
    """Bad decay parameters or mismatched attention shapes."""


@dataclass(frozen=True)
class DecayConfig:
    """lam is the decay rate per slice unit; window the max slice distance
    (0 = same slice only, -1 = unlimited)."""

    lam: float = 0.5
    window: int = 3

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise TemporalError("lambda must be >= 0")
        if self.window < -1:
            raise TemporalError("window must be >= 0, or -1 for unlimited")


def decay(delta_t: float, lam: float) -> float:
    """g(dt) = exp(-lam * dt) for dt >= 0, lam >= 0."""
    if delta_t < 0 or lam < 0:
        raise TemporalError("decay requires delta_t >= 0 and lambda >= 0")
    return float(np.exp(-lam * delta_t))


@dataclass(frozen=True)
class AttentionMatrix:
    """Row-stochastic attention restricted to contiguous neighbor ranges.

    Row i's neighbors are documents lo[i] .. lo[i] + row width, where the
    width is indptr[i+1] - indptr[i]; weights live flat in ``values``.
    """

    lo: np.ndarray
    indptr: np.ndarray
    values: np.ndarray
    num_docs: int

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor document indices, weights) for row i."""
        a, b = int(self.indptr[i]), int(self.indptr[i + 1])
        weights = self.values[a:b]
        start = int(self.lo[i])
        return np.arange(start, start + weights.size), weights

    def neighborhood(self, i: int) -> range:
        width = int(self.indptr[i + 1] - self.indptr[i])
        return range(int(self.lo[i]), int(self.lo[i]) + width)

    def row_sums(self) -> np.ndarray:
        return np.add.reduceat(self.values, self.indptr[:-1])

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.num_docs, self.num_docs))
        for i in range(self.num_docs):
            idx, w = self.row(i)
            dense[i, idx] = w
        return dense


def neighbor_ranges(slice_of: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-document [lo, hi) neighbor index ranges for a slice-distance window."""
    n = slice_of.shape[0]
    if window < 0:
        return np.zeros(n, dtype=np.int64), np.full(n, n, dtype=np.int64)
    lo = np.searchsorted(slice_of, slice_of - window, side="left")
    hi = np.searchsorted(slice_of, slice_of + window, side="right")
    return lo.astype(np.int64), hi.astype(np.int64)


def _resolve_backend(backend: str | None):
    if backend is None:
        backend = KERNEL_BACKEND
    if backend == "compiled":
        if _kernels_native is None:
            raise TemporalError("compiled kernel is not available in this install")
        return _kernels_native
    if backend == "python":
        return _kernels_py
    raise TemporalError(f"unknown kernel backend {backend!r}")


def attention_weights(H, slices, cfg: DecayConfig, backend: str | None = None) -> AttentionMatrix:
    """Decayed attention rows for every document over its slice window.

    ``H`` is an EmbeddingMatrix or a raw (N, d) array with unit-norm rows;
    ``slices`` a TimeSliceIndex covering the same N documents. ``backend``
    optionally forces 'compiled' or 'python' (used by tests and benchmarks).
    """
    rows = np.ascontiguousarray(getattr(H, "rows", H), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise TemporalError("H must be a non-empty (N, d) matrix")
    slice_of = slices.slice_of
    if slice_of.shape[0] != rows.shape[0]:
        raise TemporalError(
            f"slice index covers {slice_of.shape[0]} documents, embeddings have {rows.shape[0]}"
        )
    norms = np.linalg.norm(rows, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-6:
        raise TemporalError("attention requires unit-norm embedding rows")

    lo, hi = neighbor_ranges(slice_of, cfg.window)
    indptr = np.zeros(rows.shape[0] + 1, dtype=np.int64)
    np.cumsum(hi - lo, out=indptr[1:])
    values = np.empty(int(indptr[-1]), dtype=np.float64)
    impl = _resolve_backend(backend)
    impl.attention_rows(rows, slice_of, lo, indptr, float(cfg.lam), values)
    return AttentionMatrix(lo=lo, indptr=indptr, values=values, num_docs=rows.shape[0])


def temporal_pool(H, attn: AttentionMatrix) -> np.ndarray:
    """Attention-weighted neighborhood means: pooled_i = sum_j a_ij h_j.

    Rows are convex combinations of embedding rows and are intentionally not
    renormalized, so their norms are <= 1.
    """
    rows = np.ascontiguousarray(getattr(H, "rows", H), dtype=np.float64)
    n = rows.shape[0]
    if attn.num_docs != n:
        raise TemporalError(
            f"attention covers {attn.num_docs} documents, embeddings have {n}"
        )
    widths = np.diff(attn.indptr)
    out = np.empty_like(rows)
    # rows sharing (lo, width) form contiguous runs; pool each run with one matmul
    key = attn.lo * (np.int64(n) + 1) + widths
    run_starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    run_stops = np.r_[run_starts[1:], n]
    for a, b in zip(run_starts, run_stops):
        width = int(widths[a])
        j0 = int(attn.lo[a])
        block = attn.values[attn.indptr[a] : attn.indptr[b]].reshape(b - a, width)
        out[a:b] = block @ rows[j0 : j0 + width]
    return out
