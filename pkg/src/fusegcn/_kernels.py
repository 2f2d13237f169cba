"""Hot numeric inner loops: CSR sparse-dense matmul and row-wise top-k selection.

Both kernels exist twice: a numba ``@njit`` version and a pure-numpy
fallback. The numba path is used when numba imports cleanly and the
environment variable ``FUSEGCN_DISABLE_NUMBA`` is unset/falsy; setting it to
``1`` forces the numpy path. Both paths are deterministic and agree to
floating-point roundoff (top-k index selection agrees exactly).

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("FUSEGCN_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false")


NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# CSR sparse @ dense
# ---------------------------------------------------------------------------

def _spmm_loop(indptr, indices, data, dense, out):
    for i in range(indptr.shape[0] - 1):
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = data[k]
            for c in range(dense.shape[1]):
                out[i, c] += v * dense[j, c]


def spmm_csr_numpy(indptr, indices, data, dense):
    """Pure-numpy CSR @ dense."""
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * dense[indices])
    return out


if NUMBA_ENABLED:
    _spmm_loop_jit = njit(cache=True)(_spmm_loop)

    def spmm_csr_numba(indptr, indices, data, dense):
        out = np.zeros((indptr.shape[0] - 1, dense.shape[1]), dtype=np.float64)
        _spmm_loop_jit(indptr, indices, data, dense, out)
        return out

    spmm_csr = spmm_csr_numba
else:
    spmm_csr_numba = None
    spmm_csr = spmm_csr_numpy


# ---------------------------------------------------------------------------
# Row-wise top-k (largest values, ties to the lower column index)
# ---------------------------------------------------------------------------

def _topk_loop(scores, k, out):
    n = scores.shape[0]
    for i in range(n):
        count = 0
        for j in range(scores.shape[1]):
            s = scores[i, j]
            if count < k:
                pos = count
                while pos > 0 and scores[i, out[i, pos - 1]] < s:
                    out[i, pos] = out[i, pos - 1]
                    pos -= 1
                out[i, pos] = j
                count += 1
            elif s > scores[i, out[i, k - 1]]:
                pos = k - 1
                while pos > 0 and scores[i, out[i, pos - 1]] < s:
                    out[i, pos] = out[i, pos - 1]
                    pos -= 1
                out[i, pos] = j
    return out


def topk_rows_numpy(scores, k):
    """Column indices of the k largest entries per row, ties to lower index."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :k]).astype(np.int64)


if NUMBA_ENABLED:
    _topk_loop_jit = njit(cache=True)(_topk_loop)

    def topk_rows_numba(scores, k):
        out = np.empty((scores.shape[0], k), dtype=np.int64)
        _topk_loop_jit(scores, k, out)
        return out

    topk_rows = topk_rows_numba
else:
    topk_rows_numba = None
    topk_rows = topk_rows_numpy
