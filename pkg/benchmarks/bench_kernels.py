"""Time the numba kernels against their pure-numpy fallbacks.

Covers the two hot loops: CSR sparse-dense matmul (the propagation step) and
row-wise top-k selection (kNN graph construction). The numba path needs one
warmup call for JIT compilation; timings below exclude it.
"""

import argparse
import time

import numpy as np

from fusegcn import _kernels as K
from fusegcn.graphs import normalized_adjacency
from fusegcn.heterophily import SynthSpec, generate_synthetic


def timeit(fn, repeats):
    fn()  # warmup (JIT compile / cache touch)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=4000)
    ap.add_argument("--cols", type=int, default=64)
    ap.add_argument("--degree", type=float, default=12.0)
    ap.add_argument("--k", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    n = args.nodes
    p_edge = args.degree / n
    g = generate_synthetic(SynthSpec(n, 2, p_intra=p_edge, p_inter=p_edge,
                                     n_features=8, seed=0))
    adj = normalized_adjacency(g)
    h = np.random.default_rng(1).standard_normal((n, args.cols))
    scores = np.random.default_rng(2).standard_normal((min(n, 2000), min(n, 2000)))
    np.fill_diagonal(scores, -np.inf)

    print(f"graph: {n} nodes, {adj.nnz} nonzeros, dense operand {n}x{args.cols}")
    print(f"numba available and enabled: {K.NUMBA_ENABLED}")
    rows = []

    t_np = timeit(lambda: K.spmm_csr_numpy(adj.indptr, adj.indices, adj.data, h),
                  args.repeats)
    rows.append(("spmm_csr", "numpy", t_np))
    if K.spmm_csr_numba is not None:
        t_nb = timeit(lambda: K.spmm_csr_numba(adj.indptr, adj.indices, adj.data, h),
                      args.repeats)
        rows.append(("spmm_csr", "numba", t_nb))
        ref = K.spmm_csr_numpy(adj.indptr, adj.indices, adj.data, h)
        out = K.spmm_csr_numba(adj.indptr, adj.indices, adj.data, h)
        assert np.allclose(ref, out, rtol=1e-12), "paths disagree"

    t_np = timeit(lambda: K.topk_rows_numpy(scores, args.k), args.repeats)
    rows.append(("topk_rows", "numpy", t_np))
    if K.topk_rows_numba is not None:
        t_nb = timeit(lambda: K.topk_rows_numba(scores, args.k), args.repeats)
        rows.append(("topk_rows", "numba", t_nb))
        assert np.array_equal(K.topk_rows_numpy(scores, args.k),
                              K.topk_rows_numba(scores, args.k)), "paths disagree"

    print(f"{'kernel':<12} {'path':<7} {'best (ms)':>10}")
    for kernel, path, t in rows:
        print(f"{kernel:<12} {path:<7} {t * 1e3:>10.3f}")
    by = {}
    for kernel, path, t in rows:
        by.setdefault(kernel, {})[path] = t
    for kernel, paths in by.items():
        if "numba" in paths:
            print(f"{kernel}: numba is {paths['numpy'] / paths['numba']:.1f}x "
                  f"the numpy path")


if __name__ == "__main__":
    main()
