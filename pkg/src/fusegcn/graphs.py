"""Graph container, CSR sparse matrices, homophily measurement, kNN feature graph.

Edges are undirected, stored canonically as (i, j) with i < j, sorted
lexicographically and free of duplicates and self-loops. All operations here
are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import spmm_csr, topk_rows


@dataclass(frozen=True)
class Graph:
    """Undirected graph with node features and optional class labels."""

    n_nodes: int
    edges: np.ndarray                 # (m, 2) int64, canonical i < j, sorted, unique
    features: np.ndarray              # (n_nodes, d) float64
    labels: np.ndarray | None = None  # (n_nodes,) int64 class ids, or None

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("graph needs at least one node")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError("edges must be an (m, 2) array")
        if e.shape[0]:
            if e.min() < 0 or e.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range [0, n_nodes)")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must be canonical (i < j): no self-loops")
            keys = e[:, 0].astype(np.int64) * self.n_nodes + e[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edges must be sorted and free of duplicates")
        if self.features.shape[0] != self.n_nodes or self.features.ndim != 2:
            raise ValueError("features must be an (n_nodes, d) matrix")
        if self.labels is not None:
            if self.labels.shape != (self.n_nodes,):
                raise ValueError("labels must be one class id per node")
            if self.labels.min() < 0:
                raise ValueError("labels must be nonnegative class ids")

    @classmethod
    def from_edges(cls, n_nodes, edges, features, labels=None) -> "Graph":
        """Build a Graph from any iterable of (i, j) pairs, canonicalizing."""
        features = np.asarray(features, dtype=np.float64)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
        return cls(n_nodes, canonical_edges(edges, n_nodes), features, labels)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise ValueError("graph has no labels")
        return int(self.labels.max()) + 1


def canonical_edges(edges, n_nodes) -> np.ndarray:
    """Canonicalize an edge list: i < j ordering, deduplicated, sorted."""
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                   dtype=np.int64).reshape(-1, 2)
    if e.shape[0] == 0:
        return e
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loop in edge list")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


@dataclass
class SparseMatrix:
    """CSR matrix; column indices strictly increasing per row, no stored zeros."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray   # (n_rows + 1,) int64
    indices: np.ndarray  # (nnz,) int64
    data: np.ndarray     # (nnz,) float64
    _transpose: "SparseMatrix | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.indptr.shape != (self.n_rows + 1,) or self.indptr[0] != 0:
            raise ValueError("bad indptr")
        if self.indptr[-1] != self.indices.shape[0] or self.indices.shape != self.data.shape:
            raise ValueError("indices/data length mismatch")
        if self.indices.shape[0]:
            if self.indices.min() < 0 or self.indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            d = np.diff(self.indices)
            if d.shape[0]:
                # positions crossing a row boundary are exempt from the ordering check
                within_row = np.ones(d.shape[0], dtype=bool)
                breaks = self.indptr[1:-1]
                breaks = breaks[(breaks > 0) & (breaks <= d.shape[0])]
                within_row[breaks - 1] = False
                if np.any(d[within_row] <= 0):
                    raise ValueError("column indices not strictly increasing within a row")
        if np.any(self.data == 0.0):
            raise ValueError("explicit zero entry")

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        counts = np.bincount(rows, minlength=n_rows)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(n_rows, n_cols, indptr, cols, vals)

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    def matmul_dense(self, dense: np.ndarray) -> np.ndarray:
        if dense.shape[0] != self.n_cols:
            raise ValueError(f"shape mismatch: {self.n_rows}x{self.n_cols} @ {dense.shape}")
        return spmm_csr(self.indptr, self.indices, self.data, np.ascontiguousarray(dense))

    def transpose(self) -> "SparseMatrix":
        if self._transpose is None:
            rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))
            t = SparseMatrix.from_coo(self.n_cols, self.n_rows, self.indices, rows, self.data)
            self._transpose = t
        return self._transpose

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out


def degree_stats(g: Graph) -> np.ndarray:
    """Per-node degree, self-loops excluded (there are none by construction)."""
    deg = np.zeros(g.n_nodes, dtype=np.int64)
    if g.n_edges:
        deg += np.bincount(g.edges[:, 0], minlength=g.n_nodes)
        deg += np.bincount(g.edges[:, 1], minlength=g.n_nodes)
    return deg


def normalized_adjacency(g: Graph) -> SparseMatrix:
    """Symmetric degree-normalized adjacency with self-loops added.

    Entry (i, j) is 1/sqrt(deg_i * deg_j) where deg counts the added
    self-loop, for every edge of the self-loop-augmented graph. Isolated
    nodes end up with a single diagonal entry of 1.
    """
    deg = degree_stats(g) + 1.0
    n = g.n_nodes
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1], loops])
    cols = np.concatenate([g.edges[:, 1], g.edges[:, 0], loops])
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


def homophily_ratio(g: Graph) -> float:
    """Fraction of edges whose endpoints share a label, each edge counted once."""
    if g.labels is None:
        raise ValueError("homophily needs labels")
    if g.n_edges == 0:
        raise ValueError("undefined homophily: empty edge set")
    same = np.count_nonzero(g.labels[g.edges[:, 0]] == g.labels[g.edges[:, 1]])
    return same / g.n_edges


def knn_feature_graph(x: np.ndarray, k: int) -> Graph:
    """Undirected k-nearest-neighbor graph under cosine similarity.

    Each node selects its k most cosine-similar distinct neighbors (ties
    broken by the lower node index); the directed selections are then
    symmetrized by union. The returned graph carries the input features and
    no labels.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the node count {n}")
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cosine similarity undefined: zero-norm feature row at node {zero[0]}")
    xn = x / norms[:, None]
    sim = xn @ xn.T
    np.fill_diagonal(sim, -np.inf)
    nbrs = topk_rows(sim, k)
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    edges = canonical_edges(np.stack([src, nbrs.ravel()], axis=1), n)
    return Graph(n, edges, x, None)
