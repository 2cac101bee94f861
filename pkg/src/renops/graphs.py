"""Sparse graphs: CSR storage, scale-free generation, spectral positional
encodings, and random-walk subgraph sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import container


class GraphError(Exception):
    pass


@dataclass
class Graph:
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray | None = None
    directed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
        self.validate()

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def nnz(self):
        return len(self.indices)

    def validate(self):
        if self.indptr[0] != 0 or self.indptr[-1] != self.nnz:
            raise GraphError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise GraphError("indptr must be non-decreasing")
        if self.nnz and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise GraphError("column index out of range")
        if self.weights is not None:
            if len(self.weights) != self.nnz:
                raise GraphError("weights length != nnz")
            if np.any(self.weights < 0):
                raise GraphError("negative edge weight")
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        if np.any(rows == self.indices):
            raise GraphError("self-loops are not allowed")
        if not self.directed:
            a = self.to_scipy()
            if (a != a.T).nnz != 0:
                raise GraphError("undirected graph must be symmetric")

    def to_scipy(self):
        data = self.weights if self.weights is not None \
            else np.ones(self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n, self.n))

    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edge_list(self):
        """Unique undirected edges (i < j) as an (E, 2) array."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        mask = rows < self.indices
        return np.stack([rows[mask], self.indices[mask]], axis=1)

    @staticmethod
    def from_scipy(a, directed=False, meta=None):
        a = sp.csr_matrix(a)
        a.sort_indices()
        weights = None if np.all(a.data == 1.0) else a.data.astype(np.float64)
        return Graph(a.indptr.astype(np.int64), a.indices.astype(np.int64),
                     weights, directed, meta or {})

    @staticmethod
    def from_edges(n, edges, directed=False, meta=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        rows, cols = edges[:, 0], edges[:, 1]
        if not directed:
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        a.data[:] = 1.0  # collapse duplicates
        return Graph.from_scipy(a, directed, meta)


def generate_powerlaw_cluster(n, m_attach, p_triad, seed):
    """Holme-Kim growth: preferential attachment plus triad closure.

    Produces the heavy-tailed, highly clustered topologies the benchmarks
    run on; measured degree exponent and clustering land in metadata.
    """
    if n < m_attach + 1:
        raise GraphError(f"need n >= m_attach + 1, got n={n}, m={m_attach}")
    if not 0.0 <= p_triad <= 1.0:
        raise GraphError(f"p_triad must be in [0,1], got {p_triad}")
    g = nx.powerlaw_cluster_graph(n, m_attach, p_triad, seed=seed)
    a = nx.to_scipy_sparse_array(g, nodelist=range(n), format="csr")
    graph = Graph.from_scipy(sp.csr_matrix(a))
    meta = {
        "generator": "holme-kim",
        "n": n, "m_attach": m_attach, "p_triad": p_triad, "seed": seed,
        "avg_clustering": average_clustering(graph),
    }
    try:
        meta["degree_exponent"] = degree_exponent_fit(graph, k_min=m_attach)
    except GraphError:
        meta["degree_exponent"] = None
    graph.meta = meta
    return graph


def powerlaw_mle(values, k_min):
    """Discrete power-law MLE on the tail k >= k_min.

    alpha_hat = 1 + n_tail / sum ln(k_i / (k_min - 1/2)).
    """
    if k_min <= 0:
        raise GraphError("k_min must be positive")
    values = np.asarray(values)
    tail = values[values >= k_min].astype(np.float64)
    if len(tail) == 0:
        raise GraphError(f"empty degree tail at k_min={k_min}")
    if len(tail) < 100:
        raise GraphError(f"degree tail too small ({len(tail)} < 100) "
                         f"for a stable fit")
    if np.all(tail == tail[0]):
        raise GraphError("degenerate degree tail: all degrees equal")
    denom = np.sum(np.log(tail / (k_min - 0.5)))
    return 1.0 + len(tail) / denom


def degree_exponent_fit(graph, k_min):
    return powerlaw_mle(graph.degrees(), k_min)


def average_clustering(graph):
    """Mean local clustering; nodes of degree < 2 contribute zero."""
    if graph.directed:
        raise GraphError("clustering defined for undirected graphs")
    a = graph.to_scipy()
    a.data[:] = 1.0
    tri = (a @ a).multiply(a).sum(axis=1) / 2.0
    tri = np.asarray(tri).ravel()
    k = graph.degrees().astype(np.float64)
    wedges = k * (k - 1) / 2.0
    local = np.zeros(graph.n)
    mask = k >= 2
    local[mask] = tri[mask] / wedges[mask]
    return float(local.mean())


def laplacian_pe(graph, k):
    """Eigenvectors of L = I - D^{-1/2} A D^{-1/2} for the k smallest
    nontrivial eigenvalues, sign-fixed (first nonzero entry positive).

    Dense path; refuses graphs beyond the desk-scale eigensolve budget.
    """
    n = graph.n
    if n > 5000:
        raise GraphError(f"laplacian_pe: n={n} exceeds dense eigensolve "
                         "budget (5000)")
    if k >= n:
        raise GraphError(f"laplacian_pe: k={k} must be < n={n}")
    ncomp, _ = connected_components(graph.to_scipy(), directed=False)
    if ncomp != 1:
        raise GraphError(f"laplacian_pe: graph has {ncomp} components; "
                         "the zero eigenvalue is degenerate")
    a = graph.to_scipy().toarray()
    a[a != 0] = 1.0
    deg = a.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - (dinv[:, None] * a) * dinv[None, :]
    lap = (lap + lap.T) / 2.0
    vals, vecs = np.linalg.eigh(lap)
    # index 0 is the trivial D^{1/2} 1 kernel vector; skip it
    vals, vecs = vals[1:k + 1], vecs[:, 1:k + 1]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if len(nz) and col[nz[0]] < 0:
            vecs[:, j] = -col
    return np.ascontiguousarray(vecs), vals


def saintrw_sample(graph, n_roots, walk_length, n_target, seed):
    """GraphSAINT-style random-walk node sampling to exactly n_target nodes.

    Roots are uniform without replacement per round; the visited set grows in
    first-visit order, truncated to n_target or extended with further rounds
    (cap 50) when short. Returns sorted unique node ids.
    """
    if n_roots < 1 or walk_length < 0:
        raise GraphError("need n_roots >= 1 and walk_length >= 0")
    if n_target > graph.n:
        raise GraphError(f"n_target={n_target} exceeds graph size {graph.n}")
    rng = np.random.default_rng(seed)
    visited = {}
    for _ in range(50):
        roots = rng.choice(graph.n, size=min(n_roots, graph.n), replace=False)
        for root in roots:
            node = int(root)
            visited.setdefault(node, None)
            for _ in range(walk_length):
                nbrs = graph.neighbors(node)
                if len(nbrs) == 0:
                    break
                node = int(nbrs[rng.integers(len(nbrs))])
                visited.setdefault(node, None)
        if len(visited) >= n_target:
            break
    if len(visited) < n_target:
        raise GraphError(f"sampling stalled at {len(visited)} < {n_target} "
                         "nodes after 50 rounds")
    keep = list(visited)[:n_target]
    return np.sort(np.asarray(keep, dtype=np.int64))


def induced_subgraph(graph, nodes):
    """Sub-CSR over `nodes` (sorted unique ids); exactly the parent edges."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(np.unique(nodes)) != len(nodes):
        raise GraphError("induced_subgraph: duplicate node ids")
    a = graph.to_scipy()[nodes][:, nodes]
    return Graph.from_scipy(a, graph.directed,
                            meta={"parent_nodes": nodes.tolist()})


def save_graph(path, graph):
    blocks = {"indptr": graph.indptr, "indices": graph.indices}
    if graph.weights is not None:
        blocks["weights"] = graph.weights
    meta = dict(graph.meta)
    meta.update({"n": graph.n, "directed": graph.directed,
                 "weighted": graph.weights is not None})
    container.write(path, "graph", meta, blocks)


def load_graph(path):
    _, meta, blocks = container.read(path, expect_kind="graph")
    return Graph(blocks["indptr"], blocks["indices"],
                 blocks.get("weights"), meta.get("directed", False), meta)
