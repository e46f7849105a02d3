"""Node-level connectivity graphs and greedy aggregation.

A matrix over nodal DoFs is first amalgamated to one graph vertex per mesh
node; aggregation then partitions the vertices into disjoint, non-empty
aggregates, each of which becomes one node of the next coarser level. For
co-located physics blocks an aggregation can be cloned so that both blocks
coarsen identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sparse import CsrMatrix

__all__ = [
    "NodeGraph",
    "Aggregation",
    "amalgamate",
    "aggregate_greedy",
    "clone_aggregation",
    "write_aggregation",
    "read_aggregation",
]


class NodeGraph:
    """Undirected graph over mesh nodes with sorted neighbor lists (no self loops)."""

    __slots__ = ("n_nodes", "adjacency")

    def __init__(self, n_nodes: int, adjacency: Sequence[np.ndarray]):
        self.n_nodes = int(n_nodes)
        if len(adjacency) != self.n_nodes:
            raise ValueError("adjacency list length must equal n_nodes")
        self.adjacency = [np.asarray(a, dtype=np.int64) for a in adjacency]

    @classmethod
    def from_edges(cls, n_nodes: int, u, v):
        """Build from endpoint arrays; edges are symmetrized and deduplicated."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        keep = u != v
        u, v = u[keep], v[keep]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        if len(src):
            key = src * n_nodes + dst
            order = np.argsort(key, kind="stable")
            key, src, dst = key[order], src[order], dst[order]
            uniq = np.ones(len(key), dtype=bool)
            uniq[1:] = key[1:] != key[:-1]
            src, dst = src[uniq], dst[uniq]
        counts = np.bincount(src, minlength=n_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        adjacency = [dst[offsets[i]:offsets[i + 1]] for i in range(n_nodes)]
        return cls(n_nodes, adjacency)

    @property
    def n_edges(self):
        return sum(len(a) for a in self.adjacency) // 2

    def degree(self, u):
        return len(self.adjacency[u])

    def edge_set(self):
        return {(u, int(v)) for u in range(self.n_nodes) for v in self.adjacency[u] if u < v}

    def __repr__(self):
        return f"NodeGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


@dataclass
class Aggregation:
    """Disjoint partition of level-l nodes; aggregate i becomes coarse node i.

    Every node belongs to exactly one aggregate and every aggregate is
    non-empty, so the aggregates cover {0, ..., n_nodes-1} without overlap.
    """

    n_nodes: int
    n_aggregates: int
    node_to_aggregate: np.ndarray
    root_nodes: np.ndarray

    def __post_init__(self):
        self.node_to_aggregate = np.asarray(self.node_to_aggregate, dtype=np.int64)
        self.root_nodes = np.asarray(self.root_nodes, dtype=np.int64)
        self.validate()

    def validate(self):
        m, roots = self.node_to_aggregate, self.root_nodes
        if m.shape != (self.n_nodes,):
            raise ValueError("node_to_aggregate must have one entry per node")
        if roots.shape != (self.n_aggregates,):
            raise ValueError("root_nodes must have one entry per aggregate")
        if self.n_nodes == 0:
            raise ValueError("empty aggregation")
        if m.min() < 0 or m.max() >= self.n_aggregates:
            raise ValueError("aggregate id out of range")
        sizes = np.bincount(m, minlength=self.n_aggregates)
        if np.any(sizes == 0):
            raise ValueError("every aggregate must be non-empty")
        if np.any(m[roots] != np.arange(self.n_aggregates)):
            raise ValueError("each root node must belong to its own aggregate")

    @classmethod
    def from_map(cls, node_to_aggregate):
        """Build from a node->aggregate map, taking each aggregate's lowest node as root."""
        m = np.asarray(node_to_aggregate, dtype=np.int64)
        n_agg = int(m.max()) + 1 if len(m) else 0
        roots = np.full(n_agg, -1, dtype=np.int64)
        for node in range(len(m) - 1, -1, -1):
            roots[m[node]] = node
        return cls(len(m), n_agg, m, roots)

    def aggregate_sizes(self):
        return np.bincount(self.node_to_aggregate, minlength=self.n_aggregates)

    def members(self, agg_id):
        return np.nonzero(self.node_to_aggregate == agg_id)[0]


def amalgamate(A: CsrMatrix, dofs_per_node: int = 1, layout: str = "interleaved",
               drop_tol: float = 0.0) -> NodeGraph:
    """Collapse a nodal-DoF matrix to its node connectivity graph.

    Nodes u != v are adjacent iff some DoF i of u couples to some DoF j of v
    with |a_ij| > drop_tol * sqrt(|a_ii| * |a_jj|); the result is symmetrized
    by union. With drop_tol = 0 every stored nonzero couples (stored zeros
    never create edges).
    """
    if A.n_rows != A.n_cols:
        raise ValueError("amalgamate expects a square matrix")
    if drop_tol < 0:
        raise ValueError("drop_tol must be >= 0")
    if A.n_rows % dofs_per_node:
        raise ValueError(f"{A.n_rows} rows not divisible by {dofs_per_node} DoFs per node")
    n_nodes = A.n_rows // dofs_per_node
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    cols = A.col_indices
    diag = np.abs(A.diag())
    strong = np.abs(A.values) > drop_tol * np.sqrt(diag[rows] * diag[cols])
    if layout == "interleaved":
        u = rows // dofs_per_node
        v = cols // dofs_per_node
    elif layout == "stacked":
        u = rows % n_nodes
        v = cols % n_nodes
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return NodeGraph.from_edges(n_nodes, u[strong], v[strong])


def aggregate_greedy(g: NodeGraph, target_size: int = 3,
                     seed_order: Optional[Sequence[int]] = None) -> Aggregation:
    """Greedy aggregation in three phases.

    Phase 1 sweeps the nodes in seed order; a node whose neighbors are all
    unaggregated becomes a root and absorbs up to target_size - 1 of them
    (lowest index first). Phase 2 attaches each remaining node to the adjacent
    phase-1 aggregate with the lowest root index. Phase 3 turns anything still
    unassigned (isolated vertices) into singleton aggregates. The result is
    deterministic for identical inputs.
    """
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    n = g.n_nodes
    order = np.arange(n) if seed_order is None else np.asarray(list(seed_order), dtype=np.int64)
    if sorted(order.tolist()) != list(range(n)):
        raise ValueError("seed_order must be a permutation of all nodes")
    assign = np.full(n, -1, dtype=np.int64)
    roots = []

    for u in order:
        if assign[u] != -1:
            continue
        nbrs = g.adjacency[u]
        if np.any(assign[nbrs] != -1):
            continue
        agg = len(roots)
        roots.append(int(u))
        assign[u] = agg
        assign[nbrs[:target_size - 1]] = agg

    # Phase 2 decisions are taken against the phase-1 state so the outcome
    # does not depend on the order unassigned nodes are visited in.
    phase1 = assign.copy()
    root_arr = np.asarray(roots, dtype=np.int64)
    for u in order:
        if assign[u] != -1:
            continue
        neighbor_aggs = phase1[g.adjacency[u]]
        neighbor_aggs = neighbor_aggs[neighbor_aggs != -1]
        if len(neighbor_aggs) == 0:
            continue
        assign[u] = neighbor_aggs[np.argmin(root_arr[neighbor_aggs])]

    for u in order:
        if assign[u] == -1:
            assign[u] = len(roots)
            roots.append(int(u))

    return Aggregation(n, len(roots), assign, np.asarray(roots, dtype=np.int64))


def clone_aggregation(src: Aggregation, n_target_nodes: int) -> Aggregation:
    """Reuse an aggregation for a co-located block with the same node count."""
    if n_target_nodes != src.n_nodes:
        raise ValueError(
            f"cannot clone aggregation: target block has {n_target_nodes} nodes but the "
            f"source partitions {src.n_nodes}; cloning requires co-located DoFs")
    return Aggregation(src.n_nodes, src.n_aggregates,
                       src.node_to_aggregate.copy(), src.root_nodes.copy())


def write_aggregation(path, agg: Aggregation):
    """Dump as one 'node_id aggregate_id' line per node."""
    with open(path, "w") as f:
        for node, a in enumerate(agg.node_to_aggregate):
            f.write(f"{node} {a}\n")


def read_aggregation(path) -> Aggregation:
    pairs = np.loadtxt(path, dtype=np.int64, ndmin=2)
    m = np.full(len(pairs), -1, dtype=np.int64)
    m[pairs[:, 0]] = pairs[:, 1]
    return Aggregation.from_map(m)
