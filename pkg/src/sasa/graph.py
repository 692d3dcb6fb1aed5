"""Areal adjacency and neighbor orders.

Locations are referred to by 0-based index (the Dataset's
first-appearance order).  The neighbor order between two locations is
their graph distance: 1 for adjacent pairs, 2 for pairs sharing a
neighbor, and so on.  Unreachable pairs get the cap n so the spatial
weight exp(psi * (1 - a_ij)) is driven to ~0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import GraphError

__all__ = [
    "AdjacencyGraph",
    "NeighborOrders",
    "build_grid_adjacency",
    "load_adjacency",
    "neighbor_orders",
]


class AdjacencyGraph:
    """Undirected simple graph over n locations (no self loops)."""

    def __init__(self, n: int, edges):
        if n < 1:
            raise GraphError(f"need at least one location, got n={n}")
        self.n = int(n)
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at location index {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i},{j}) out of range for n={n}")
            canon.add((min(i, j), max(i, j)))
        self.edges = frozenset(canon)
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        self._neighbors = [tuple(v) for v in nbrs]

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"AdjacencyGraph(n={self.n}, edges={self.n_edges})"


@dataclass(frozen=True)
class NeighborOrders:
    """All-pairs neighbor orders; a[i, j] is the graph distance, with
    unreachable pairs set to a_max_cap = n."""

    a: np.ndarray
    a_max_cap: int


def build_grid_adjacency(rows: int, cols: int, contiguity: str = "rook") -> AdjacencyGraph:
    """Regular lattice adjacency, cells indexed row-major.

    rook: edges across shared sides; queen: adds diagonals.
    """
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    if contiguity not in ("rook", "queen"):
        raise GraphError(f"contiguity must be 'rook' or 'queen', got {contiguity!r}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
            if contiguity == "queen" and r + 1 < rows:
                if c + 1 < cols:
                    edges.append((i, i + cols + 1))
                if c - 1 >= 0:
                    edges.append((i, i + cols - 1))
    return AdjacencyGraph(rows * cols, edges)


def load_adjacency(path, location_ids: list[str]) -> AdjacencyGraph:
    """Read an edge list CSV of ``id_a,id_b`` rows.

    Ids must come from location_ids (the dataset's ordering defines the
    indices).  Symmetric duplicates collapse to one edge.
    """
    index = {loc: i for i, loc in enumerate(location_ids)}
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [c.strip() for c in line.split(",")]
            if parts == ["id_a", "id_b"]:  # optional header
                continue
            if len(parts) != 2:
                raise GraphError(f"{path}: line {line_no}: expected 'id_a,id_b'")
            a, b = parts
            for ident in (a, b):
                if ident not in index:
                    raise GraphError(f"{path}: line {line_no}: unknown id {ident!r}")
            if a == b:
                raise GraphError(f"{path}: line {line_no}: self-loop at {a!r}")
            edges.append((index[a], index[b]))
    return AdjacencyGraph(len(location_ids), edges)


def neighbor_orders(graph: AdjacencyGraph) -> NeighborOrders:
    """All-pairs graph distances by BFS from every source."""
    n = graph.n
    cap = n
    a = np.full((n, n), cap, dtype=np.int64)
    for src in range(n):
        a[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            du = a[src, u]
            for w in graph.neighbors(u):
                if a[src, w] == cap and w != src:
                    a[src, w] = du + 1
                    queue.append(w)
    # BFS from each source already yields a symmetric matrix; enforce
    # exact symmetry anyway so downstream checks can rely on it.
    a = np.minimum(a, a.T)
    a.flags.writeable = False
    return NeighborOrders(a=a, a_max_cap=cap)
