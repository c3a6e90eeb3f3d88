"""Undirected communication graphs with an edge orientation.

Nodes are 1-based. Each stored edge ``(i, j)`` is oriented with ``i`` as the
initial vertex, so row ``e`` of the incidence matrix has ``+1`` in column
``i`` and ``-1`` in column ``j``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Topology:
    node_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if int(self.node_count) < 1:
            raise ValueError("node_count must be >= 1")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            for v in (i, j):
                if not 1 <= v <= self.node_count:
                    raise ValueError(f"node {v} outside 1..{self.node_count}")
            key = frozenset((i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {{{i}, {j}}}")
            seen.add(key)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(
        cls,
        node_count: int,
        pairs: Iterable[Sequence[int]],
        initial: Optional[Sequence[int]] = None,
    ) -> "Topology":
        """Build from unordered pairs.

        ``initial[k]`` names the initial vertex of edge ``k``; by default the
        smaller node index is initial.
        """
        pairs = [tuple(int(v) for v in p) for p in pairs]
        if initial is None:
            initial = [min(p) for p in pairs]
        if len(initial) != len(pairs):
            raise ValueError("one initial vertex per edge required")
        edges = []
        for (i, j), s in zip(pairs, initial):
            if s == i:
                edges.append((i, j))
            elif s == j:
                edges.append((j, i))
            else:
                raise ValueError(f"initial vertex {s} is not an endpoint of edge ({i}, {j})")
        return cls(node_count, tuple(edges))

    @classmethod
    def path(cls, node_count: int) -> "Topology":
        return cls(node_count, tuple((i, i + 1) for i in range(1, node_count)))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def flipped(self, which: Optional[Iterable[int]] = None) -> "Topology":
        """Reverse the orientation of edges with 0-based indices in ``which`` (all by default)."""
        which = set(range(self.edge_count) if which is None else which)
        return Topology(
            self.node_count,
            tuple((j, i) if k in which else (i, j) for k, (i, j) in enumerate(self.edges)),
        )


def incidence_matrix(topology: Topology) -> np.ndarray:
    Q = np.zeros((topology.edge_count, topology.node_count))
    for e, (i, j) in enumerate(topology.edges):
        Q[e, i - 1] = 1.0
        Q[e, j - 1] = -1.0
    return Q


def laplacian(topology: Topology) -> np.ndarray:
    Q = incidence_matrix(topology)
    return Q.T @ Q


def adjacency_matrix(topology: Topology) -> np.ndarray:
    A = np.zeros((topology.node_count, topology.node_count))
    for i, j in topology.edges:
        A[i - 1, j - 1] = A[j - 1, i - 1] = 1.0
    return A


def unreachable_nodes(topology: Topology) -> list[int]:
    """Nodes not reached by breadth-first search from node 1."""
    nbrs: dict[int, list[int]] = {v: [] for v in range(1, topology.node_count + 1)}
    for i, j in topology.edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return [v for v in range(1, topology.node_count + 1) if v not in seen]


def is_connected(topology: Topology) -> bool:
    return not unreachable_nodes(topology)


def kron_expand(M, m: int) -> np.ndarray:
    """``M kron I_m``."""
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return np.kron(M, np.eye(int(m)))


def random_connected_topology(rng: np.random.Generator, max_nodes: int = 12) -> Topology:
    """Random spanning tree plus random extra edges, with random orientations."""
    n = int(rng.integers(1, max_nodes + 1))
    order = rng.permutation(n) + 1
    pairs = set()
    for k in range(1, n):
        parent = order[int(rng.integers(0, k))]
        pairs.add(frozenset((int(order[k]), int(parent))))
    if n > 2:
        extra = int(rng.integers(0, n))
        for _ in range(extra):
            i, j = rng.choice(n, size=2, replace=False) + 1
            pairs.add(frozenset((int(i), int(j))))
    edges = []
    for p in sorted(tuple(sorted(p)) for p in pairs):
        edges.append(p if rng.random() < 0.5 else p[::-1])
    return Topology(n, tuple(edges))
