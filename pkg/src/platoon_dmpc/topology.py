"""
Directed communication graphs for a leader and N followers.

Followers are numbered 1..N in every public function; the leader is node 0
and enters only through ``leader_links``. ``adjacency[i-1, j-1] == 1`` means
follower i receives from follower j.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class DirectedGraph:
    adjacency: np.ndarray
    leader_links: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=int)
        lead = np.array(self.leader_links, dtype=int).reshape(-1)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise TopologyError(f"adjacency must be square, got shape {adj.shape}")
        if lead.shape[0] != adj.shape[0]:
            raise TopologyError(
                f"leader_links has {lead.shape[0]} entries for {adj.shape[0]} followers"
            )
        if not np.isin(adj, (0, 1)).all() or not np.isin(lead, (0, 1)).all():
            raise TopologyError("graph entries must be 0 or 1")
        if np.any(np.diag(adj)):
            raise TopologyError("self-loops are not allowed (a_ii must be 0)")
        adj.setflags(write=False)
        lead.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "leader_links", lead)

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return (np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.leader_links, other.leader_links))

    def __hash__(self):
        return hash((self.adjacency.tobytes(), self.adjacency.shape, self.leader_links.tobytes()))

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_in_neighbors(cls, in_neighbors: dict | Sequence, leader: Iterable[int], name=""):
        """Build a graph from per-follower in-neighbor lists.

        ``in_neighbors`` maps follower index (1-based) to the followers it
        hears from; a sequence is read as entries for followers 1..N.
        ``leader`` lists the followers with a direct leader link.
        """
        if not isinstance(in_neighbors, dict):
            in_neighbors = {i + 1: list(nb) for i, nb in enumerate(in_neighbors)}
        n = len(in_neighbors)
        adj = np.zeros((n, n), dtype=int)
        for i, nbs in in_neighbors.items():
            for j in nbs:
                _check_index(i, n)
                _check_index(j, n)
                adj[i - 1, j - 1] = 1
        lead = np.zeros(n, dtype=int)
        for i in leader:
            _check_index(i, n)
            lead[i - 1] = 1
        return cls(adj, lead, name=name)

    def to_in_neighbors(self) -> dict:
        return {
            "in_neighbors": [sorted(in_neighbors(self, i)) for i in range(1, self.n_followers + 1)],
            "leader": [i + 1 for i in np.flatnonzero(self.leader_links)],
        }


def _check_index(i: int, n: int):
    if not 1 <= i <= n:
        raise TopologyError(f"follower index {i} out of range 1..{n}")


def laplacian(g: DirectedGraph) -> np.ndarray:
    a = g.adjacency.astype(float)
    return np.diag(a.sum(axis=1)) - a


def leader_matrix(g: DirectedGraph) -> np.ndarray:
    return np.diag(g.leader_links.astype(float))


def information_matrix(g: DirectedGraph) -> np.ndarray:
    """M = W + L: leader-link diagonal plus the in-degree Laplacian."""
    return leader_matrix(g) + laplacian(g)


def in_neighbors(g: DirectedGraph, i: int) -> set[int]:
    _check_index(i, g.n_followers)
    return {int(j) + 1 for j in np.flatnonzero(g.adjacency[i - 1])}


def out_neighbors(g: DirectedGraph, i: int) -> set[int]:
    _check_index(i, g.n_followers)
    return {int(j) + 1 for j in np.flatnonzero(g.adjacency[:, i - 1])}


def union_graph(graphs: Sequence[DirectedGraph]) -> DirectedGraph:
    if len(graphs) == 0:
        raise TopologyError("union of an empty list of graphs")
    n = graphs[0].n_followers
    if any(g.n_followers != n for g in graphs):
        raise TopologyError("graphs in a union must have the same number of followers")
    adj = np.zeros((n, n), dtype=int)
    lead = np.zeros(n, dtype=int)
    for g in graphs:
        adj |= g.adjacency
        lead |= g.leader_links
    return DirectedGraph(adj, lead, name="union")


def reachable_from_leader(g: DirectedGraph) -> set[int]:
    seen = {int(i) + 1 for i in np.flatnonzero(g.leader_links)}
    queue = deque(seen)
    while queue:
        j = queue.popleft()
        # edge j -> i exists when a_ij = 1
        for i in out_neighbors(g, j):
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def has_leader_spanning_tree(g: DirectedGraph) -> bool:
    return len(reachable_from_leader(g)) == g.n_followers


def is_information_matrix_pd(g: DirectedGraph, tol: float = 1e-12) -> bool:
    """Diagnostic: is the symmetric part of M positive definite?"""
    m = information_matrix(g)
    return bool(np.linalg.eigvalsh(0.5 * (m + m.T)).min() > tol)


@dataclass(frozen=True)
class TopologySet:
    graphs: tuple

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise TopologyError("a topology set needs at least one graph")
        n = graphs[0].n_followers
        if any(g.n_followers != n for g in graphs):
            raise TopologyError("all modes must share n_followers")
        object.__setattr__(self, "graphs", graphs)

    @property
    def n_followers(self) -> int:
        return self.graphs[0].n_followers

    @property
    def union(self) -> DirectedGraph:
        return union_graph(self.graphs)

    def __len__(self):
        return len(self.graphs)

    def mode(self, phi: int) -> DirectedGraph:
        """Graph for switching mode ``phi`` (1-based)."""
        if not 1 <= phi <= len(self.graphs):
            raise TopologyError(f"mode {phi} out of range 1..{len(self.graphs)}")
        return self.graphs[phi - 1]

    def check_spanning_tree(self):
        if not has_leader_spanning_tree(self.union):
            raise TopologyError("union graph has no directed spanning tree rooted at the leader")


# Built-in topologies of the four-mode platoon scenario.

def pf(n: int) -> DirectedGraph:
    """Predecessor following: i hears i-1, follower 1 hears the leader."""
    return DirectedGraph.from_in_neighbors(
        {i: ([i - 1] if i > 1 else []) for i in range(1, n + 1)}, [1], name="PF"
    )


def lpf(n: int) -> DirectedGraph:
    """Leader-predecessor following: PF edges plus a leader link everywhere."""
    return DirectedGraph.from_in_neighbors(
        {i: ([i - 1] if i > 1 else []) for i in range(1, n + 1)}, range(1, n + 1), name="LPF"
    )


def pf_failure(n: int, broken: int = 3) -> DirectedGraph:
    """PF with the channel (broken-1) -> broken removed."""
    g = pf(n)
    adj = g.adjacency.copy()
    if 2 <= broken <= n:
        adj[broken - 1, broken - 2] = 0
    return DirectedGraph(adj, g.leader_links, name="PF-failure")


def lpf_failure(n: int, lost: Sequence[int] = (4, 5)) -> DirectedGraph:
    """LPF with the leader links to the ``lost`` followers removed."""
    g = lpf(n)
    lead = g.leader_links.copy()
    for i in lost:
        if 1 <= i <= n:
            lead[i - 1] = 0
    return DirectedGraph(g.adjacency, lead, name="LPF-failure")


BUILTIN = {
    "LPF": lambda n: lpf(n),
    "LPF-failure": lambda n: lpf_failure(n),
    "PF": lambda n: pf(n),
    "PF-failure": lambda n: pf_failure(n),
}


def builtin(name: str, n: int) -> DirectedGraph:
    try:
        return BUILTIN[name](n)
    except KeyError:
        raise TopologyError(f"unknown built-in topology {name!r}; known: {sorted(BUILTIN)}") from None


def standard_topologies(n: int = 5) -> TopologySet:
    """Modes 1..4: LPF, LPF-failure, PF, PF-failure."""
    return TopologySet(tuple(builtin(k, n) for k in ("LPF", "LPF-failure", "PF", "PF-failure")))
