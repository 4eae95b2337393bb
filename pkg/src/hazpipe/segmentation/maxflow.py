"""Minimum s-t cut via Dinic's blocking-flow max-flow.

The inner loops are compiled with numba; the graph is stored as a CSR arc
list where every arc has a paired reverse arc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class FlowGraph:
    """Directed graph with non-negative float capacities.

    Nodes are ``0 .. n_nodes - 1``. Parallel edges are allowed and simply add up.
    """

    def __init__(self, n_nodes: int):
        if n_nodes < 2:
            raise ValueError("a flow graph needs at least two nodes")
        self.n_nodes = n_nodes
        self._tails: list[np.ndarray] = []
        self._heads: list[np.ndarray] = []
        self._caps: list[np.ndarray] = []

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        self.add_edges(np.array([u]), np.array([v]), np.array([cap]), np.array([rev_cap]))

    def add_edges(self, tails, heads, caps, rev_caps=None) -> None:
        """Vectorised :meth:`add_edge`; ``rev_caps`` defaults to zero."""
        tails = np.asarray(tails, dtype=np.int64).ravel()
        heads = np.asarray(heads, dtype=np.int64).ravel()
        caps = np.broadcast_to(np.asarray(caps, dtype=np.float64), tails.shape)
        if rev_caps is None:
            rev_caps = np.zeros_like(caps)
        rev_caps = np.broadcast_to(np.asarray(rev_caps, dtype=np.float64), tails.shape)
        if (caps < 0).any() or (rev_caps < 0).any():
            raise ValueError("edge capacities must be non-negative")
        if not (np.isfinite(caps).all() and np.isfinite(rev_caps).all()):
            raise ValueError("edge capacities must be finite")
        for arr in (tails, heads):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_nodes):
                raise ValueError("edge endpoint out of range")
        # forward arc then reverse arc, interleaved
        self._tails.append(np.stack([tails, heads], axis=1).ravel())
        self._heads.append(np.stack([heads, tails], axis=1).ravel())
        self._caps.append(np.stack([caps, rev_caps], axis=1).ravel())

    def arcs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._tails:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return (
            np.concatenate(self._tails),
            np.concatenate(self._heads),
            np.concatenate(self._caps),
        )


@dataclass(frozen=True)
class CutResult:
    source_side: np.ndarray  # bool per node
    cost: float
    flow: float


@numba.njit(cache=True)
def _dinic(n, start, head, rev, res, s, t, eps):
    flow = 0.0
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    while True:
        level[:] = -1
        level[s] = 0
        qh = 0
        qt = 1
        queue[0] = s
        while qh < qt:
            u = queue[qh]
            qh += 1
            for e in range(start[u], start[u + 1]):
                v = head[e]
                if level[v] < 0 and res[e] > eps:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            break
        for u in range(n):
            it[u] = start[u]
        depth = 0
        u = s
        while True:
            if u == t:
                push = np.inf
                for i in range(depth):
                    if res[path[i]] < push:
                        push = res[path[i]]
                for i in range(depth):
                    e = path[i]
                    res[e] -= push
                    res[rev[e]] += push
                flow += push
                depth = 0
                u = s
                continue
            advanced = False
            while it[u] < start[u + 1]:
                e = it[u]
                v = head[e]
                if res[e] > eps and level[v] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            # dead end: prune u from this phase and retreat
            level[u] = -1
            if depth == 0:
                break
            depth -= 1
            e = path[depth]
            u = head[rev[e]]
            it[u] += 1
    return flow, level


def min_cut(graph: FlowGraph, source: int, sink: int) -> CutResult:
    """Minimum s-t cut of ``graph``.

    Returns the source-side partition, the capacity of the cut edges, and the
    max-flow value (they agree up to float round-off).
    """
    if source == sink:
        raise ValueError("source and sink must differ")
    n = graph.n_nodes
    tails, heads, caps = graph.arcs()
    m = tails.size
    # arcs are stored in (forward, reverse) pairs, so the partner of arc i is i ^ 1
    partner = np.arange(m, dtype=np.int64) ^ 1
    order = np.argsort(tails, kind="stable")
    pos = np.empty(m, dtype=np.int64)
    pos[order] = np.arange(m, dtype=np.int64)
    head = heads[order]
    rev = pos[partner[order]]
    res = caps[order].copy()
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(tails, minlength=n), out=start[1:])
    scale = float(caps.max()) if m else 0.0
    eps = 1e-13 * max(1.0, scale)
    flow, level = _dinic(n, start, head, rev, res, source, sink, eps)
    side = level >= 0
    # residual reachability after the final BFS; dead-end pruning in the last
    # phase never happens because that phase exits right after BFS
    cut = side[tails] & ~side[heads]
    cost = float(caps[cut].sum())
    return CutResult(source_side=side, cost=cost, flow=float(flow))
