"""Graph utilities over the network: shortest path trees, protected-pipe
paths, BFS distance levels, and cycle-space helpers.

All functions are pure and iterate neighbors in pipe-id order, so results
are deterministic for a given network.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from .model import InstanceError, Network, base_demand, connected_component_count


@dataclass(frozen=True)
class SptResult:
    """Length-weighted distance to the nearest reservoir and the tree edge
    used to reach each node (``None`` for reservoirs)."""

    dist: dict[str, float]
    parent_pipe: dict[str, str | None]


def shortest_path_tree(net: Network) -> SptResult:
    """Multi-source Dijkstra from every reservoir, edge weight = pipe length.

    Ties between equal-length alternatives are broken toward the smaller
    pipe id so repeated runs build the same tree.
    """
    dist: dict[str, float] = {}
    parent: dict[str, str | None] = {}
    heap: list[tuple[float, str]] = []
    for res in net.reservoirs():
        dist[res.id] = 0.0
        parent[res.id] = None
        heapq.heappush(heap, (0.0, res.id))

    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for pipe_id, v in net.neighbors(u):
            nd = d + net.pipe(pipe_id).length_m
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                parent[v] = pipe_id
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and parent[v] is not None and pipe_id < parent[v]:
                parent[v] = pipe_id

    if len(dist) != len(net.nodes):
        missing = sorted(n.id for n in net.nodes if n.id not in dist)
        raise InstanceError(f"nodes unreachable from any reservoir: {missing}")
    return SptResult(dist=dist, parent_pipe=parent)


def path_list(net: Network, spt: SptResult, alpha: float) -> frozenset[str]:
    """Pipes on the tree paths from the highest-base-demand junctions back
    to their nearest reservoir.

    Junctions qualify when their base demand lies in the top alpha slice
    of the [min, max] base-demand range. Computed once per instance; the
    result does not depend on the current design.
    """
    junctions = net.junctions()
    if not junctions:
        return frozenset()
    demands = {n.id: base_demand(n, net.demand_model) for n in junctions}
    d_max = max(demands.values())
    d_min = min(demands.values())
    threshold = d_max - alpha * (d_max - d_min)

    protected: set[str] = set()
    for node in junctions:
        if demands[node.id] < threshold:
            continue
        current = node.id
        while True:
            pipe_id = spt.parent_pipe[current]
            if pipe_id is None:
                break
            protected.add(pipe_id)
            current = net.pipe(pipe_id).other_end(current)
    return frozenset(protected)


def bfs_levels(net: Network, seed_nodes: tuple[str, str]) -> dict[str, int]:
    """Distance level of every pipe from a seed node pair.

    Both seeds sit at depth 0; a pipe's level is one plus the smaller BFS
    depth of its endpoints, so pipes touching a seed are level 1. Callers
    working around a chosen pipe exclude that pipe themselves.
    """
    depth: dict[str, int] = {}
    queue: deque[str] = deque()
    for seed in seed_nodes:
        net.node(seed)
        if seed not in depth:
            depth[seed] = 0
            queue.append(seed)
    while queue:
        u = queue.popleft()
        for _, v in net.neighbors(u):
            if v not in depth:
                depth[v] = depth[u] + 1
                queue.append(v)
    return {
        p.id: 1 + min(depth[p.node1], depth[p.node2])
        for p in net.sorted_pipes
    }


def cycle_space_dim(net: Network) -> int:
    """Number of independent loops: |E| - |V| + number of components."""
    return len(net.pipes) - len(net.nodes) + connected_component_count(net)


def cycle_basis(net: Network) -> list[list[tuple[str, int]]]:
    """Fundamental cycles from a BFS spanning tree.

    Each cycle is an oriented closed walk given as (pipe id, direction)
    pairs, direction ``+1`` when traversed node1 -> node2. Used by loop
    head-loss diagnostics.
    """
    root = net.nodes[0].id
    parent_node: dict[str, str | None] = {root: None}
    parent_pipe: dict[str, str | None] = {root: None}
    depth = {root: 0}
    tree_pipes: set[str] = set()
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for pipe_id, v in net.neighbors(u):
            if v not in parent_node:
                parent_node[v] = u
                parent_pipe[v] = pipe_id
                depth[v] = depth[u] + 1
                tree_pipes.add(pipe_id)
                queue.append(v)

    def climb(node: str, steps: int) -> tuple[str, list[tuple[str, int]]]:
        # walk up `steps` tree edges, traversal oriented child -> parent
        walk = []
        for _ in range(steps):
            pipe_id = parent_pipe[node]
            pipe = net.pipe(pipe_id)
            walk.append((pipe_id, 1 if pipe.node1 == node else -1))
            node = parent_node[node]
        return node, walk

    cycles = []
    for chord in net.sorted_pipes:
        if chord.id in tree_pipes:
            continue
        a, b = chord.node1, chord.node2
        ua, up_a = climb(a, max(0, depth[a] - depth[b]))
        ub, up_b = climb(b, max(0, depth[b] - depth[a]))
        while ua != ub:
            ua, seg_a = climb(ua, 1)
            ub, seg_b = climb(ub, 1)
            up_a.extend(seg_a)
            up_b.extend(seg_b)
        # a -> lca, then lca -> b (reversed climb from b), then chord b -> a
        down_b = [(pid, -sign) for pid, sign in reversed(up_b)]
        closing = [(chord.id, 1 if chord.node1 == b else -1)]
        cycles.append(up_a + down_b + closing)
    return cycles
