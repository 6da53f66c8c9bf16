"""WASN graph tools: radius-based adjacency, connectivity metric, tree pruning.

Adjacency matrices are plain boolean numpy arrays of shape (K, K), symmetric
with a zero diagonal. Trees are stored root-oriented: "upstream" points away
from the root, matching the leaf-to-root summation order of the in-network
fusion flow.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tree:
    """Rooted spanning tree of a WASN.

    parent maps each non-root node to its downstream neighbor; upstream maps
    each node to its children (sorted tuples), upstream_closure to all of its
    descendants, and branch_of maps each non-root node to the root neighbor
    heading its branch.
    """
    root: int
    edge_list: tuple[tuple[int, int], ...]  # undirected, (min, max) per edge
    parent: dict[int, int]
    upstream: dict[int, tuple[int, ...]]
    upstream_closure: dict[int, tuple[int, ...]]
    branch_of: dict[int, int]

    @property
    def n_nodes(self) -> int:
        return len(self.upstream)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def build_adjacency(node_positions: np.ndarray, comm_radius: float) -> np.ndarray:
    """Link every node pair with 0 < distance <= comm_radius."""
    pos = np.asarray(node_positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    adj = (dist > 0) & (dist <= comm_radius)
    np.fill_diagonal(adj, False)
    return adj


def is_connected(adj: np.ndarray) -> bool:
    """Breadth-first reachability check from node 0."""
    k = adj.shape[0]
    if k <= 1:
        return True
    seen = np.zeros(k, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        q = queue.popleft()
        for m in np.flatnonzero(adj[q]):
            if not seen[m]:
                seen[m] = True
                queue.append(m)
    return bool(seen.all())


def ensure_connected(
    node_positions: np.ndarray,
    radius_init: float,
    radius_step: float,
) -> tuple[float, np.ndarray]:
    """Grow the communication radius in fixed steps until the WASN is connected.

    Returns the first radius radius_init + n * radius_step (minimal n >= 0)
    whose adjacency is connected, together with that adjacency.
    """
    if radius_step <= 0:
        raise ValueError("radius_step must be positive")
    radius = float(radius_init)
    while True:
        adj = build_adjacency(node_positions, radius)
        if is_connected(adj):
            return radius, adj
        radius += radius_step


def connectivity(adj: np.ndarray) -> float:
    """Normalized edge-density metric; 1 for a fully connected WASN."""
    k = adj.shape[0]
    if k <= 3:
        raise ValueError("connectivity metric undefined for K <= 3")
    ones_sum = int(adj.sum())  # equals twice the edge count
    return (ones_sum - 2 * k) / (k * (k - 3))


def min_connected_connectivity(k: int) -> float:
    """Connectivity value of any spanning tree (the connected minimum)."""
    if k <= 3:
        raise ValueError("connectivity metric undefined for K <= 3")
    return (2 * (k - 1) - 2 * k) / (k * (k - 3))


def _bridge_free_removals(adj: np.ndarray) -> list[tuple[int, int]]:
    """Present edges whose removal keeps the graph connected."""
    out = []
    for q, m in zip(*np.nonzero(np.triu(adj))):
        adj[q, m] = adj[m, q] = False
        if is_connected(adj):
            out.append((int(q), int(m)))
        adj[q, m] = adj[m, q] = True
    return out


def adjust_connectivity(
    adj: np.ndarray,
    target_c: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Randomly add or remove links until the connectivity metric hits target_c.

    Removals are restricted to non-bridge edges so the WASN stays connected.
    The result lands within half an edge quantum of the target, i.e.
    |connectivity(out) - target_c| <= 1 / (K (K - 3)).
    """
    k = adj.shape[0]
    if k <= 3:
        raise ValueError("connectivity metric undefined for K <= 3")
    if not is_connected(adj):
        raise ValueError("adjust_connectivity requires a connected input")
    c_min = min_connected_connectivity(k)
    if target_c < c_min - 1e-12 or target_c > 1 + 1e-12:
        raise ValueError(
            f"target connectivity {target_c} outside achievable range "
            f"[{c_min:.6f}, 1]"
        )
    out = adj.copy()
    target_sum = target_c * k * (k - 3) + 2 * k  # target value of 1^T Lambda 1
    while abs(int(out.sum()) - target_sum) > 1.0:
        if int(out.sum()) < target_sum:
            iu = np.triu_indices(k, 1)
            absent = [(int(q), int(m)) for q, m in zip(*iu) if not out[q, m]]
            q, m = absent[rng.integers(len(absent))]
            out[q, m] = out[m, q] = True
        else:
            removable = _bridge_free_removals(out)
            if not removable:
                raise ValueError("no removable non-bridge edge left")
            q, m = removable[rng.integers(len(removable))]
            out[q, m] = out[m, q] = False
    return out


def _sorted_edges(adj: np.ndarray, node_positions: np.ndarray) -> list[tuple[float, int, int]]:
    """Edges of adj sorted by Euclidean length, ties by (min, max) node index."""
    pos = np.asarray(node_positions, dtype=float)
    edges = []
    for q, m in zip(*np.nonzero(np.triu(adj))):
        w = float(np.linalg.norm(pos[q] - pos[m]))
        edges.append((w, int(q), int(m)))
    edges.sort()
    return edges


def tree_analysis(
    edge_list: tuple[tuple[int, int], ...] | list[tuple[int, int]],
    root: int,
    n_nodes: int,
) -> tuple[dict[int, tuple[int, ...]], dict[int, tuple[int, ...]], dict[int, int]]:
    """Orient a tree edge set toward root.

    Returns (upstream, upstream_closure, branch_of): children per node, all
    descendants per node, and for each non-root node the root child heading
    its branch. The closures satisfy closure[q] = upstream[q] plus the union
    of the children's closures.
    """
    neighbors: dict[int, list[int]] = {q: [] for q in range(n_nodes)}
    for a, b in edge_list:
        neighbors[a].append(b)
        neighbors[b].append(a)
    parent: dict[int, int] = {}
    order = [root]
    seen = {root}
    for q in order:
        for m in sorted(neighbors[q]):
            if m not in seen:
                seen.add(m)
                parent[m] = q
                order.append(m)
    if len(order) != n_nodes:
        raise ValueError("edge set does not span all nodes")
    upstream = {q: tuple(sorted(m for m in neighbors[q] if parent.get(m) == q))
                for q in range(n_nodes)}
    closure: dict[int, tuple[int, ...]] = {}
    for q in reversed(order):  # leaves first
        acc: list[int] = []
        for m in upstream[q]:
            acc.append(m)
            acc.extend(closure[m])
        closure[q] = tuple(sorted(acc))
    branch_of: dict[int, int] = {}
    for head in upstream[root]:
        branch_of[head] = head
        for q in closure[head]:
            branch_of[q] = head
    return upstream, closure, branch_of


def _make_tree(edges: list[tuple[int, int]], root: int, n_nodes: int) -> Tree:
    edge_list = tuple(sorted((min(a, b), max(a, b)) for a, b in edges))
    upstream, closure, branch_of = tree_analysis(edge_list, root, n_nodes)
    parent = {}
    for q, children in upstream.items():
        for m in children:
            parent[m] = q
    return Tree(
        root=root,
        edge_list=edge_list,
        parent=parent,
        upstream=upstream,
        upstream_closure=closure,
        branch_of=branch_of,
    )


def prune_mst(adj: np.ndarray, node_positions: np.ndarray, root: int) -> Tree:
    """Minimum spanning tree by Kruskal's greedy pass, oriented toward root.

    Edge weights are Euclidean node-to-node distances; ties resolve by the
    lexicographic (min, max) node pair so the result is deterministic.
    """
    k = adj.shape[0]
    if not is_connected(adj):
        raise ValueError("cannot prune a disconnected WASN")
    uf = _UnionFind(k)
    chosen: list[tuple[int, int]] = []
    for _, q, m in _sorted_edges(adj, node_positions):
        if uf.union(q, m):
            chosen.append((q, m))
            if len(chosen) == k - 1:
                break
    return _make_tree(chosen, root, k)


def prune_mmut(adj: np.ndarray, node_positions: np.ndarray, root: int) -> Tree:
    """Tree pruning that keeps every existing link of the updating node.

    All edges incident to root are fixed first (maximizing the root's branch
    count), then the remainder is filled greedily by distance as in Kruskal.
    In a fully connected WASN this yields a star with root as the hub.
    """
    k = adj.shape[0]
    if not is_connected(adj):
        raise ValueError("cannot prune a disconnected WASN")
    uf = _UnionFind(k)
    chosen: list[tuple[int, int]] = []
    for m in np.flatnonzero(adj[root]):
        uf.union(root, int(m))
        chosen.append((root, int(m)))
    for _, q, m in _sorted_edges(adj, node_positions):
        if len(chosen) == k - 1:
            break
        if uf.union(q, m):
            chosen.append((q, m))
    return _make_tree(chosen, root, k)
