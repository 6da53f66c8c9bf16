"""Independent reference implementations used as test oracles only."""
import itertools

import numpy as np


def gauss_solve(A, B):
    """Plain Gaussian elimination with partial pivoting (complex)."""
    A = np.array(A, dtype=complex)
    B = np.array(B, dtype=complex)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    M = np.hstack([A, B])
    for col in range(n):
        pivot = col + np.argmax(np.abs(M[col:, col]))
        if abs(M[pivot, col]) == 0:
            raise np.linalg.LinAlgError("singular matrix")
        if pivot != col:
            M[[col, pivot]] = M[[pivot, col]]
        for row in range(col + 1, n):
            factor = M[row, col] / M[col, col]
            M[row, col:] -= factor * M[col, col:]
    X = np.zeros((n, B.shape[1]), dtype=complex)
    for row in range(n - 1, -1, -1):
        X[row] = (M[row, n:] - M[row, row + 1:n] @ X[row + 1:]) / M[row, row]
    return X


def spanning_tree_min_weight(adj, positions):
    """Minimum total weight over all spanning trees by exhaustive enumeration."""
    k = adj.shape[0]
    edges = [(int(q), int(m)) for q, m in zip(*np.nonzero(np.triu(adj)))]
    weights = {e: float(np.linalg.norm(positions[e[0]] - positions[e[1]]))
               for e in edges}
    best = np.inf
    for combo in itertools.combinations(edges, k - 1):
        parent = list(range(k))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for a, b in combo:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[rb] = ra
        if ok:
            best = min(best, sum(weights[e] for e in combo))
    return best


def random_connected_adjacency(k, rng, p=0.5):
    """Random symmetric adjacency, resampled until connected."""
    while True:
        adj = np.zeros((k, k), dtype=bool)
        iu = np.triu_indices(k, 1)
        mask = rng.random(len(iu[0])) < p
        adj[iu[0][mask], iu[1][mask]] = True
        adj |= adj.T
        seen = {0}
        stack = [0]
        while stack:
            q = stack.pop()
            for m in np.flatnonzero(adj[q]):
                if m not in seen:
                    seen.add(int(m))
                    stack.append(int(m))
        if len(seen) == k:
            return adj
