"""Centralized and distributed node-specific LMMSE estimators.

All algorithms run in the covariance domain: fused signals and in-network
sums never exist as waveforms. Instead each updating node's observation
vector is represented by a tall selection/fusion matrix C such that the
observation equals C^H y for the centralized sensor vector y, and every
fused covariance is C^H R C. Network-wide filters (the M x Q filter each
node's distributed estimate is equivalent to) are assembled from the node
states for comparison against the centralized solution.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .scenario import Environment, SCMSet, SelectionSet
from .topology import Tree, prune_mmut, prune_mst

COND_LIMIT = 1e12

MST = "mst"
MMUT = "mmut"


class Algorithm(str, Enum):
    CENTRALIZED = "centralized"
    DANSE = "danse"
    TIDANSE = "tidanse"
    TIDANSE_PLUS = "tidanse+"


class IllConditionedError(RuntimeError):
    """A covariance or transform matrix is too ill conditioned to invert."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class SingularFusionError(RuntimeError):
    """A fusion-rule inversion failed; the run cannot continue."""


@dataclass
class NodeState:
    """Per-node parameters of one algorithm run; unused fields stay None."""
    P: np.ndarray                              # (M_q, Q) fusion matrix
    W_local: np.ndarray                        # (M_q, Q) local filter block
    T: np.ndarray | None = None                # (Q, Q) cumulative transform
    G_danse: dict[int, np.ndarray] | None = None
    G_tidanse: np.ndarray | None = None


@dataclass
class AlgState:
    """Mutable state of one sequential-updating run."""
    algorithm: Algorithm
    nodes: list[NodeState]
    iteration: int = 0
    updating_node: int = 0

    @property
    def K(self) -> int:
        return len(self.nodes)

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(n.P.shape[0] for n in self.nodes)

    @property
    def Q(self) -> int:
        return self.nodes[0].P.shape[1]


@dataclass(frozen=True)
class ObservationMap:
    """Matrix C mapping the centralized sensor vector onto one node's
    observation vector (observation = C^H y), with its column-block layout."""
    C: np.ndarray
    dim: int
    layout: tuple[tuple, ...]


@dataclass(frozen=True)
class FilterSet:
    """One M x Q network-wide filter per node."""
    filters: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.filters)

    def __getitem__(self, q: int) -> np.ndarray:
        return self.filters[q]


def _checked_cond(A: np.ndarray, what: str) -> float:
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"{what} is ill conditioned", cond)
    return cond


def _solve_hpd(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    """Solve A X = B for Hermitian positive definite A with a condition guard.

    One step of iterative refinement keeps the normal-equation residual at
    the rounding level even for moderately conditioned systems.
    """
    A = 0.5 * (A + A.conj().T)
    _checked_cond(A, what)
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise IllConditionedError(f"{what} is not positive definite", np.inf) from err
    X = sla.cho_solve(factor, B, check_finite=False)
    X += sla.cho_solve(factor, B - A @ X, check_finite=False)
    return X


def _inv_q(T: np.ndarray, what: str) -> np.ndarray:
    """Guarded inverse for the small Q x Q transform/fusion matrices."""
    cond = float(np.linalg.cond(T))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularFusionError(f"{what} is singular (condition {cond:.3e})")
    return np.linalg.inv(T)


def _offsets(dims: tuple[int, ...]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(dims)])


def centralized_mwf(scms: SCMSet, E_q: np.ndarray) -> np.ndarray:
    """Centralized multichannel Wiener filter R_yy^{-1} R_ss E_q."""
    if E_q.shape[0] != scms.M:
        raise ValueError("selection matrix height must match the SCM size")
    return _solve_hpd(scms.R_yy, scms.R_ss @ E_q, "centralized sensor covariance")


def centralized_filters(scms: SCMSet, selection: SelectionSet) -> FilterSet:
    """Centralized filters for every node's own target."""
    return FilterSet(tuple(centralized_mwf(scms, e) for e in selection.E_global))


def node_transform(psi_bar_q: np.ndarray, psi_bar_qp: np.ndarray) -> np.ndarray:
    """Q x Q transform mapping node q''s centralized filter onto node q's.

    With the per-node target blocks Psi_bar, the centralized solutions of any
    two nodes differ only by (Psi_bar_q'^H)^{-1} Psi_bar_q^H.
    """
    cond = float(np.linalg.cond(psi_bar_qp))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError("target steering block is singular", cond)
    return np.linalg.solve(psi_bar_qp.conj().T, psi_bar_q.conj().T)


def init_state(env: Environment, algorithm: Algorithm, seed: int) -> AlgState:
    """Random starting state shared by all distributed algorithms.

    Local filter blocks get i.i.d. unit-variance complex Gaussian entries;
    the fusion matrices start equal to them and every transform/coefficient
    block starts at identity. Identical seeds therefore give every algorithm
    the same starting point, including bit-identical initial network-wide
    filter sets, and the fusion/transform consistency P_q = W_qq T_q already
    holds at iteration 0.
    """
    algorithm = Algorithm(algorithm)
    if algorithm == Algorithm.CENTRALIZED:
        raise ValueError("the centralized solution has no iterative state")
    rng = np.random.default_rng(seed)
    m_q = env.sensor_positions.shape[1]
    q_dim = env.Psi.shape[1]
    eye = np.eye(q_dim, dtype=complex)
    nodes = []
    for q in range(env.K):
        w = (rng.standard_normal((m_q, q_dim))
             + 1j * rng.standard_normal((m_q, q_dim))) / np.sqrt(2.0)
        node = NodeState(P=w.copy(), W_local=w)
        if algorithm == Algorithm.TIDANSE_PLUS:
            node.T = eye.copy()
        elif algorithm == Algorithm.DANSE:
            node.G_danse = {m: eye.copy() for m in range(env.K) if m != q}
        elif algorithm == Algorithm.TIDANSE:
            node.G_tidanse = eye.copy()
        nodes.append(node)
    return AlgState(algorithm=algorithm, nodes=nodes)


def _self_block(dims: tuple[int, ...], k: int) -> np.ndarray:
    total = sum(dims)
    off = _offsets(dims)
    A = np.zeros((total, dims[k]))
    A[off[k]:off[k + 1], :] = np.eye(dims[k])
    return A


def observation_map_danse(state: AlgState, k: int) -> ObservationMap:
    """Observation map at node k with every other node's fused signal as a
    separate column block (fully connected exchange)."""
    dims = state.node_dims
    off = _offsets(dims)
    q_dim = state.Q
    others = [m for m in range(state.K) if m != k]
    dim = dims[k] + q_dim * len(others)
    C = np.zeros((sum(dims), dim), dtype=complex)
    C[:, :dims[k]] = _self_block(dims, k)
    layout: list[tuple] = [("self", k)]
    for j, m in enumerate(others):
        col = dims[k] + j * q_dim
        C[off[m]:off[m + 1], col:col + q_dim] = state.nodes[m].P
        layout.append(("node", m))
    return ObservationMap(C=C, dim=dim, layout=tuple(layout))


def observation_map_tidanse(state: AlgState, k: int) -> ObservationMap:
    """Observation map at node k with a single column block carrying the
    global sum of all other nodes' fused signals (no sum block when the
    WASN has a single node)."""
    dims = state.node_dims
    off = _offsets(dims)
    q_dim = state.Q
    others = tuple(m for m in range(state.K) if m != k)
    if not others:
        return ObservationMap(C=_self_block(dims, k).astype(complex),
                              dim=dims[k], layout=(("self", k),))
    dim = dims[k] + q_dim
    C = np.zeros((sum(dims), dim), dtype=complex)
    C[:, :dims[k]] = _self_block(dims, k)
    for m in others:
        C[off[m]:off[m + 1], dims[k]:] = state.nodes[m].P
    return ObservationMap(C=C, dim=dim, layout=(("self", k), ("sum", others)))


def observation_map_tidansep(state: AlgState, tree: Tree, k: int) -> ObservationMap:
    """Observation map at the root with one column block per tree branch.

    Branch block l carries the partial in-network sum flowing from branch
    head l into the root: the fusion matrices of l and every node upstream
    of l, placed at their own sensor rows.
    """
    if tree.root != k:
        raise ValueError(f"tree is rooted at {tree.root}, expected {k}")
    dims = state.node_dims
    off = _offsets(dims)
    q_dim = state.Q
    heads = tree.upstream[k]
    dim = dims[k] + q_dim * len(heads)
    C = np.zeros((sum(dims), dim), dtype=complex)
    C[:, :dims[k]] = _self_block(dims, k)
    layout: list[tuple] = [("self", k)]
    for j, head in enumerate(heads):
        members = (head, *tree.upstream_closure[head])
        col = dims[k] + j * q_dim
        for q in members:
            C[off[q]:off[q + 1], col:col + q_dim] = state.nodes[q].P
        layout.append(("branch", head, members))
    return ObservationMap(C=C, dim=dim, layout=tuple(layout))


def e_tilde(selection: SelectionSet, k: int, dim: int) -> np.ndarray:
    """Selection matrix of the fused problem: node k's target channels on
    top, zeros over the fused column blocks."""
    e_local = selection.E_local[k]
    out = np.zeros((dim, e_local.shape[1]))
    out[:e_local.shape[0], :] = e_local
    return out


def local_mwf(obs_map: ObservationMap, scms: SCMSet, E_tilde: np.ndarray) -> np.ndarray:
    """LMMSE solve in the fused domain: (C^H R_yy C)^{-1} (C^H R_ss C) E."""
    C = obs_map.C
    R_yy_f = C.conj().T @ scms.R_yy @ C
    R_ss_f = C.conj().T @ scms.R_ss @ C
    return _solve_hpd(R_yy_f, R_ss_f @ E_tilde, "fused observation covariance")


def _split_solution(W_tilde: np.ndarray, m_k: int, q_dim: int) -> tuple[np.ndarray, list[np.ndarray]]:
    w_local = W_tilde[:m_k, :]
    blocks = [W_tilde[m_k + j * q_dim: m_k + (j + 1) * q_dim, :]
              for j in range((W_tilde.shape[0] - m_k) // q_dim)]
    return w_local, blocks


def _advance(state: AlgState, k: int) -> AlgState:
    state.iteration += 1
    state.updating_node = (k + 1) % state.K
    return state


def danse_iteration(state: AlgState, k: int, scms: SCMSet,
                    selection: SelectionSet) -> AlgState:
    """One sequential update at node k with per-node fused signals."""
    if state.algorithm != Algorithm.DANSE:
        raise ValueError("state does not belong to a DANSE run")
    obs = observation_map_danse(state, k)
    W_tilde = local_mwf(obs, scms, e_tilde(selection, k, obs.dim))
    node = state.nodes[k]
    w_local, blocks = _split_solution(W_tilde, node.P.shape[0], state.Q)
    node.W_local = w_local
    node.G_danse = {m: blocks[j]
                    for j, (_, m) in enumerate(obs.layout[1:])}
    node.P = w_local.copy()
    return _advance(state, k)


def tidanse_iteration(state: AlgState, k: int, scms: SCMSet,
                      selection: SelectionSet) -> AlgState:
    """One sequential update at node k from the global in-network sum."""
    if state.algorithm != Algorithm.TIDANSE:
        raise ValueError("state does not belong to a TI-DANSE run")
    obs = observation_map_tidanse(state, k)
    W_tilde = local_mwf(obs, scms, e_tilde(selection, k, obs.dim))
    node = state.nodes[k]
    w_local, blocks = _split_solution(W_tilde, node.P.shape[0], state.Q)
    if state.K == 1:
        node.W_local = w_local
        node.P = w_local.copy()
        return _advance(state, k)
    g_k = blocks[0]
    try:
        g_inv = _inv_q(g_k, "TI-DANSE fusion matrix")
    except SingularFusionError as err:
        raise SingularFusionError(
            f"TI-DANSE fusion singular at iteration {state.iteration}"
        ) from err
    node.W_local = w_local
    node.G_tidanse = g_k
    node.P = w_local @ g_inv
    return _advance(state, k)


def tidansep_iteration(
    state: AlgState,
    adjacency: np.ndarray,
    node_positions: np.ndarray,
    k: int,
    pruning_strategy: str,
    scms: SCMSet,
    selection: SelectionSet,
) -> AlgState:
    """One root update: prune to a tree at k, solve over the per-branch
    partial sums, then re-orient every node's transform and fusion matrix."""
    if state.algorithm != Algorithm.TIDANSE_PLUS:
        raise ValueError("state does not belong to a TI-DANSE+ run")
    if pruning_strategy == MMUT:
        tree = prune_mmut(adjacency, node_positions, k)
    elif pruning_strategy == MST:
        tree = prune_mst(adjacency, node_positions, k)
    else:
        raise ValueError(f"unknown pruning strategy {pruning_strategy!r}")
    obs = observation_map_tidansep(state, tree, k)
    W_tilde = local_mwf(obs, scms, e_tilde(selection, k, obs.dim))
    node = state.nodes[k]
    w_local, blocks = _split_solution(W_tilde, node.P.shape[0], state.Q)
    g_by_head = {head: blocks[j] for j, head in enumerate(tree.upstream[k])}
    node.W_local = w_local
    node.T = np.eye(state.Q, dtype=complex)
    node.P = w_local.copy()
    for q in range(state.K):
        if q == k:
            continue
        other = state.nodes[q]
        other.T = other.T @ g_by_head[tree.branch_of[q]]
        other.P = other.W_local @ other.T
    return _advance(state, k)


def network_wide_filter(state: AlgState, q: int, selection: SelectionSet) -> np.ndarray:
    """The M x Q centralized-equivalent filter behind node q's estimate."""
    dims = state.node_dims
    off = _offsets(dims)
    W = np.zeros((sum(dims), state.Q), dtype=complex)
    node = state.nodes[q]
    if state.algorithm == Algorithm.TIDANSE_PLUS:
        t_inv = _inv_q(node.T, f"transform of node {q}")
    for m in range(state.K):
        rows = slice(off[m], off[m + 1])
        if m == q:
            W[rows, :] = node.W_local
        elif state.algorithm == Algorithm.DANSE:
            W[rows, :] = state.nodes[m].P @ node.G_danse[m]
        elif state.algorithm == Algorithm.TIDANSE:
            W[rows, :] = state.nodes[m].P @ node.G_tidanse
        elif state.algorithm == Algorithm.TIDANSE_PLUS:
            W[rows, :] = state.nodes[m].P @ t_inv
        else:
            raise ValueError(f"no network-wide filter for {state.algorithm}")
    return W


def network_wide_filters(state: AlgState, selection: SelectionSet) -> FilterSet:
    """Network-wide filters of every node in the current state."""
    return FilterSet(tuple(network_wide_filter(state, q, selection)
                           for q in range(state.K)))


def transmit_cost(algorithm: Algorithm, topology_obj, K: int, Q: int) -> int:
    """Complex scalars exchanged per sample per iteration.

    Fully connected exchange broadcasts each node's Q channels to all K-1
    peers; the tree-based algorithms pay one Q-channel hop per tree edge for
    the leaf-to-root sums plus the same again for the downstream propagation
    of the root estimate.
    """
    algorithm = Algorithm(algorithm)
    if K <= 1:
        return 0
    if isinstance(topology_obj, Tree) and len(topology_obj.edge_list) != K - 1:
        raise ValueError("tree must have exactly K - 1 edges")
    if algorithm == Algorithm.DANSE:
        return K * (K - 1) * Q
    if algorithm in (Algorithm.TIDANSE, Algorithm.TIDANSE_PLUS):
        return 2 * (K - 1) * Q
    raise ValueError(f"no transmit cost defined for {algorithm}")


def transmit_side_cost(algorithm: Algorithm, K: int, Q: int) -> int:
    """Per-iteration side data: the Q x Q coefficient blocks propagated down
    the branches after a root update (zero for the other algorithms)."""
    algorithm = Algorithm(algorithm)
    if algorithm == Algorithm.TIDANSE_PLUS and K > 1:
        return (K - 1) * Q * Q
    return 0
