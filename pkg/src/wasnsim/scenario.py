"""Random sensing environments and oracle spatial covariance matrices.

Nodes and point sources are dropped on the horizontal mid-plane of a cubic
room; the sensors of each node sit in a small horizontal disc around the node
position. Source-to-sensor transfer is the free-field Green's function at a
single frequency, so the steering matrices capture the inter-sensor delays
and amplitude decays of the scene. Covariance matrices are built directly
from the steering matrices and the latent source powers; no waveforms are
ever synthesized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import topology

_PLACEMENT_RETRIES = 1000
_PSI_BAR_COND_LIMIT = 1e12


class GeometryError(RuntimeError):
    """Raised when a sensing scene cannot satisfy its placement constraints."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one randomly generated sensing environment."""
    K: int = 10                      # node count
    M_q: int = 3                     # sensors per node
    Q: int = 1                       # target dimension = desired source count
    N_noise: int = 3                 # localized noise sources
    room_edge: float = 5.0           # cube edge [m]
    min_src_node_dist: float = 0.5   # [m]
    sensor_disc_radius: float = 0.1  # [m]
    comm_radius_init: float = 1.5    # [m]
    comm_radius_step: float = 0.1    # [m]
    frequency: float = 1000.0        # [Hz]
    speed_of_sound: float = 343.0    # [m/s]
    latent_desired_powers: tuple[float, ...] = (1.0,)
    latent_noise_powers: tuple[float, ...] = (1.0, 1.0, 1.0)
    self_noise_power: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.M_q < 1:
            raise ValueError("K and M_q must be at least 1")
        if not 1 <= self.Q <= self.M_q:
            raise ValueError("Q must satisfy 1 <= Q <= M_q")
        if len(self.latent_desired_powers) != self.Q:
            raise ValueError("latent_desired_powers must have length Q")
        if len(self.latent_noise_powers) != self.N_noise:
            raise ValueError("latent_noise_powers must have length N_noise")
        if any(p < 0 for p in (*self.latent_desired_powers,
                               *self.latent_noise_powers)):
            raise ValueError("latent source powers must be non-negative")
        if self.self_noise_power <= 0:
            raise ValueError("self_noise_power must be positive")
        if self.comm_radius_step <= 0:
            raise ValueError("comm_radius_step must be positive")

    @property
    def M(self) -> int:
        return self.K * self.M_q


@dataclass(frozen=True)
class Environment:
    """One realized sensing scene with its steering matrices and WASN graph."""
    node_positions: np.ndarray            # (K, 3)
    sensor_positions: np.ndarray          # (K, M_q, 3)
    desired_source_positions: np.ndarray  # (Q, 3)
    noise_source_positions: np.ndarray    # (N_noise, 3)
    Psi: np.ndarray                       # (M, Q) complex
    Psi_noise: np.ndarray                 # (M, N_noise) complex
    adjacency: np.ndarray                 # (K, K) bool
    comm_radius: float

    @property
    def K(self) -> int:
        return self.node_positions.shape[0]

    @property
    def M(self) -> int:
        return self.Psi.shape[0]

    @property
    def node_dims(self) -> tuple[int, ...]:
        m_q = self.sensor_positions.shape[1]
        return (m_q,) * self.K


@dataclass(frozen=True)
class SelectionSet:
    """Per-node selection machinery extracting the node's target channels."""
    E_local: tuple[np.ndarray, ...]   # (M_q, Q) 0/1 each
    E_global: tuple[np.ndarray, ...]  # (M, Q) 0/1 each
    Psi_bar: tuple[np.ndarray, ...]   # (Q, Q) complex each


@dataclass(frozen=True)
class SCMSet:
    """Centralized spatial covariance matrices of one environment."""
    R_ss: np.ndarray      # (M, M) Hermitian, PSD, rank <= Q
    R_nn: np.ndarray      # (M, M) Hermitian, PD (self-noise floor)
    R_yy: np.ndarray      # (M, M) = R_ss + R_nn
    R_ss_lat: np.ndarray  # (Q, Q) real diagonal latent desired powers
    node_dims: tuple[int, ...] = field(default=())

    @property
    def M(self) -> int:
        return self.R_yy.shape[0]


def greens_gain(
    source_pos: np.ndarray,
    sensor_pos: np.ndarray,
    frequency: float,
    speed_of_sound: float,
) -> complex:
    """3-D free-field Green's function between one source and one sensor.

    exp(-j 2 pi f r / c) / (4 pi r) with r the Euclidean distance; magnitude
    1 / (4 pi r), phase -2 pi f r / c.
    """
    r = float(np.linalg.norm(np.asarray(source_pos, float) - np.asarray(sensor_pos, float)))
    if r <= 0.0:
        raise GeometryError("degenerate geometry: coincident source and sensor")
    return complex(np.exp(-1j * 2.0 * np.pi * frequency * r / speed_of_sound) / (4.0 * np.pi * r))


def _steering_matrix(
    source_positions: np.ndarray,
    sensor_positions_flat: np.ndarray,
    frequency: float,
    speed_of_sound: float,
) -> np.ndarray:
    n_sensors = len(sensor_positions_flat)
    if len(source_positions) == 0:
        return np.zeros((n_sensors, 0), dtype=complex)
    cols = []
    for src in source_positions:
        cols.append([greens_gain(src, sen, frequency, speed_of_sound)
                     for sen in sensor_positions_flat])
    return np.array(cols, dtype=complex).T  # (M, n_sources)


def _draw_positions(cfg: ScenarioConfig, rng: np.random.Generator):
    """One random draw of all scene positions on the z = room_edge/2 plane."""
    z = cfg.room_edge / 2.0
    def on_plane(n):
        xy = rng.uniform(0.0, cfg.room_edge, size=(n, 2))
        return np.column_stack([xy, np.full(n, z)])
    nodes = on_plane(cfg.K)
    # uniform draw in the sensor disc (area-uniform radius)
    radii = cfg.sensor_disc_radius * np.sqrt(rng.uniform(size=(cfg.K, cfg.M_q)))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.K, cfg.M_q))
    offsets = np.stack(
        [radii * np.cos(angles), radii * np.sin(angles), np.zeros_like(radii)],
        axis=-1,
    )
    sensors = nodes[:, None, :] + offsets
    desired = on_plane(cfg.Q)
    noise = on_plane(cfg.N_noise)
    return nodes, sensors, desired, noise


def _selection_set(cfg: ScenarioConfig, Psi: np.ndarray) -> SelectionSet:
    """Selection matrices picking the first Q sensors of each node."""
    e_local, e_global, psi_bar = [], [], []
    for q in range(cfg.K):
        ekk = np.zeros((cfg.M_q, cfg.Q))
        ekk[:cfg.Q, :] = np.eye(cfg.Q)
        eg = np.zeros((cfg.M, cfg.Q))
        eg[q * cfg.M_q:(q + 1) * cfg.M_q, :] = ekk
        psi_q = Psi[q * cfg.M_q:(q + 1) * cfg.M_q, :]
        e_local.append(ekk)
        e_global.append(eg)
        psi_bar.append(ekk.T @ psi_q)
    return SelectionSet(tuple(e_local), tuple(e_global), tuple(psi_bar))


def generate_environment(cfg: ScenarioConfig) -> tuple[Environment, SelectionSet]:
    """Generate a random sensing environment and its selection set.

    Positions are redrawn (up to a bounded retry count) until every source
    sits at least min_src_node_dist from every node and every per-node Q x Q
    steering block is well conditioned. The communication radius then grows
    from comm_radius_init in comm_radius_step increments until the WASN is
    connected. Deterministic for a given config (including its seed).
    """
    rng = np.random.default_rng(cfg.seed)
    for _ in range(_PLACEMENT_RETRIES):
        nodes, sensors, desired, noise = _draw_positions(cfg, rng)
        sources = np.vstack([desired, noise])
        dists = np.linalg.norm(nodes[:, None, :] - sources[None, :, :], axis=-1)
        if dists.min() < cfg.min_src_node_dist:
            continue
        flat_sensors = sensors.reshape(cfg.M, 3)
        Psi = _steering_matrix(desired, flat_sensors, cfg.frequency, cfg.speed_of_sound)
        Psi_noise = _steering_matrix(noise, flat_sensors, cfg.frequency, cfg.speed_of_sound)
        selection = _selection_set(cfg, Psi)
        if any(np.linalg.cond(pb) > _PSI_BAR_COND_LIMIT for pb in selection.Psi_bar):
            continue
        radius, adjacency = topology.ensure_connected(
            nodes, cfg.comm_radius_init, cfg.comm_radius_step
        )
        env = Environment(
            node_positions=nodes,
            sensor_positions=sensors,
            desired_source_positions=desired,
            noise_source_positions=noise,
            Psi=Psi,
            Psi_noise=Psi_noise,
            adjacency=adjacency,
            comm_radius=radius,
        )
        return env, selection
    raise GeometryError(
        f"cannot satisfy geometry constraints after {_PLACEMENT_RETRIES} retries"
    )


def build_centralized_scms(env: Environment, cfg: ScenarioConfig) -> SCMSet:
    """Oracle covariance matrices from the steering matrices and latent powers.

    R_ss = Psi diag(desired powers) Psi^H, R_nn adds the localized noise
    sources plus an uncorrelated self-noise floor, and R_yy is their sum
    (desired and noise components are uncorrelated by construction).
    """
    p_des = np.asarray(cfg.latent_desired_powers, dtype=float)
    p_noi = np.asarray(cfg.latent_noise_powers, dtype=float)
    R_ss_lat = np.diag(p_des)
    R_ss = env.Psi @ R_ss_lat @ env.Psi.conj().T
    R_nn = (env.Psi_noise @ np.diag(p_noi) @ env.Psi_noise.conj().T
            + cfg.self_noise_power * np.eye(env.M))
    # exact Hermitian symmetry, so R_yy = R_ss + R_nn holds bit-for-bit
    R_ss = 0.5 * (R_ss + R_ss.conj().T)
    R_nn = 0.5 * (R_nn + R_nn.conj().T)
    return SCMSet(
        R_ss=R_ss,
        R_nn=R_nn,
        R_yy=R_ss + R_nn,
        R_ss_lat=R_ss_lat,
        node_dims=env.node_dims,
    )


def sensor_snr(scms: SCMSet, node: int, sensor: int) -> float:
    """SNR in dB at one sensor: desired vs. noise diagonal power ratio."""
    dims = scms.node_dims
    if not 0 <= node < len(dims):
        raise IndexError(f"node index {node} out of range")
    if not 0 <= sensor < dims[node]:
        raise IndexError(f"sensor index {sensor} out of range for node {node}")
    m = sum(dims[:node]) + sensor
    p_s = scms.R_ss[m, m].real
    p_n = scms.R_nn[m, m].real
    if p_n <= 0:
        raise ValueError("zero noise power on diagonal; SNR undefined")
    return 10.0 * float(np.log10(p_s / p_n))


def environment_to_dict(env: Environment, cfg: ScenarioConfig) -> dict:
    """Plain-data geometry summary for reproducibility archives."""
    return {
        "seed": cfg.seed,
        "comm_radius": float(env.comm_radius),
        "node_positions": env.node_positions.tolist(),
        "sensor_positions": env.sensor_positions.tolist(),
        "desired_source_positions": env.desired_source_positions.tolist(),
        "noise_source_positions": env.noise_source_positions.tolist(),
        "adjacency": env.adjacency.astype(int).tolist(),
    }
