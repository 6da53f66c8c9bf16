import dataclasses

import numpy as np
import pytest

from wasnsim import scenario, topology
from wasnsim.scenario import GeometryError, ScenarioConfig


def small_config(**overrides):
    base = dict(K=4, M_q=2, Q=1, N_noise=2,
                latent_desired_powers=(1.0,), latent_noise_powers=(1.0, 1.0),
                seed=3)
    base.update(overrides)
    return ScenarioConfig(**base)


class TestGreensGain:
    def test_full_cycle_phase(self):
        # r = 1 m at f = c: one full cycle, purely real 1/(4 pi)
        g = scenario.greens_gain([0, 0, 0], [1, 0, 0], 343.0, 343.0)
        assert g.real == pytest.approx(1 / (4 * np.pi), rel=1e-12)
        assert abs(g.imag) < 1e-15

    def test_quarter_cycle_phase(self):
        r = 343.0 / (4 * 1000.0)
        g = scenario.greens_gain([0, 0, 0], [r, 0, 0], 1000.0, 343.0)
        assert abs(g.real) < 1e-15
        assert g.imag == pytest.approx(-1 / (4 * np.pi * r), rel=1e-12)

    def test_hand_evaluated_point(self):
        # frozen from an independent high-precision evaluation of the formula
        # at r = 2.37 m, f = 1000 Hz, c = 343 m/s
        g = scenario.greens_gain([0, 0, 0], [2.37, 0, 0], 1000.0, 343.0)
        assert g.real == pytest.approx(0.0283070673110102257, rel=1e-13)
        assert g.imag == pytest.approx(0.0180589132107675511, rel=1e-13)
        assert abs(g) == pytest.approx(0.0335769922134800286, rel=1e-13)

    def test_degenerate_geometry(self):
        with pytest.raises(GeometryError, match="degenerate geometry"):
            scenario.greens_gain([1, 2, 3], [1, 2, 3], 1000.0, 343.0)


class TestGenerateEnvironment:
    def test_paper_dimensions(self):
        cfg = ScenarioConfig(seed=0)
        env, sel = scenario.generate_environment(cfg)
        assert env.M == 30
        assert env.Psi.shape == (30, 1)
        assert env.Psi_noise.shape == (30, 3)
        assert len(sel.E_global) == 10

    def test_deterministic(self):
        cfg = ScenarioConfig(seed=11)
        env1, _ = scenario.generate_environment(cfg)
        env2, _ = scenario.generate_environment(cfg)
        assert np.array_equal(env1.node_positions, env2.node_positions)
        assert np.array_equal(env1.sensor_positions, env2.sensor_positions)
        assert np.array_equal(env1.Psi, env2.Psi)
        assert np.array_equal(env1.adjacency, env2.adjacency)
        assert env1.comm_radius == env2.comm_radius

    @pytest.mark.parametrize("seed", range(5))
    def test_min_source_node_distance(self, seed):
        cfg = ScenarioConfig(seed=seed)
        env, _ = scenario.generate_environment(cfg)
        sources = np.vstack([env.desired_source_positions,
                             env.noise_source_positions])
        # exhaustive pairwise scan
        for node in env.node_positions:
            for src in sources:
                assert np.linalg.norm(node - src) >= cfg.min_src_node_dist

    def test_sensors_inside_disc(self):
        cfg = ScenarioConfig(seed=4)
        env, _ = scenario.generate_environment(cfg)
        offsets = env.sensor_positions - env.node_positions[:, None, :]
        assert np.linalg.norm(offsets, axis=-1).max() <= cfg.sensor_disc_radius + 1e-12
        assert np.abs(offsets[..., 2]).max() == 0.0

    def test_adjacency_properties(self):
        cfg = ScenarioConfig(seed=5)
        env, _ = scenario.generate_environment(cfg)
        assert np.array_equal(env.adjacency, env.adjacency.T)
        assert not env.adjacency.diagonal().any()
        assert topology.is_connected(env.adjacency)

    def test_steering_magnitudes(self):
        cfg = ScenarioConfig(seed=6)
        env, _ = scenario.generate_environment(cfg)
        sensors = env.sensor_positions.reshape(env.M, 3)
        for j, src in enumerate(np.vstack([env.desired_source_positions,
                                           env.noise_source_positions])):
            col = (env.Psi[:, j] if j < cfg.Q
                   else env.Psi_noise[:, j - cfg.Q])
            r = np.linalg.norm(sensors - src, axis=1)
            assert np.allclose(np.abs(col), 1 / (4 * np.pi * r), rtol=1e-12)

    def test_impossible_constraints(self):
        cfg = small_config(min_src_node_dist=10.0)  # larger than the room
        with pytest.raises(GeometryError, match="cannot satisfy geometry"):
            scenario.generate_environment(cfg)

    def test_selection_structure(self):
        cfg = ScenarioConfig(seed=2)
        env, sel = scenario.generate_environment(cfg)
        for q in range(cfg.K):
            assert (sel.E_local[q].sum(axis=0) == 1).all()
            placed = sel.E_global[q][q * cfg.M_q:(q + 1) * cfg.M_q]
            assert np.array_equal(placed, sel.E_local[q])
            assert np.count_nonzero(sel.E_global[q]) == cfg.Q
            expected = sel.E_local[q].T @ env.Psi[q * cfg.M_q:(q + 1) * cfg.M_q]
            assert np.array_equal(sel.Psi_bar[q], expected)


class TestCentralizedScms:
    def test_zero_desired_powers(self):
        cfg = small_config(latent_desired_powers=(0.0,))
        env, _ = scenario.generate_environment(cfg)
        scms = scenario.build_centralized_scms(env, cfg)
        assert np.abs(scms.R_ss).max() == 0.0
        assert np.array_equal(scms.R_yy, scms.R_nn)

    def test_rank_one_eigenstructure(self):
        # no localized noise: spectrum must be {sigma^2 + p ||Psi||^2, sigma^2, ...}
        cfg = ScenarioConfig(K=3, M_q=2, Q=1, N_noise=0,
                             latent_desired_powers=(2.5,),
                             latent_noise_powers=(), self_noise_power=0.04,
                             seed=8)
        env, _ = scenario.generate_environment(cfg)
        scms = scenario.build_centralized_scms(env, cfg)
        eig = np.linalg.eigvalsh(scms.R_yy)
        expected_top = 0.04 + 2.5 * np.linalg.norm(env.Psi) ** 2
        assert eig[-1] == pytest.approx(expected_top, rel=1e-12)
        assert np.allclose(eig[:-1], 0.04, rtol=1e-12)

    def test_hermitian_and_additive(self):
        cfg = ScenarioConfig(seed=9)
        env, _ = scenario.generate_environment(cfg)
        scms = scenario.build_centralized_scms(env, cfg)
        for R in (scms.R_ss, scms.R_nn, scms.R_yy):
            scale = np.abs(R).max()
            assert np.abs(R - R.conj().T).max() <= 1e-12 * scale
        assert np.abs(scms.R_yy - (scms.R_ss + scms.R_nn)).max() == 0.0
        assert scms.node_dims == (3,) * 10

    def test_noise_floor_bound(self):
        cfg = ScenarioConfig(seed=10)
        env, _ = scenario.generate_environment(cfg)
        scms = scenario.build_centralized_scms(env, cfg)
        assert np.linalg.eigvalsh(scms.R_yy).min() >= cfg.self_noise_power - 1e-12

    def test_desired_rank_equals_q(self):
        for q_dim in (1, 2):
            cfg = ScenarioConfig(K=4, M_q=3, Q=q_dim, N_noise=2,
                                 latent_desired_powers=(1.0,) * q_dim,
                                 latent_noise_powers=(1.0, 1.0), seed=12)
            env, _ = scenario.generate_environment(cfg)
            scms = scenario.build_centralized_scms(env, cfg)
            eig = np.linalg.eigvalsh(scms.R_ss)
            rank = int((eig > 1e-10 * np.trace(scms.R_ss).real).sum())
            assert rank == q_dim


class TestSensorSnr:
    def _manual_scms(self, diag_s, diag_n):
        m = len(diag_s)
        return scenario.SCMSet(
            R_ss=np.diag(np.asarray(diag_s, dtype=complex)),
            R_nn=np.diag(np.asarray(diag_n, dtype=complex)),
            R_yy=np.diag(np.asarray(diag_s, dtype=complex) + np.asarray(diag_n)),
            R_ss_lat=np.eye(1),
            node_dims=(m,),
        )

    def test_equal_powers_zero_db(self):
        scms = self._manual_scms([2.0, 3.0], [2.0, 3.0])
        assert scenario.sensor_snr(scms, 0, 0) == pytest.approx(0.0, abs=1e-12)

    def test_ten_to_one_is_ten_db(self):
        scms = self._manual_scms([10.0], [1.0])
        assert scenario.sensor_snr(scms, 0, 0) == pytest.approx(10.0, rel=1e-12)

    def test_index_errors(self):
        scms = self._manual_scms([1.0, 1.0], [1.0, 1.0])
        with pytest.raises(IndexError):
            scenario.sensor_snr(scms, 1, 0)
        with pytest.raises(IndexError):
            scenario.sensor_snr(scms, 0, 5)

    @pytest.mark.parametrize("seed", range(10))
    def test_first_sensor_snr_plausible(self, seed):
        cfg = ScenarioConfig(seed=seed)
        env, _ = scenario.generate_environment(cfg)
        scms = scenario.build_centralized_scms(env, cfg)
        for node in range(cfg.K):
            snr = scenario.sensor_snr(scms, node, 0)
            assert -30.0 <= snr <= 15.0


class TestConfigValidation:
    def test_q_bounds(self):
        with pytest.raises(ValueError):
            small_config(Q=3)  # Q > M_q

    def test_power_lengths(self):
        with pytest.raises(ValueError):
            small_config(latent_desired_powers=(1.0, 1.0))

    def test_negative_power(self):
        with pytest.raises(ValueError):
            small_config(latent_noise_powers=(1.0, -1.0))

    def test_self_noise_strictly_positive(self):
        with pytest.raises(ValueError):
            small_config(self_noise_power=0.0)

    def test_replace_keeps_validation(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            dataclasses.replace(cfg, comm_radius_step=0.0)
