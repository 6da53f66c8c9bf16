import numpy as np
import pytest

from wasnsim import harness
from wasnsim.harness import ExperimentSpec, Row
from wasnsim.scenario import ScenarioConfig


def tiny_spec(**overrides):
    base = dict(
        scenario=ScenarioConfig(K=5, M_q=2, Q=1, N_noise=2,
                                latent_desired_powers=(1.0,),
                                latent_noise_powers=(1.0, 1.0)),
        algorithms=("danse", "tidanse", "tidanse+"),
        pruning=("mst", "mmut"),
        c_values=("tree", 1.0),
        iterations=8,
        n_environments=2,
        base_seed=1,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestSpecValidation:
    def test_defaults_valid(self):
        spec = ExperimentSpec()
        assert spec.scenario.K == 10
        assert spec.iterations == 200
        c = spec.resolved_c_values()
        assert c[0] == pytest.approx(-1 / 35)
        assert c[-1] == 1.0

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError, match="algorithm"):
            tiny_spec(algorithms=("danse", "gossip"))

    def test_unknown_pruning(self):
        with pytest.raises(ValueError, match="pruning"):
            tiny_spec(pruning=("mst", "best"))

    def test_c_out_of_range(self):
        with pytest.raises(ValueError, match="range"):
            tiny_spec(c_values=(1.5,))

    def test_duplicate_c_values(self):
        with pytest.raises(ValueError, match="duplicates"):
            tiny_spec(c_values=(0.5, 0.5))

    def test_small_k_rejected(self):
        with pytest.raises(ValueError, match="K >= 4"):
            tiny_spec(scenario=ScenarioConfig(K=3, M_q=2, Q=1, N_noise=1,
                                              latent_desired_powers=(1.0,),
                                              latent_noise_powers=(1.0,)))


class TestSubSeeds:
    def test_deterministic_and_stream_separated(self):
        a = harness._sub_seed(7, 0, 3)
        assert a == harness._sub_seed(7, 0, 3)
        assert a != harness._sub_seed(7, 1, 3)
        assert a != harness._sub_seed(7, 0, 4)
        assert a != harness._sub_seed(8, 0, 3)


class TestRunExperiment:
    def test_row_structure(self):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        assert not table.failures
        # grid: danse (1) + tidanse (|C|=2) + tidanse+ (2 prunings x 2 C) = 7
        cells = 7
        expected = spec.n_environments * cells * (spec.iterations + 1)
        assert len(table.rows) == expected
        assert len(table.aggregate_rows) == cells * (spec.iterations + 1)
        assert len(table.environments) == spec.n_environments
        # one row per cell per iteration
        keys = {(r.environment_id, r.algorithm, r.pruning, r.c_target,
                 r.iteration) for r in table.rows}
        assert len(keys) == len(table.rows)

    def test_zero_iterations_only_initial_rows(self):
        table = harness.run_experiment(tiny_spec(iterations=0))
        assert {r.iteration for r in table.rows} == {0}

    def test_deterministic(self):
        spec = tiny_spec()
        t1 = harness.run_experiment(spec)
        t2 = harness.run_experiment(spec)
        assert t1.rows == t2.rows
        assert t1.aggregate_rows == t2.aggregate_rows

    def test_parallel_equivalence(self):
        spec = tiny_spec()
        serial = harness.run_experiment(spec, jobs=1)
        parallel = harness.run_experiment(spec, jobs=2)
        assert serial.rows == parallel.rows
        assert serial.aggregate_rows == parallel.aggregate_rows

    def test_tidanse_rows_identical_across_c(self):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        c_values = spec.resolved_c_values()
        for env_id in range(spec.n_environments):
            per_c = []
            for c in c_values:
                vals = [r.mse_w for r in table.rows
                        if r.algorithm == "tidanse"
                        and r.environment_id == env_id
                        and r.c_target == pytest.approx(c)]
                per_c.append(vals)
            for other in per_c[1:]:
                assert other == per_c[0]

    def test_danse_runs_on_fully_connected_scene(self):
        table = harness.run_experiment(tiny_spec(algorithms=("danse",)))
        assert all(r.algorithm == "danse" and r.pruning == "none"
                   and r.c_target == 1.0 for r in table.rows)

    def test_c_achieved_within_quantum(self):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        k = spec.scenario.K
        for r in table.rows:
            if r.environment_id >= 0 and r.algorithm == "tidanse+":
                assert abs(r.c_achieved - r.c_target) <= 1 / (k * (k - 3)) + 1e-12

    def test_aggregate_matches_manual_geometric_mean(self):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        per_env = {}
        for r in table.rows:
            if r.algorithm == "danse":
                per_env.setdefault(r.environment_id, []).append(r.mse_w)
        stacked = np.vstack([per_env[m] for m in sorted(per_env)])
        manual = np.exp(np.mean(np.log(np.maximum(stacked, 1e-300)), axis=0))
        got = [r.mse_w for r in table.aggregate_rows if r.algorithm == "danse"]
        assert np.allclose(got, manual, rtol=1e-12)

    def test_transmit_cost_column(self):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        k = spec.scenario.K
        for r in table.rows:
            if r.algorithm == "danse":
                assert r.transmit_cost == k * (k - 1)
            else:
                assert r.transmit_cost == 2 * (k - 1)


class TestCsvRoundTrip:
    def test_header_only_for_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        harness.emit_csv([], path)
        text = path.read_text()
        assert text == ",".join(harness.CSV_HEADER) + "\n"

    def test_single_row_two_lines(self, tmp_path):
        path = tmp_path / "one.csv"
        row = Row(0, "danse", "none", 1.0, 1.0, 0, 0.123456789012345678, 90)
        harness.emit_csv([row], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == ",".join(harness.CSV_HEADER)

    def test_round_trip_identity(self, tmp_path):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        path = tmp_path / "results.csv"
        harness.emit_csv(table.rows, path)
        assert harness.read_csv(path) == table.rows

    def test_byte_identical_across_runs(self, tmp_path):
        spec = tiny_spec()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        harness.emit_csv(harness.run_experiment(spec).rows, p1)
        harness.emit_csv(harness.run_experiment(spec, jobs=2).rows, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            harness.read_csv(path)

    def test_missing_file_has_path_context(self, tmp_path):
        with pytest.raises(OSError, match="nope.csv"):
            harness.read_csv(tmp_path / "nope.csv")


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        import yaml
        spec = tiny_spec()
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(harness.spec_to_dict(spec)))
        loaded = harness.load_spec(path)
        assert loaded == spec

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("iterations: 5\nspeed: 11\n")
        with pytest.raises(harness.ConfigError, match="'speed'"):
            harness.load_spec(path)

    def test_unknown_scenario_key_named(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("scenario:\n  K: 5\n  walls: 3\n")
        with pytest.raises(harness.ConfigError, match="scenario.walls"):
            harness.load_spec(path)

    def test_wrong_type_reported(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("iterations: lots\n")
        with pytest.raises(harness.ConfigError, match="expects int"):
            harness.load_spec(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(harness.ConfigError, match="config not found"):
            harness.load_spec(tmp_path / "missing.yaml")

    def test_partial_config_uses_defaults(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("iterations: 3\nn_environments: 1\n")
        spec = harness.load_spec(path)
        assert spec.iterations == 3
        assert spec.scenario.K == 10

    def test_aggregates_from_rows(self, tmp_path):
        spec = tiny_spec()
        table = harness.run_experiment(spec)
        path = tmp_path / "agg.csv"
        harness.emit_csv(table.aggregate_rows, path)
        rebuilt = harness.aggregates_from_rows(harness.read_csv(path))
        assert len(rebuilt) == len(table.aggregates)
        by_key = {(a.algorithm, a.pruning, round(a.c_target, 12)): a
                  for a in table.aggregates}
        for agg in rebuilt:
            ref = by_key[(agg.algorithm, agg.pruning, round(agg.c_target, 12))]
            assert np.allclose(agg.values, ref.values, rtol=1e-15)
