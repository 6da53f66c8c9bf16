"""Monte-Carlo experiment runner: seeded environment grid, CSV emission.

One experiment sweeps (algorithm, pruning, connectivity) cells over a set of
independently generated sensing environments and records, per iteration, the
squared filter error of the node that just updated against its centralized
filter. Sub-seeds for geometry, initial states and connectivity adjustment
are derived from the base seed through fixed stream codes, so every grid
cell is reproducible in isolation and results do not depend on scheduling.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import estimation, metrics, scenario, topology
from .estimation import Algorithm, MMUT, MST

log = logging.getLogger("wasnsim")

CSV_HEADER = ("environment_id", "algorithm", "pruning", "c_target",
              "c_achieved", "iteration", "mse_w", "transmit_cost")

NO_PRUNING = "none"

# stream codes of the seed-splitting rule
_STREAM_GEOMETRY = 0
_STREAM_INIT = 1
_STREAM_CONNECTIVITY = 2

# geometric-mean floor for runs that converge to exactly zero error
GM_CLAMP = 1e-300


class Row(NamedTuple):
    environment_id: int
    algorithm: str
    pruning: str
    c_target: float
    c_achieved: float
    iteration: int
    mse_w: float
    transmit_cost: int


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one experiment grid."""
    scenario: scenario.ScenarioConfig = field(default_factory=scenario.ScenarioConfig)
    algorithms: tuple[str, ...] = ("danse", "tidanse", "tidanse+")
    pruning: tuple[str, ...] = (MST, MMUT)
    c_values: tuple[float | str, ...] = ("tree", 0.25, 0.5, 0.75, 1.0)
    iterations: int = 200
    n_environments: int = 10
    base_seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        known = {a.value for a in (Algorithm.DANSE, Algorithm.TIDANSE,
                                   Algorithm.TIDANSE_PLUS)}
        for a in self.algorithms:
            if a not in known:
                raise ValueError(f"unknown algorithm {a!r}; expected one of {sorted(known)}")
        for p in self.pruning:
            if p not in (MST, MMUT):
                raise ValueError(f"unknown pruning strategy {p!r}; expected 'mst' or 'mmut'")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.n_environments < 1:
            raise ValueError("n_environments must be at least 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        if self.scenario.K < 4:
            raise ValueError("the connectivity grid needs K >= 4")
        resolved = self.resolved_c_values()
        if len(set(resolved)) != len(resolved):
            raise ValueError("c_values contains duplicates after resolution")
        c_min = topology.min_connected_connectivity(self.scenario.K)
        for c in resolved:
            if c < c_min - 1e-12 or c > 1 + 1e-12:
                raise ValueError(
                    f"c value {c} outside achievable range [{c_min:.6f}, 1]")

    def resolved_c_values(self) -> tuple[float, ...]:
        """Connectivity grid with the 'tree' shorthand turned into the
        spanning-tree value for this node count."""
        c_tree = topology.min_connected_connectivity(self.scenario.K)
        out = []
        for c in self.c_values:
            if isinstance(c, str):
                if c != "tree":
                    raise ValueError(f"unknown c_values entry {c!r}")
                out.append(c_tree)
            else:
                out.append(float(c))
        return tuple(out)


@dataclass
class ResultTable:
    """Per-environment rows plus geometric-mean aggregate rows."""
    rows: list[Row]
    aggregate_rows: list[Row]
    aggregates: list[metrics.AggregateSeries]
    environments: list[dict]
    failures: list[str]


def _sub_seed(base_seed: int, stream: int, *key: int) -> int:
    """Documented splitting rule: one SeedSequence per (base, stream, key)."""
    ss = np.random.SeedSequence([base_seed, stream, *key])
    return int(ss.generate_state(1, np.uint64)[0])


def _updating_node_error(state: estimation.AlgState, k: int,
                         selection: scenario.SelectionSet,
                         centralized: estimation.FilterSet) -> float:
    w_k = estimation.network_wide_filter(state, k, selection)
    return float(np.linalg.norm(w_k - centralized[k], "fro") ** 2)


def _run_series(
    algorithm: Algorithm,
    env: scenario.Environment,
    scms: scenario.SCMSet,
    selection: scenario.SelectionSet,
    centralized: estimation.FilterSet,
    init_seed: int,
    iterations: int,
    adjacency: np.ndarray | None = None,
    pruning_strategy: str | None = None,
) -> np.ndarray:
    """Run one sequential-updating trajectory and record, per iteration, the
    squared filter error of the node that just updated (index 0 holds the
    first updater's error in the initial state)."""
    state = estimation.init_state(env, algorithm, init_seed)
    values = np.empty(iterations + 1)
    values[0] = _updating_node_error(state, state.updating_node, selection, centralized)
    for i in range(1, iterations + 1):
        k = state.updating_node
        if algorithm == Algorithm.DANSE:
            estimation.danse_iteration(state, k, scms, selection)
        elif algorithm == Algorithm.TIDANSE:
            estimation.tidanse_iteration(state, k, scms, selection)
        else:
            estimation.tidansep_iteration(
                state, adjacency, env.node_positions, k,
                pruning_strategy, scms, selection,
            )
        values[i] = _updating_node_error(state, k, selection, centralized)
    return values


def _environment_task(spec: ExperimentSpec, env_id: int):
    """All runs of one environment; returns (series list, summary, failures)."""
    failures: list[str] = []
    cfg = replace(spec.scenario, seed=_sub_seed(spec.base_seed, _STREAM_GEOMETRY, env_id))
    try:
        env, selection = scenario.generate_environment(cfg)
    except scenario.GeometryError as err:
        return [], {}, [f"env={env_id}: {err}"]
    scms = scenario.build_centralized_scms(env, cfg)
    centralized = estimation.centralized_filters(scms, selection)
    init_seed = _sub_seed(spec.base_seed, _STREAM_INIT, env_id)

    c_values = spec.resolved_c_values()
    adjusted: dict[int, tuple[np.ndarray, float]] = {}
    for ci, c in enumerate(c_values):
        rng = np.random.default_rng(
            _sub_seed(spec.base_seed, _STREAM_CONNECTIVITY, env_id, ci))
        adj = topology.adjust_connectivity(env.adjacency, c, rng)
        adjusted[ci] = (adj, topology.connectivity(adj))

    series: list[metrics.ConvergenceSeries] = []

    def record(values, algorithm, pruning, c_target, c_achieved):
        series.append(metrics.ConvergenceSeries(
            values=values, algorithm=algorithm.value, pruning=pruning,
            c_target=c_target, c_achieved=c_achieved,
            environment_id=env_id, seed=init_seed,
        ))

    if Algorithm.DANSE.value in spec.algorithms:
        # always evaluated on the fully connected version of the scene
        try:
            values = _run_series(Algorithm.DANSE, env, scms, selection,
                                 centralized, init_seed, spec.iterations)
            record(values, Algorithm.DANSE, NO_PRUNING, 1.0, 1.0)
        except (estimation.IllConditionedError, estimation.SingularFusionError) as err:
            failures.append(f"env={env_id} alg=danse: {err}")

    if Algorithm.TIDANSE.value in spec.algorithms:
        # one run per environment; the global-sum exchange ignores topology,
        # so the same series is reported at every connectivity level
        try:
            values = _run_series(Algorithm.TIDANSE, env, scms, selection,
                                 centralized, init_seed, spec.iterations)
            for ci, c in enumerate(c_values):
                record(values, Algorithm.TIDANSE, NO_PRUNING, c, adjusted[ci][1])
        except (estimation.IllConditionedError, estimation.SingularFusionError) as err:
            failures.append(f"env={env_id} alg=tidanse: {err}")

    if Algorithm.TIDANSE_PLUS.value in spec.algorithms:
        for pruning in spec.pruning:
            for ci, c in enumerate(c_values):
                adj, c_achieved = adjusted[ci]
                try:
                    values = _run_series(
                        Algorithm.TIDANSE_PLUS, env, scms, selection,
                        centralized, init_seed, spec.iterations,
                        adjacency=adj, pruning_strategy=pruning,
                    )
                    record(values, Algorithm.TIDANSE_PLUS, pruning, c, c_achieved)
                except (estimation.IllConditionedError,
                        estimation.SingularFusionError) as err:
                    failures.append(
                        f"env={env_id} alg=tidanse+ pruning={pruning} c={c:g}: {err}")

    summary = {"environment_id": env_id,
               **scenario.environment_to_dict(env, cfg)}
    return series, summary, failures


def _cost_for(algorithm: str, K: int, Q: int) -> int:
    return estimation.transmit_cost(Algorithm(algorithm), None, K, Q)


def _rows_from_series(series: Sequence[metrics.ConvergenceSeries],
                      K: int, Q: int) -> list[Row]:
    rows = []
    for s in series:
        cost = _cost_for(s.algorithm, K, Q)
        for i, v in enumerate(s.values):
            rows.append(Row(s.environment_id, s.algorithm, s.pruning,
                            s.c_target, s.c_achieved, i, float(v), cost))
    return rows


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ResultTable:
    """Run the full grid; deterministic for a given spec regardless of jobs.

    Failed grid cells are recorded in the table's failure list and skipped.
    """
    env_ids = list(range(spec.n_environments))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_environment_task,
                                    [spec] * len(env_ids), env_ids))
    else:
        results = [_environment_task(spec, m) for m in env_ids]

    all_series: list[metrics.ConvergenceSeries] = []
    environments: list[dict] = []
    failures: list[str] = []
    for series, summary, fails in results:
        all_series.extend(series)
        if summary:
            environments.append(summary)
        failures.extend(fails)
    for line in failures:
        log.warning("skipped grid cell: %s", line)

    K, Q = spec.scenario.K, spec.scenario.Q
    rows = sorted(_rows_from_series(all_series, K, Q))

    groups: dict[tuple, list[metrics.ConvergenceSeries]] = {}
    for s in all_series:
        groups.setdefault((s.algorithm, s.pruning, s.c_target), []).append(s)
    aggregates = []
    aggregate_rows = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda s: s.environment_id)
        agg = metrics.geometric_mean(members, clamp=GM_CLAMP)
        aggregates.append(agg)
        c_achieved = float(np.mean([s.c_achieved for s in members]))
        cost = _cost_for(agg.algorithm, K, Q)
        for i, v in enumerate(agg.values):
            aggregate_rows.append(Row(-1, agg.algorithm, agg.pruning,
                                      agg.c_target, c_achieved, i, float(v), cost))
    return ResultTable(rows=rows, aggregate_rows=aggregate_rows,
                       aggregates=aggregates, environments=environments,
                       failures=failures)


def emit_csv(rows: Sequence[Row], path) -> None:
    """Write rows under the fixed header; floats carry 17 significant digits
    so a parse round-trips bit-for-bit."""
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow([
                    r.environment_id, r.algorithm, r.pruning,
                    format(r.c_target, ".17g"), format(r.c_achieved, ".17g"),
                    r.iteration, format(r.mse_w, ".17g"), r.transmit_cost,
                ])
    except OSError as err:
        raise OSError(f"cannot write CSV to {path}: {err}") from err


def read_csv(path) -> list[Row]:
    """Parse a file previously written by emit_csv."""
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"unexpected CSV header in {path}: {header}")
            return [Row(int(r[0]), r[1], r[2], float(r[3]), float(r[4]),
                        int(r[5]), float(r[6]), int(r[7])) for r in reader]
    except OSError as err:
        raise OSError(f"cannot read CSV from {path}: {err}") from err


def aggregates_from_rows(rows: Sequence[Row]) -> list[metrics.AggregateSeries]:
    """Rebuild aggregate series from the rows of an aggregate CSV."""
    groups: dict[tuple, list[Row]] = {}
    for r in rows:
        if r.environment_id == -1:
            groups.setdefault((r.algorithm, r.pruning, r.c_target), []).append(r)
    out = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda r: r.iteration)
        out.append(metrics.AggregateSeries(
            values=np.array([r.mse_w for r in members]),
            n_environments=0,  # not recoverable from the CSV
            algorithm=key[0], pruning=key[1], c_target=key[2],
        ))
    return out


class ConfigError(ValueError):
    """A config file does not match the experiment schema."""


_SCALAR_TYPES = {
    "iterations": int,
    "n_environments": int,
    "base_seed": int,
    "output_dir": str,
}
_LIST_KEYS = ("algorithms", "pruning", "c_values")

_SCENARIO_TYPES = {
    "K": int, "M_q": int, "Q": int, "N_noise": int,
    "room_edge": (int, float), "min_src_node_dist": (int, float),
    "sensor_disc_radius": (int, float), "comm_radius_init": (int, float),
    "comm_radius_step": (int, float), "frequency": (int, float),
    "speed_of_sound": (int, float), "self_noise_power": (int, float),
    "latent_desired_powers": list, "latent_noise_powers": list,
    "seed": int,
}


def _check_type(section: str, key: str, value, expected) -> None:
    if isinstance(expected, tuple):
        ok = isinstance(value, expected) and not isinstance(value, bool)
        names = " or ".join(t.__name__ for t in expected)
    else:
        ok = isinstance(value, expected) and not isinstance(value, bool)
        names = expected.__name__
    if not ok:
        where = f"{section}.{key}" if section else key
        raise ConfigError(f"config key {where!r} expects {names}, "
                          f"got {type(value).__name__}")


def load_spec(path) -> ExperimentSpec:
    """Load an ExperimentSpec from a YAML file; unknown keys are errors."""
    import yaml

    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError as err:
        raise ConfigError(f"config not found: {path}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"config is not valid YAML: {err}") from err
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    kwargs = {}
    for key, value in raw.items():
        if key == "scenario":
            if not isinstance(value, dict):
                raise ConfigError("config key 'scenario' expects a mapping")
            sc_kwargs = {}
            for sk, sv in value.items():
                if sk not in _SCENARIO_TYPES:
                    raise ConfigError(f"unknown config key 'scenario.{sk}'")
                _check_type("scenario", sk, sv, _SCENARIO_TYPES[sk])
                if isinstance(sv, list):
                    sv = tuple(float(x) for x in sv)
                sc_kwargs[sk] = sv
            try:
                kwargs["scenario"] = scenario.ScenarioConfig(**sc_kwargs)
            except ValueError as err:
                raise ConfigError(f"invalid scenario config: {err}") from err
        elif key in _LIST_KEYS:
            _check_type("", key, value, list)
            kwargs[key] = tuple(value)
        elif key in _SCALAR_TYPES:
            _check_type("", key, value, _SCALAR_TYPES[key])
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return ExperimentSpec(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Plain-data view of a spec, suitable for archiving next to results."""
    sc = spec.scenario
    return {
        "scenario": {
            "K": sc.K, "M_q": sc.M_q, "Q": sc.Q, "N_noise": sc.N_noise,
            "room_edge": sc.room_edge,
            "min_src_node_dist": sc.min_src_node_dist,
            "sensor_disc_radius": sc.sensor_disc_radius,
            "comm_radius_init": sc.comm_radius_init,
            "comm_radius_step": sc.comm_radius_step,
            "frequency": sc.frequency,
            "speed_of_sound": sc.speed_of_sound,
            "latent_desired_powers": list(sc.latent_desired_powers),
            "latent_noise_powers": list(sc.latent_noise_powers),
            "self_noise_power": sc.self_noise_power,
            "seed": sc.seed,
        },
        "algorithms": list(spec.algorithms),
        "pruning": list(spec.pruning),
        "c_values": list(spec.c_values),
        "iterations": spec.iterations,
        "n_environments": spec.n_environments,
        "base_seed": spec.base_seed,
        "output_dir": spec.output_dir,
    }
