"""Command-line front end: run experiments, plot results, self-check."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimation, harness, plotting, scenario, topology
from .estimation import Algorithm


def _cmd_run(args) -> int:
    spec = harness.load_spec(args.config)
    if args.out is not None:
        spec = replace(spec, output_dir=args.out)
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
    outdir = Path(spec.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    table = harness.run_experiment(spec, jobs=args.jobs)
    results_path = outdir / "results.csv"
    aggregate_path = outdir / "aggregate.csv"
    figure_path = outdir / "convergence.svg"
    harness.emit_csv(table.rows, results_path)
    harness.emit_csv(table.aggregate_rows, aggregate_path)
    plotting.emit_convergence_plot(table.aggregates, figure_path)

    import yaml
    with open(outdir / "environments.yaml", "w") as f:
        yaml.safe_dump(table.environments, f, sort_keys=False)
    meta = {
        "spec": harness.spec_to_dict(spec),
        "jobs": args.jobs,
        "series_definition": (
            "values[i] is the squared Frobenius error of the network-wide "
            "filter of the node updated at iteration i against its "
            "centralized filter; values[0] evaluates the first updater in "
            "the initial random state"
        ),
        "failures": table.failures,
    }
    with open(outdir / "run_meta.yaml", "w") as f:
        yaml.safe_dump(meta, f, sort_keys=False)

    print(f"wrote {results_path} ({len(table.rows)} rows)")
    print(f"wrote {aggregate_path} ({len(table.aggregate_rows)} rows)")
    print(f"wrote {figure_path}")
    if table.failures:
        print(f"{len(table.failures)} grid cell(s) skipped:", file=sys.stderr)
        for line in table.failures:
            print(f"  {line}", file=sys.stderr)
    return 0


def _cmd_plot(args) -> int:
    rows = harness.read_csv(args.infile)
    aggregates = harness.aggregates_from_rows(rows)
    if not aggregates:
        print("error: no aggregate rows (environment_id == -1) in input",
              file=sys.stderr)
        return 1
    plotting.emit_convergence_plot(aggregates, args.out)
    print(f"wrote {args.out}")
    return 0


def _validate_checks(seed: int):
    """Invariant suite on a small random instance; yields (name, ok, detail)."""
    cfg = scenario.ScenarioConfig(
        K=6, M_q=2, Q=1, N_noise=2,
        latent_desired_powers=(1.0,), latent_noise_powers=(1.0, 1.0),
        seed=seed,
    )
    env, selection = scenario.generate_environment(cfg)
    scms = scenario.build_centralized_scms(env, cfg)

    def herm_err(R):
        return float(np.abs(R - R.conj().T).max() / max(np.abs(R).max(), 1e-300))

    yield ("scm-hermitian",
           max(herm_err(scms.R_yy), herm_err(scms.R_ss), herm_err(scms.R_nn)) <= 1e-12,
           "relative asymmetry above 1e-12")
    yield ("scm-additivity",
           float(np.abs(scms.R_yy - (scms.R_ss + scms.R_nn)).max()) == 0.0,
           "R_yy != R_ss + R_nn")
    eig = np.linalg.eigvalsh(scms.R_yy)
    yield ("scm-noise-floor", bool(eig.min() >= cfg.self_noise_power - 1e-12),
           "smallest eigenvalue below the self-noise floor")
    rank = int((np.linalg.eigvalsh(scms.R_ss)
                > 1e-10 * np.trace(scms.R_ss).real).sum())
    yield ("scm-desired-rank", rank == cfg.Q, f"rank {rank} != Q")

    dists = np.linalg.norm(
        env.sensor_positions.reshape(cfg.M, 3)[:, None, :]
        - env.desired_source_positions[None, :, :], axis=-1)
    mags_ok = np.allclose(np.abs(env.Psi), 1.0 / (4 * np.pi * dists),
                          rtol=1e-12, atol=0)
    yield ("steering-magnitude", bool(mags_ok), "|Psi| != 1/(4 pi r)")

    fc = np.ones((cfg.K, cfg.K), dtype=bool)
    np.fill_diagonal(fc, False)
    yield ("connectivity-fc", topology.connectivity(fc) == 1.0, "C(FC) != 1")

    rng = np.random.default_rng(seed)
    tree_ok, mmut_ok = True, True
    for root in range(cfg.K):
        for prune in (topology.prune_mst, topology.prune_mmut):
            tree = prune(env.adjacency, env.node_positions, root)
            edges_in_adj = all(env.adjacency[a, b] for a, b in tree.edge_list)
            spanning = len(tree.edge_list) == cfg.K - 1 and edges_in_adj
            tree_ok &= spanning
            tree_ok &= sum(len(u) for u in tree.upstream.values()) == cfg.K - 1
            if prune is topology.prune_mmut:
                mmut_ok &= (sum(root in e for e in tree.edge_list)
                            == int(env.adjacency[root].sum()))
    yield ("tree-pruning", bool(tree_ok), "pruned tree violated an invariant")
    yield ("mmut-root-degree", bool(mmut_ok), "root lost adjacency links")

    centralized = estimation.centralized_filters(scms, selection)
    res = max(
        float(np.linalg.norm(scms.R_yy @ centralized[q]
                             - scms.R_ss @ selection.E_global[q])
              / np.linalg.norm(scms.R_ss @ selection.E_global[q]))
        for q in range(cfg.K))
    yield ("centralized-residual", res <= 1e-10, f"residual {res:.2e}")

    t_err = 0.0
    for q in range(cfg.K):
        for qp in range(cfg.K):
            t = estimation.node_transform(selection.Psi_bar[q], selection.Psi_bar[qp])
            t_err = max(t_err, float(
                np.linalg.norm(centralized[q] - centralized[qp] @ t)
                / np.linalg.norm(centralized[qp])))
    yield ("transform-identity", t_err <= 1e-9, f"max deviation {t_err:.2e}")

    state = estimation.init_state(env, Algorithm.TIDANSE_PLUS, seed)
    stack_err, coher_err = 0.0, 0.0
    order = []
    for _ in range(2 * cfg.K):
        k = state.updating_node
        order.append(k)
        estimation.tidansep_iteration(
            state, env.adjacency, env.node_positions, k,
            estimation.MMUT, scms, selection)
        stack = np.vstack([n.P for n in state.nodes])
        w_root = estimation.network_wide_filter(state, k, selection)
        stack_err = max(stack_err, float(
            np.abs(w_root - stack).max() / np.abs(stack).max()))
        for q in range(cfg.K):
            w_q = estimation.network_wide_filter(state, q, selection)
            coher_err = max(coher_err, float(
                np.abs(w_q @ state.nodes[q].T - stack).max()
                / np.abs(stack).max()))
    yield ("root-stack-identity", stack_err <= 1e-12, f"max deviation {stack_err:.2e}")
    yield ("transform-coherence", coher_err <= 1e-12, f"max deviation {coher_err:.2e}")
    yield ("sequential-schedule",
           order == [i % cfg.K for i in range(2 * cfg.K)],
           "update order is not round-robin")


def _cmd_validate(args) -> int:
    failed = 0
    for name, ok, detail in _validate_checks(args.seed):
        if ok:
            print(f"PASS {name}")
        else:
            failed += 1
            print(f"FAIL {name}: {detail}")
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wasnsim",
        description="Distributed node-specific signal estimation simulator "
                    "for wireless acoustic sensor networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("--config", required=True, help="YAML experiment config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="base seed override")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel environment workers")
    p_run.set_defaults(func=_cmd_run)

    p_plot = sub.add_parser("plot", help="render a figure from an aggregate CSV")
    p_plot.add_argument("--in", dest="infile", required=True,
                        help="aggregate CSV written by 'run'")
    p_plot.add_argument("--out", required=True, help="figure path (.svg)")
    p_plot.set_defaults(func=_cmd_plot)

    p_val = sub.add_parser("validate",
                           help="run the invariant suite on a small instance")
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except harness.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (scenario.GeometryError, estimation.IllConditionedError,
            estimation.SingularFusionError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
