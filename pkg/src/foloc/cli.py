"""``foloc`` command line.

Exit codes: 0 success, 1 invalid config or input, 2 numerical failure,
3 no source found.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import FolocError, InvalidInputError, NumericalError
from .experiments import (
    DEFAULT_K_VALUES,
    DEFAULT_SIGMA_VALUES,
    SCENARIO_KINDS,
    Manifest,
    build_grid,
    build_scenario,
    list_presets,
    load_spec,
    run_experiment,
    run_fourier_baseline,
    run_sweep,
    stage,
    write_grid,
    write_json,
)
from .grid import build_state_matrix
from .locate import locate_from_distances
from .mecf import field_distance_matrix, trajectory_fields, write_field
from .simulate import read_trajectory_csv, simulate, write_trajectory_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_NO_SOURCE = 0, 1, 2, 3


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="desk-single",
                        help=f"JSON config path or preset name ({', '.join(list_presets())}); default desk-single")
    common.add_argument("--K", type=float, help="homogeneous coupling strength for every edge")
    common.add_argument("--sigma", type=float, help="noise standard deviation")
    common.add_argument("--seed", type=int, help="run a single noise seed")
    common.add_argument("--scenario", choices=SCENARIO_KINDS, help="scenario kind")
    common.add_argument("--source-node", type=int, help="force the (first) FO source node")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="foloc", description="Locate forced-oscillation sources from motif correlation fields.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="simulate one scenario and write the trajectory")

    m = sub.add_parser("mecf", parents=[common], help="motif fields and their pairwise distances")
    m.add_argument("--trajectory", help="trajectory CSV to read instead of simulating")
    m.add_argument("--nodes", type=_ints, help="nodes whose full fields are written (default: the sources)")

    loc = sub.add_parser("locate", parents=[common], help="locate sources for one noise realization")
    loc.add_argument("--trajectory", help="trajectory CSV to read instead of simulating")

    sub.add_parser("experiment", parents=[common], help="seeded localization runs with majority vote")

    sw = sub.add_parser("sweep", parents=[common], help="K x sigma robustness sweep")
    sw.add_argument("--K-values", type=_floats, default=list(DEFAULT_K_VALUES))
    sw.add_argument("--sigma-values", type=_floats, default=list(DEFAULT_SIGMA_VALUES))
    sw.add_argument("--seeds-per-cell", type=int)
    sw.add_argument("--master-seed", type=int, default=0)
    sw.add_argument("--workers", type=int, default=1)

    fo = sub.add_parser("fourier", parents=[common], help="Fourier peak-picking baseline")
    fo.add_argument("--dominance-ratio", type=float, default=2.0)
    return p


def _spec(args):
    return load_spec(args.config, K=args.K, sigma=args.sigma, seed=args.seed, scenario=args.scenario,
                     out=args.out, source_node=args.source_node)


def _prepare(spec):
    with stage("grid"):
        model = build_grid(spec.grid)
        phi = build_state_matrix(model)
    with stage("scenario"):
        scen = build_scenario(spec.kind, model, spec.scenario_seed, spec.scenario, spec.source_nodes, phi)
    return model, phi, scen.replace(seed=spec.seeds[0])


def _root(spec, command):
    root = Path(spec.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    return root, Manifest(root, command, spec.to_dict())


def _trajectory(args, spec, model, phi, scen, root, manifest):
    if getattr(args, "trajectory", None):
        traj = read_trajectory_csv(args.trajectory)
        if traj.node_count != model.node_count:
            raise InvalidInputError(f"trajectory has {traj.node_count} nodes, grid has {model.node_count}")
        return traj
    with stage("simulate"):
        traj = simulate(model, scen, phi)
    write_trajectory_csv(traj, root / "trajectory.csv")
    manifest.add(root / "trajectory.csv", "trajectory", seed=scen.seed)
    return traj


def cmd_simulate(args) -> int:
    spec = _spec(args)
    started = time.time()
    model, phi, scen = _prepare(spec)
    root, manifest = _root(spec, "simulate")
    write_grid(model, root, manifest)
    manifest.add(write_json(root / "scenario.json", asdict(scen)), "scenario")
    traj = _trajectory(args, spec, model, phi, scen, root, manifest)
    manifest.write(started)
    print(f"simulated {traj.node_count} nodes x {traj.samples} samples -> {root}")
    return EXIT_OK


def cmd_mecf(args) -> int:
    spec = _spec(args)
    started = time.time()
    model, phi, scen = _prepare(spec)
    root, manifest = _root(spec, "mecf")
    traj = _trajectory(args, spec, model, phi, scen, root, manifest)
    with stage("mecf"):
        fields = trajectory_fields(traj.omega, spec.mecf)
        D = field_distance_matrix(fields)
    nodes = args.nodes if args.nodes is not None else [s.node for s in scen.sources]
    for i in nodes:
        if not 0 <= i < len(fields):
            raise InvalidInputError(f"node {i} does not exist (N={len(fields)})")
        path = root / f"field_node_{i}.csv"
        side = write_field(fields[i], path, {"node": i})
        manifest.add(path, "field", node=i)
        manifest.add(side, "field_sidecar", node=i)
    _write_matrix(root / "field_distances.csv", D)
    manifest.add(root / "field_distances.csv", "field_distances")
    manifest.write(started)
    print(f"fields {fields[0].shape} for {len(fields)} nodes; degenerate pairs "
          f"{sum(f.degenerate for f in fields)} -> {root}")
    return EXIT_OK


def _write_matrix(path, D):
    n = len(D)
    np.savetxt(path, D, delimiter=",", header=",".join(f"node_{i}" for i in range(n)), comments="", fmt="%.17g")


def cmd_locate(args) -> int:
    spec = _spec(args)
    started = time.time()
    model, phi, scen = _prepare(spec)
    root, manifest = _root(spec, "locate")
    traj = _trajectory(args, spec, model, phi, scen, root, manifest)
    with stage("mecf"):
        D = field_distance_matrix(trajectory_fields(traj.omega, spec.mecf))
    loc = spec.locator
    with stage("locate"):
        seed = scen.seed if loc.tsne_seed is None else loc.tsne_seed
        rep = locate_from_distances(D, loc.resolve_perplexity(model.node_count), loc.iterations,
                                    seed, loc.normalize, loc.k)
    rep.write(root / "report.json", root / "embedding.csv")
    manifest.add(root / "report.json", "location_report")
    manifest.add(root / "embedding.csv", "embedding")
    manifest.write(started)
    print(f"outliers: {rep.outliers} (threshold {rep.threshold:.4f})")
    return EXIT_OK if rep.outliers else EXIT_NO_SOURCE


def cmd_experiment(args) -> int:
    res = run_experiment(_spec(args))
    hits = sum(res.hits)
    print(f"sources {res.sources}; majority outliers {res.outliers}; exact in {hits}/{len(res.runs)} seeds "
          f"-> {res.output_dir}")
    return EXIT_OK if res.outliers else EXIT_NO_SOURCE


def cmd_sweep(args) -> int:
    spec = _spec(args)
    Ks = [args.K] if args.K is not None else args.K_values
    sigmas = [args.sigma] if args.sigma is not None else args.sigma_values
    res = run_sweep(spec, Ks, sigmas, args.seeds_per_cell, args.master_seed, args.workers)
    M = res.success_matrix()
    print("sigma\\K " + " ".join(f"{k:>5g}" for k in res.K_values))
    for si, s in enumerate(res.sigma_values):
        print(f"{s:>7g} " + " ".join(f"{'ok' if v else '--':>5}" for v in M[si]))
    if res.kind == "resonance":
        print(f"resonator flagged in {res.resonator_flag_count()} cells")
    print(f"-> {spec.output_dir}")
    return EXIT_OK


def cmd_fourier(args) -> int:
    res = run_fourier_baseline(_spec(args), args.dominance_ratio)
    print(f"candidates {res.candidates}; ambiguous={res.ambiguous}")
    for p in res.peaks:
        print(f"  {p['frequency']:.4g} Hz: leader {p['leader']} runner-up {p['runner_up']} ratio {p['ratio']}")
    return EXIT_OK if res.candidates else EXIT_NO_SOURCE


COMMANDS = {
    "simulate": cmd_simulate,
    "mecf": cmd_mecf,
    "locate": cmd_locate,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "fourier": cmd_fourier,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as a numerical failure
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as err:
        where = f" [{err.stage}]" if err.stage else ""
        print(f"error{where}: {err}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as err:
        where = f" [{err.stage}]" if err.stage else ""
        print(f"numerical failure{where}: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FolocError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
