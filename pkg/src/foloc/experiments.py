"""End-to-end runs: scenario construction, seeded localization experiments,
the coupling/noise sweep and the Fourier comparison.

Experiments are described by plain JSON-compatible dicts (see ``presets/``)
and resolved into :class:`ExperimentSpec`.  Every run writes its artifacts
under ``output_dir`` together with a ``manifest.json`` that embeds the
resolved configuration.
"""
from __future__ import annotations

import contextlib
import copy
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FolocError, InvalidInputError
from .grid import (
    GridModel,
    NodeParams,
    StateMatrix,
    build_state_matrix,
    default_node_params,
    equilibrate,
    generate_topology,
    load_node_params,
    load_topology,
    modal_analysis,
    pick_resonant_frequency,
    save_node_params,
    save_topology,
)
from .locate import (
    CHEBYSHEV_K,
    LocationReport,
    fourier_locate,
    fourier_spectrum,
    locate_from_distances,
)
from .mecf import BACKEND, MECFParams, field_distance_matrix, trajectory_fields, write_field
from .simulate import FOSource, ScenarioConfig, simulate, steady_state_response, write_trajectory_csv

SCENARIO_KINDS = ("single", "resonance", "multi")
SINGLE_FREQUENCY = 0.5
MULTI_FREQUENCIES = (0.2, 0.4)
DEFAULT_K_VALUES = (15.0, 18.0, 21.0, 24.0, 27.0, 30.0)
DEFAULT_SIGMA_VALUES = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
# A resonator counts as excited when its steady-state amplitude is at least
# this fraction of the source's.
RESONANCE_MIN_RATIO = 0.5


@contextlib.contextmanager
def stage(name: str):
    """Tag any library error escaping the block with the pipeline stage."""
    try:
        yield
    except FolocError as err:
        if err.stage is None:
            err.stage = name
        raise


# -------------------------------------------------------------------- specs


@dataclass(frozen=True)
class LocatorSettings:
    perplexity: float | str = "auto"  # "auto" -> N - 3
    iterations: int = 2000  # at N=120 some seeds are still separating at 1000
    tsne_seed: int | None = None  # None -> the run's noise seed
    normalize: bool = True
    k: float = CHEBYSHEV_K

    def __post_init__(self):
        if self.perplexity != "auto" and not (isinstance(self.perplexity, (int, float)) and self.perplexity >= 1):
            raise InvalidInputError(f"perplexity must be 'auto' or >= 1, got {self.perplexity!r}")
        if self.iterations < 1 or not self.k > 0:
            raise InvalidInputError("iterations must be positive and k > 0")

    def resolve_perplexity(self, n: int) -> float:
        if self.perplexity == "auto":
            return float(max(1, n - 3))
        return float(self.perplexity)


@dataclass(frozen=True)
class ExperimentSpec:
    grid: dict
    scenario: ScenarioConfig
    kind: str = "single"
    scenario_seed: int = 0
    source_nodes: tuple[int, ...] | None = None
    mecf: MECFParams = MECFParams()
    locator: LocatorSettings = LocatorSettings()
    seeds: tuple[int, ...] = tuple(range(10))
    output_dir: str = "runs/experiment"
    write_trajectories: bool = True
    write_fields: str = "sources"  # "none" | "sources" | "all"

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise InvalidInputError(f"scenario kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        if not self.seeds:
            raise InvalidInputError("seeds must be non-empty")
        if self.write_fields not in ("none", "sources", "all"):
            raise InvalidInputError("write_fields must be 'none', 'sources' or 'all'")
        want = {"single": 1, "resonance": 1, "multi": len(MULTI_FREQUENCIES)}[self.kind]
        if self.source_nodes is not None and len(self.source_nodes) != want:
            raise InvalidInputError(f"{self.kind} scenario takes {want} source node(s), got {list(self.source_nodes)}")

    @classmethod
    def from_dict(cls, cfg: dict) -> ExperimentSpec:
        cfg = copy.deepcopy(cfg)
        known = {"grid", "scenario", "mecf", "locator", "seeds", "output_dir",
                 "write_trajectories", "write_fields"}
        unknown = set(cfg) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        if "grid" not in cfg:
            raise InvalidInputError("config needs a 'grid' section")
        scen = dict(cfg.get("scenario", {}))
        kind = scen.pop("kind", "single")
        scenario_seed = int(scen.pop("scenario_seed", 0))
        nodes = scen.pop("source_nodes", None)
        try:
            scenario = ScenarioConfig.from_dict(scen)
            mecf = MECFParams(**cfg.get("mecf", {}))
            locator = LocatorSettings(**cfg.get("locator", {}))
        except TypeError as err:
            raise InvalidInputError(f"bad config section: {err}") from None
        return cls(
            grid=cfg["grid"], scenario=scenario, kind=kind, scenario_seed=scenario_seed,
            source_nodes=None if nodes is None else tuple(int(v) for v in nodes),
            mecf=mecf, locator=locator,
            seeds=tuple(int(s) for s in cfg.get("seeds", range(10))),
            output_dir=str(cfg.get("output_dir", "runs/experiment")),
            write_trajectories=bool(cfg.get("write_trajectories", True)),
            write_fields=cfg.get("write_fields", "sources"),
        )

    def to_dict(self) -> dict:
        scen = asdict(self.scenario)
        scen.update(kind=self.kind, scenario_seed=self.scenario_seed,
                    source_nodes=None if self.source_nodes is None else list(self.source_nodes))
        return {
            "grid": copy.deepcopy(self.grid),
            "scenario": scen,
            "mecf": asdict(self.mecf),
            "locator": asdict(self.locator),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "write_trajectories": self.write_trajectories,
            "write_fields": self.write_fields,
        }

    def with_overrides(self, K=None, sigma=None, seed=None, scenario=None, out=None, source_node=None) -> ExperimentSpec:
        """Copy with the command-line overrides applied (``None`` leaves a value alone)."""
        cfg = self.to_dict()
        if K is not None:
            cfg["grid"]["coupling"] = float(K)
        if sigma is not None:
            cfg["scenario"]["sigma"] = float(sigma)
        if seed is not None:
            cfg["seeds"] = [int(seed)]
        if scenario is not None:
            if scenario != cfg["scenario"]["kind"]:
                cfg["scenario"]["source_nodes"] = None
                cfg["scenario"]["sources"] = []
            cfg["scenario"]["kind"] = scenario
        if out is not None:
            cfg["output_dir"] = str(out)
        if source_node is not None:
            cfg["scenario"]["source_nodes"] = [int(source_node)]
            cfg["scenario"]["sources"] = []
        return ExperimentSpec.from_dict(cfg)


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("foloc.presets").iterdir() if p.name.endswith(".json"))


def load_config(source) -> dict:
    """Config dict from a JSON file path or a bundled preset name."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        preset = resources.files("foloc.presets") / f"{source}.json"
        if not preset.is_file():
            raise InvalidInputError(f"config {source!r} is neither a file nor a preset ({', '.join(list_presets())})")
        text = preset.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise InvalidInputError(f"config {source}: invalid JSON ({err})") from None
    if not isinstance(cfg, dict):
        raise InvalidInputError(f"config {source}: top level must be an object")
    return cfg


def load_spec(source, **overrides) -> ExperimentSpec:
    return ExperimentSpec.from_dict(load_config(source)).with_overrides(**overrides)


# --------------------------------------------------------------------- grid


def build_grid(grid: dict) -> GridModel:
    """Equilibrated model from a grid config section.

    Keys: ``topology_file`` or ``generator`` (``kind``, ``n``, ``edges``,
    ``seed``); optional ``coupling`` applied to every edge; ``node_params``
    as ``{"file": path}`` or ``{"alpha", "beta", "seed", "overrides"}``.
    """
    unknown = set(grid) - {"topology_file", "generator", "coupling", "node_params"}
    if unknown:
        raise InvalidInputError(f"unknown grid keys: {sorted(unknown)}")
    if "topology_file" in grid:
        topo = load_topology(grid["topology_file"])
    elif "generator" in grid:
        g = grid["generator"]
        try:
            topo = generate_topology(g["kind"], int(g["n"]), int(g["edges"]), int(g.get("seed", 0)),
                                     rewire_prob=float(g.get("rewire_prob", 0.1)))
        except KeyError as err:
            raise InvalidInputError(f"grid generator needs {err}") from None
    else:
        raise InvalidInputError("grid needs 'topology_file' or 'generator'")
    if grid.get("coupling") is not None:
        topo = topo.with_uniform_coupling(float(grid["coupling"]))
    return equilibrate(GridModel(topo, _node_params(grid.get("node_params", {}), topo.node_count)))


def _node_params(cfg: dict, n: int) -> NodeParams:
    if "file" in cfg:
        return load_node_params(cfg["file"], n)
    base = default_node_params(n, int(cfg.get("seed", 0)))
    alpha = np.full(n, float(cfg.get("alpha", 1.0)))
    beta = np.full(n, float(cfg.get("beta", 1.0)))
    for item in cfg.get("overrides", []):
        i = int(item["node"])
        if not 0 <= i < n:
            raise InvalidInputError(f"node-parameter override for missing node {i}")
        alpha[i] = float(item.get("alpha", alpha[i]))
        beta[i] = float(item.get("beta", beta[i]))
    return NodeParams(alpha, beta, base.power)


# ----------------------------------------------------------------- scenarios


def eligible_sources(model: GridModel) -> list[int]:
    """Nodes that are neither leaves nor articulation points, falling back to
    all nodes on graphs too small to have any."""
    topo = model.topology
    cut = topo.articulation_nodes()
    deg = topo.degrees()
    nodes = [i for i in range(topo.node_count) if i not in cut and deg[i] > 1]
    return nodes or list(range(topo.node_count))


def build_scenario(kind: str, grid: GridModel, seed: int = 0, template: ScenarioConfig | None = None,
                   source_nodes=None, phi: StateMatrix | None = None) -> ScenarioConfig:
    """Place FO sources for a ``single``, ``resonance`` or ``multi`` scenario.

    Non-source settings (noise level, duration, step) come from ``template``.
    Without explicit ``source_nodes`` the sources are drawn with ``seed`` from
    :func:`eligible_sources`.  For ``resonance`` the drive frequency is the
    least-damped mode not dominated by the source, and the source is the
    eligible node farthest (in hops) from that mode's resonator among those
    that still excite it to at least half their own amplitude.
    """
    if kind not in SCENARIO_KINDS:
        raise InvalidInputError(f"scenario kind must be one of {SCENARIO_KINDS}, got {kind!r}")
    template = template or ScenarioConfig()
    if template.sources:
        template.check_nodes(grid.node_count)
        return template
    rng = np.random.default_rng(seed)
    pool = eligible_sources(grid)
    gamma = 1.0

    if kind == "single":
        node = int(source_nodes[0]) if source_nodes else int(rng.choice(pool))
        sources = (FOSource(node, gamma, SINGLE_FREQUENCY),)
        resonator = None
    elif kind == "multi":
        if source_nodes:
            nodes = [int(v) for v in source_nodes]
        else:
            if len(pool) < len(MULTI_FREQUENCIES):
                pool = list(range(grid.node_count))
            nodes = [int(v) for v in rng.choice(pool, size=len(MULTI_FREQUENCIES), replace=False)]
        sources = tuple(FOSource(v, gamma, f) for v, f in zip(nodes, MULTI_FREQUENCIES))
        resonator = None
    else:
        phi = phi if phi is not None else build_state_matrix(grid)
        modes = modal_analysis(phi)
        if source_nodes:
            node = int(source_nodes[0])
            f, resonator = pick_resonant_frequency(modes, node)
        else:
            node, f, resonator = _resonance_source(phi, modes, pool, rng, grid.topology.hop_distances())
        sources = (FOSource(node, gamma, f),)

    scen = template.replace(sources=[asdict(s) for s in sources], resonator=resonator)
    scen.check_nodes(grid.node_count)
    return scen


def _resonance_source(phi, modes, pool, rng, hops):
    scored = []
    for s in pool:
        try:
            f, r = pick_resonant_frequency(modes, s)
        except InvalidInputError:
            continue
        if r == s:
            continue
        X = np.abs(steady_state_response(phi, FOSource(s, 1.0, f))[phi.node_count :])
        scored.append((s, f, r, X[r] / X[s], hops[s, r]))
    if not scored:
        raise InvalidInputError("no qualifying mode: no eligible source drives a distinct resonator")
    excited = [c for c in scored if c[3] >= RESONANCE_MIN_RATIO]
    if excited:
        far = max(c[4] for c in excited)
        best = [c for c in excited if c[4] == far]
    else:
        top = max(c[3] for c in scored)
        best = [c for c in scored if c[3] == top]
    s, f, r, _, _ = best[int(rng.integers(len(best)))]
    return int(s), float(f), int(r)


# -------------------------------------------------------------- experiments


@dataclass
class SeedResult:
    seed: int
    scenario: ScenarioConfig
    report: LocationReport
    field_distances: np.ndarray


def locate_run(model: GridModel, scenario: ScenarioConfig, mecf: MECFParams, locator: LocatorSettings,
               phi: StateMatrix | None = None, keep_fields: bool = False):
    """Simulate one noise realization and locate; returns ``(report, trajectory, fields, D)``."""
    with stage("simulate"):
        traj = simulate(model, scenario, phi)
    with stage("mecf"):
        fields = trajectory_fields(traj.omega, mecf)
        D = field_distance_matrix(fields)
    with stage("locate"):
        rep = locate_from_distances(
            D, perplexity=locator.resolve_perplexity(model.node_count), iterations=locator.iterations,
            seed=scenario.seed if locator.tsne_seed is None else locator.tsne_seed,
            normalize=locator.normalize, k=locator.k,
        )
    rep.params["noise_seed"] = scenario.seed
    return rep, traj, (fields if keep_fields else None), D


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    scenario: ScenarioConfig
    runs: list[SeedResult]
    votes: np.ndarray  # per node, number of seeds that flagged it
    outliers: list[int]  # flagged by a strict majority of seeds
    output_dir: Path | None = None

    @property
    def sources(self) -> list[int]:
        return sorted(s.node for s in self.scenario.sources)

    @property
    def hits(self) -> list[bool]:
        """Per seed: did the flagged set equal the source set exactly."""
        return [sorted(r.report.outliers) == self.sources for r in self.runs]

    def to_dict(self) -> dict:
        return {
            "scenario": asdict(self.scenario),
            "sources": self.sources,
            "resonator": self.scenario.resonator,
            "outliers": self.outliers,
            "votes": [int(v) for v in self.votes],
            "seeds": [
                {"seed": r.seed, "outliers": r.report.outliers, "threshold": float(r.report.threshold),
                 "exact": hit}
                for r, hit in zip(self.runs, self.hits)
            ],
        }


class Manifest:
    """Collects artifact paths; written once at the end of a run."""

    def __init__(self, root: Path, command: str, config: dict):
        self.root = Path(root)
        self.command = command
        self.config = config
        self.items: list[dict] = []

    def add(self, path, kind: str, **info) -> Path:
        path = Path(path)
        self.items.append({"path": str(path.relative_to(self.root)), "kind": kind, **info})
        return path

    def write(self, started: float | None = None) -> Path:
        doc = {
            "command": self.command,
            "config": self.config,
            "artifacts": sorted(self.items, key=lambda d: d["path"]),
            "metadata": {
                "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "elapsed_s": None if started is None else round(time.time() - started, 3),
                "foloc_version": __version__,
                "mecf_backend": BACKEND,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }
        path = self.root / "manifest.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_grid(model: GridModel, root: Path, manifest: Manifest) -> None:
    save_topology(model.topology, root / "topology.csv")
    manifest.add(root / "topology.csv", "topology")
    save_node_params(model.params, root / "node_params.csv")
    manifest.add(root / "node_params.csv", "node_params")


def run_experiment(spec: ExperimentSpec, write: bool = True) -> ExperimentResult:
    """Simulate, build fields, embed and locate once per seed; majority-vote the result.

    With ``write`` the per-seed trajectory, report, embedding and selected
    fields go to ``spec.output_dir/seed_<s>/`` and the majority report to
    ``report.json``.
    """
    started = time.time()
    with stage("grid"):
        model = build_grid(spec.grid)
        phi = build_state_matrix(model)
    with stage("scenario"):
        base = build_scenario(spec.kind, model, spec.scenario_seed, spec.scenario, spec.source_nodes, phi)
    root = Path(spec.output_dir)
    manifest = Manifest(root, "experiment", spec.to_dict())
    if write:
        root.mkdir(parents=True, exist_ok=True)
        write_grid(model, root, manifest)
        manifest.add(write_json(root / "scenario.json", asdict(base)), "scenario")

    runs = []
    votes = np.zeros(model.node_count, dtype=int)
    for seed in spec.seeds:
        scen = base.replace(seed=seed)
        keep = write and spec.write_fields != "none"
        rep, traj, fields, D = locate_run(model, scen, spec.mecf, spec.locator, phi, keep_fields=keep)
        rep.seed = seed
        votes[rep.outliers] += 1
        runs.append(SeedResult(seed, scen, rep, D))
        if write:
            _write_seed(root / f"seed_{seed}", spec, scen, traj, fields, rep, manifest)

    outliers = sorted(int(i) for i in np.flatnonzero(2 * votes > len(spec.seeds)))
    result = ExperimentResult(spec, base, runs, votes, outliers, root if write else None)
    if write:
        manifest.add(write_json(root / "report.json", result.to_dict()), "report")
        manifest.write(started)
    return result


def _write_seed(d: Path, spec, scen, traj, fields, rep, manifest):
    d.mkdir(parents=True, exist_ok=True)
    if spec.write_trajectories:
        write_trajectory_csv(traj, d / "trajectory.csv")
        manifest.add(d / "trajectory.csv", "trajectory", seed=scen.seed)
    rep.write(d / "report.json", d / "embedding.csv")
    manifest.add(d / "report.json", "location_report", seed=scen.seed)
    manifest.add(d / "embedding.csv", "embedding", seed=scen.seed)
    if fields is not None:
        nodes = range(len(fields)) if spec.write_fields == "all" else sorted(s.node for s in scen.sources)
        for i in nodes:
            path = d / f"field_node_{i}.csv"
            side = write_field(fields[i], path, {"node": i, "seed": scen.seed})
            manifest.add(path, "field", node=i, seed=scen.seed)
            manifest.add(side, "field_sidecar", node=i, seed=scen.seed)


# -------------------------------------------------------------------- sweep


@dataclass
class CellResult:
    K: float
    sigma: float
    seeds: list[int]
    located: list[bool] = field(default_factory=list)
    flagged: list[list[int]] = field(default_factory=list)
    resonator_flagged: list[bool] = field(default_factory=list)
    error: str | None = None

    @property
    def success_rate(self) -> float:
        return sum(self.located) / len(self.seeds) if self.seeds else 0.0

    @property
    def majority(self) -> bool:
        return 2 * sum(self.located) > len(self.seeds)


@dataclass
class SweepResult:
    kind: str
    K_values: list[float]
    sigma_values: list[float]
    cells: dict[tuple[int, int], CellResult]
    sources: dict[float, list[int]] = field(default_factory=dict)
    resonators: dict[float, int | None] = field(default_factory=dict)

    def __post_init__(self):
        for vals, name in ((self.K_values, "K"), (self.sigma_values, "sigma")):
            if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
                raise InvalidInputError(f"{name} grid must be non-empty and strictly increasing")

    def cell(self, K: float, sigma: float) -> CellResult:
        return self.cells[(self.K_values.index(K), self.sigma_values.index(sigma))]

    def success_matrix(self) -> np.ndarray:
        """(len(sigma), len(K)) majority verdicts."""
        M = np.zeros((len(self.sigma_values), len(self.K_values)), dtype=bool)
        for (ki, si), c in self.cells.items():
            M[si, ki] = c.majority
        return M

    def resonator_flag_count(self) -> int:
        return sum(any(c.resonator_flagged) for c in self.cells.values())

    def write_csv(self, path) -> Path:
        lines = ["K,sigma,success_rate,majority,resonator_flagged,error"]
        for ki, K in enumerate(self.K_values):
            for si, s in enumerate(self.sigma_values):
                c = self.cells[(ki, si)]
                err = "" if c.error is None else '"' + c.error.replace('"', "'") + '"'
                lines.append(f"{K!r},{s!r},{c.success_rate!r},{int(c.majority)},{sum(c.resonator_flagged)},{err}")
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "K_values": self.K_values,
            "sigma_values": self.sigma_values,
            "sources": {repr(k): v for k, v in self.sources.items()},
            "resonators": {repr(k): v for k, v in self.resonators.items()},
            "cells": [
                {"K": c.K, "sigma": c.sigma, "seeds": c.seeds, "located": c.located, "flagged": c.flagged,
                 "resonator_flagged": c.resonator_flagged, "majority": c.majority, "error": c.error}
                for _, c in sorted(self.cells.items())
            ],
        }


def cell_seeds(master: int, ki: int, si: int, count: int) -> list[int]:
    """Noise seeds owned by one sweep cell, derived from its grid position only."""
    return [int(np.random.SeedSequence([master, ki, si, j]).generate_state(1)[0]) for j in range(count)]


def _run_cell(model, phi, scenario, sigma, K, seeds, mecf, locator):
    cell = CellResult(K, sigma, seeds)
    targets = sorted(s.node for s in scenario.sources)
    try:
        for seed in seeds:
            rep, *_ = locate_run(model, scenario.replace(sigma=sigma, seed=seed), mecf, locator, phi)
            cell.flagged.append(rep.outliers)
            cell.located.append(sorted(rep.outliers) == targets)
            cell.resonator_flagged.append(scenario.resonator is not None and scenario.resonator in rep.outliers)
    except FolocError as err:
        cell.error = f"{err.stage or 'pipeline'}: {err}"
        missing = len(seeds) - len(cell.located)
        cell.located += [False] * missing
        cell.flagged += [[]] * missing
        cell.resonator_flagged += [False] * missing
    return cell


def _cell_job(args):
    return args[0], _run_cell(*args[1:])


def run_sweep(spec: ExperimentSpec, K_values=DEFAULT_K_VALUES, sigma_values=DEFAULT_SIGMA_VALUES,
              seeds_per_cell: int | None = None, master_seed: int = 0, workers: int = 1,
              write: bool = True) -> SweepResult:
    """Rerun the pipeline over a ``K x sigma`` grid with homogeneous coupling.

    Cells are independent: each owns its noise seeds (see :func:`cell_seeds`)
    and its own rebuilt state matrix.  Failures are recorded per cell.
    """
    K_values = [float(k) for k in K_values]
    sigma_values = [float(s) for s in sigma_values]
    result = SweepResult(spec.kind, K_values, sigma_values, {})
    count = seeds_per_cell or len(spec.seeds)
    started = time.time()
    with stage("grid"):
        base = build_grid(spec.grid)

    jobs = []
    for ki, K in enumerate(K_values):
        try:
            with stage("grid"):
                model = base.with_coupling(K)
                phi = build_state_matrix(model)
            with stage("scenario"):
                scen = build_scenario(spec.kind, model, spec.scenario_seed, spec.scenario, spec.source_nodes, phi)
        except FolocError as err:
            for si, s in enumerate(sigma_values):
                c = CellResult(K, s, cell_seeds(master_seed, ki, si, count), error=f"{err.stage}: {err}")
                c.located = [False] * count
                c.flagged = [[]] * count
                c.resonator_flagged = [False] * count
                result.cells[(ki, si)] = c
            continue
        result.sources[K] = sorted(src.node for src in scen.sources)
        result.resonators[K] = scen.resonator
        for si, s in enumerate(sigma_values):
            seeds = cell_seeds(master_seed, ki, si, count)
            jobs.append(((ki, si), model, phi, scen, s, K, seeds, spec.mecf, spec.locator))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, cell in pool.map(_cell_job, jobs):
                result.cells[key] = cell
    else:
        for job in jobs:
            key, cell = _cell_job(job)
            result.cells[key] = cell

    if write:
        root = Path(spec.output_dir)
        root.mkdir(parents=True, exist_ok=True)
        cfg = spec.to_dict()
        cfg["sweep"] = {"K_values": K_values, "sigma_values": sigma_values,
                        "seeds_per_cell": count, "master_seed": master_seed}
        manifest = Manifest(root, "sweep", cfg)
        manifest.add(result.write_csv(root / "sweep.csv"), "sweep_table")
        manifest.add(write_json(root / "sweep.json", result.to_dict()), "sweep_report")
        manifest.write(started)
    return result


# ------------------------------------------------------------------ Fourier


@dataclass
class FourierResult:
    scenario: ScenarioConfig
    spectra: object
    candidates: list[int]
    ambiguous: bool
    peaks: list[dict]

    def to_dict(self) -> dict:
        return {"scenario": asdict(self.scenario), "candidates": self.candidates,
                "ambiguous": self.ambiguous, "peaks": self.peaks}


def run_fourier_baseline(spec: ExperimentSpec, dominance_ratio: float = 2.0, write: bool = True) -> FourierResult:
    """One simulation (first seed), per-node spectra and the peak-picking verdict."""
    started = time.time()
    with stage("grid"):
        model = build_grid(spec.grid)
        phi = build_state_matrix(model)
    with stage("scenario"):
        scen = build_scenario(spec.kind, model, spec.scenario_seed, spec.scenario, spec.source_nodes, phi)
        scen = scen.replace(seed=spec.seeds[0])
    with stage("simulate"):
        traj = simulate(model, scen, phi)
    with stage("fourier"):
        spectra = fourier_spectrum(traj)
        verdict = fourier_locate(spectra, dominance_ratio)
    peaks = [{k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in p.items()} for p in verdict.peaks]
    result = FourierResult(scen, spectra, verdict.candidates, verdict.ambiguous, peaks)
    if write:
        root = Path(spec.output_dir)
        root.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(root, "fourier", spec.to_dict())
        spectra.write_csv(root / "spectrum.csv")
        manifest.add(root / "spectrum.csv", "spectrum")
        manifest.add(write_json(root / "fourier.json", result.to_dict()), "fourier_report")
        manifest.write(started)
    return result


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
