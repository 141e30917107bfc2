import json

import numpy as np
import pytest

from foloc.errors import InvalidInputError
from foloc.experiments import (
    MULTI_FREQUENCIES,
    SINGLE_FREQUENCY,
    ExperimentSpec,
    LocatorSettings,
    build_grid,
    build_scenario,
    cell_seeds,
    eligible_sources,
    list_presets,
    load_config,
    load_spec,
    run_experiment,
    run_fourier_baseline,
    run_sweep,
    stage,
)
from foloc.errors import NumericalError
from foloc.grid import build_state_matrix, generate_topology, GridModel, NodeParams, equilibrate
from foloc.simulate import ScenarioConfig

from conftest import make_model, small_config


def test_presets_load():
    assert {"desk-single", "desk-multi", "desk-resonance"} <= set(list_presets())
    for name in ("desk-single", "desk-multi", "desk-resonance"):
        spec = load_spec(name)
        assert spec.seeds == tuple(range(10))
        assert spec.scenario.sigma == 0.05 and spec.scenario.dt == 0.01 and spec.scenario.duration == 30.0


def test_spec_roundtrip_and_overrides(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path))
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec
    o = spec.with_overrides(K=21, sigma=0.2, seed=5, scenario="multi", out=tmp_path / "x")
    assert o.grid["coupling"] == 21.0 and o.scenario.sigma == 0.2 and o.seeds == (5,)
    assert o.kind == "multi" and o.output_dir == str(tmp_path / "x")
    assert spec.with_overrides(source_node=4).source_nodes == (4,)
    assert spec.with_overrides() == spec


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"scenario": {"kind": "triple"}},
    {"seeds": []},
    {"mecf": {"m": 1}},
    {"mecf": {"colour": 1}},
    {"locator": {"perplexity": 0.5}},
    {"write_fields": "some"},
])
def test_spec_validation(tmp_path, patch):
    cfg = small_config(tmp_path)
    cfg.update(patch)
    with pytest.raises(InvalidInputError):
        ExperimentSpec.from_dict(cfg)


def test_multi_needs_two_nodes(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path, kind="multi"))
    with pytest.raises(InvalidInputError):
        spec.with_overrides(source_node=3)


def test_load_config_errors(tmp_path):
    with pytest.raises(InvalidInputError, match="neither a file nor a preset"):
        load_config("no-such-preset")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(InvalidInputError, match="invalid JSON"):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(InvalidInputError):
        load_config(bad)


def test_locator_perplexity():
    assert LocatorSettings().resolve_perplexity(120) == 117.0
    assert LocatorSettings(perplexity=30).resolve_perplexity(120) == 30.0
    assert LocatorSettings().resolve_perplexity(3) == 1.0


def test_build_grid_variants(tmp_path):
    cfg = small_config(tmp_path)["grid"]
    model = build_grid(cfg)
    assert model.node_count == 30 and all(k == 15.0 for *_, k in model.topology.edges)
    cfg["node_params"]["overrides"] = [{"node": 2, "alpha": 5.0, "beta": 0.5}]
    p = build_grid(cfg).params
    assert p.alpha[2] == 5.0 and p.beta[2] == 0.5 and p.alpha[3] == 1.0
    cfg["node_params"]["overrides"] = [{"node": 99}]
    with pytest.raises(InvalidInputError):
        build_grid(cfg)
    with pytest.raises(InvalidInputError):
        build_grid({"coupling": 1.0})
    with pytest.raises(InvalidInputError):
        build_grid({"generator": {"kind": "ring"}})


def test_eligible_sources_exclude_leaves_and_cuts():
    path = make_model([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 4)
    assert eligible_sources(path) == [0, 1, 2, 3]  # nothing qualifies, so fall back
    ring = make_model([(i, (i + 1) % 6, 1.0) for i in range(6)] + [(0, 6, 1.0)], 7)
    assert eligible_sources(ring) == [1, 2, 3, 4, 5]


def test_build_scenario_kinds(tmp_path):
    model = build_grid(small_config(tmp_path)["grid"])
    single = build_scenario("single", model, seed=1)
    assert len(single.sources) == 1 and single.sources[0].f == SINGLE_FREQUENCY
    assert single.sources[0].gamma == 1.0 and single.sources[0].node in eligible_sources(model)
    assert build_scenario("single", model, seed=1) == single
    multi = build_scenario("multi", model, seed=2)
    assert [s.f for s in multi.sources] == list(MULTI_FREQUENCIES)
    assert len({s.node for s in multi.sources}) == 2
    assert build_scenario("single", model, source_nodes=[4]).sources[0].node == 4
    with pytest.raises(InvalidInputError):
        build_scenario("single", model, source_nodes=[30])
    with pytest.raises(InvalidInputError):
        build_scenario("bogus", model)


def test_build_scenario_keeps_template():
    model = make_model([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 3)
    tmpl = ScenarioConfig(sources=[{"node": 2, "gamma": 0.5, "f": 0.1}], sigma=0.2)
    assert build_scenario("single", model, template=tmpl) == tmpl


def test_resonance_preset_scenario():
    spec = load_spec("desk-resonance")
    model = build_grid(spec.grid)
    scen = build_scenario("resonance", model, spec.scenario_seed, spec.scenario)
    src = scen.sources[0]
    assert scen.resonator == 91 and src.node != 91
    assert 0.2 < src.f < 0.35


def test_resonance_two_node_grid_is_trivial():
    # the single swing mode moves both nodes equally, so the resonator is just the other node
    model = make_model([(0, 1, 1.0)], 2, alpha=1.0, beta=1e-3)
    scen = build_scenario("resonance", model)
    assert {scen.sources[0].node, scen.resonator} == {0, 1}
    assert scen.sources[0].f == pytest.approx(np.sqrt(2) / (2 * np.pi), rel=1e-3)


def test_resonance_without_modes_fails():
    # heavy damping leaves no oscillatory mode to drive
    model = make_model([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 3, beta=80.0)
    with pytest.raises(InvalidInputError):
        build_scenario("resonance", model)


def test_stage_tagging():
    with pytest.raises(NumericalError) as info:
        with stage("simulate"):
            raise NumericalError("boom")
    assert info.value.stage == "simulate"
    with pytest.raises(NumericalError) as info:
        with stage("outer"):
            with stage("inner"):
                raise NumericalError("boom")
    assert info.value.stage == "inner"


def test_run_experiment_artifacts(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path))
    res = run_experiment(spec)
    root = tmp_path / "run"
    for name in ("topology.csv", "node_params.csv", "scenario.json", "report.json", "manifest.json",
                 "seed_0/trajectory.csv", "seed_0/report.json", "seed_0/embedding.csv", "seed_1/report.json"):
        assert (root / name).is_file(), name
    src = res.sources[0]
    assert (root / f"seed_0/field_node_{src}.csv").is_file()
    assert (root / f"seed_0/field_node_{src}.json").is_file()
    man = json.loads((root / "manifest.json").read_text())
    assert man["command"] == "experiment" and man["config"] == json.loads(json.dumps(spec.to_dict()))
    assert set(man["metadata"]) >= {"created", "elapsed_s", "foloc_version", "mecf_backend"}
    paths = {a["path"] for a in man["artifacts"]}
    assert "seed_1/embedding.csv" in paths and "report.json" in paths
    rep = json.loads((root / "report.json").read_text())
    assert rep["sources"] == res.sources and len(rep["seeds"]) == 2
    assert res.votes.sum() == sum(len(r.report.outliers) for r in res.runs)


def test_rerun_reports_identical(tmp_path):
    cfg = small_config(tmp_path)
    run_experiment(ExperimentSpec.from_dict(cfg))
    first = {p: (tmp_path / "run" / p).read_bytes() for p in ("report.json", "seed_0/report.json", "seed_1/embedding.csv")}
    run_experiment(ExperimentSpec.from_dict(cfg))
    for p, data in first.items():
        assert (tmp_path / "run" / p).read_bytes() == data


def test_run_experiment_without_writing(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path))
    res = run_experiment(spec.with_overrides(seed=3), write=False)
    assert res.output_dir is None and not (tmp_path / "run").exists()
    assert [r.seed for r in res.runs] == [3]


def test_cell_seeds_depend_on_position_only():
    a = cell_seeds(0, 1, 2, 3)
    assert a == cell_seeds(0, 1, 2, 3) and len(set(a)) == 3
    assert a != cell_seeds(0, 2, 1, 3) and a != cell_seeds(1, 1, 2, 3)


def test_sweep_cells_independent(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path, duration=5.0))
    big = run_sweep(spec, [15.0, 21.0], [0.05, 0.2], seeds_per_cell=2, write=False)
    assert len(big.cells) == 4 and big.success_matrix().shape == (2, 2)
    # rerunning a sub-grid reproduces the same cell verdicts
    sub = run_sweep(spec, [21.0], [0.05, 0.2], seeds_per_cell=2, write=False)
    for s in (0.05, 0.2):
        a, b = big.cell(21.0, s), sub.cell(21.0, s)
        assert a.flagged == b.flagged
    # seeds follow grid position, so they do shift with position in a different grid
    assert sub.cell(21.0, 0.05).seeds == cell_seeds(0, 0, 0, 2)


def test_sweep_outputs(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path, duration=5.0))
    res = run_sweep(spec, [15.0], [0.0, 0.1], seeds_per_cell=1)
    root = tmp_path / "run"
    lines = (root / "sweep.csv").read_text().splitlines()
    assert lines[0] == "K,sigma,success_rate,majority,resonator_flagged,error" and len(lines) == 3
    man = json.loads((root / "manifest.json").read_text())
    assert man["config"]["sweep"]["seeds_per_cell"] == 1
    assert json.loads((root / "sweep.json").read_text())["kind"] == "single"
    assert res.resonator_flag_count() == 0


def test_sweep_records_cell_failure(tmp_path):
    # an unstable noise level blows up the simulation; the sweep keeps going
    spec = ExperimentSpec.from_dict(small_config(tmp_path, duration=5.0))
    res = run_sweep(spec, [15.0], [0.05, 1e150], seeds_per_cell=1, write=False)
    bad = res.cell(15.0, 1e150)
    assert bad.error is not None and bad.located == [False]
    assert res.cell(15.0, 0.05).error is None


def test_sweep_grid_must_increase(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path))
    with pytest.raises(InvalidInputError):
        run_sweep(spec, [21.0, 15.0], [0.1], write=False)


def test_fourier_baseline(tmp_path):
    spec = ExperimentSpec.from_dict(small_config(tmp_path, sigma=0.0))
    res = run_fourier_baseline(spec)
    assert res.candidates == [res.scenario.sources[0].node] and not res.ambiguous
    root = tmp_path / "run"
    assert (root / "spectrum.csv").read_text().startswith("frequency,node_0,")
    data = json.loads((root / "fourier.json").read_text())
    assert data["candidates"] == res.candidates
