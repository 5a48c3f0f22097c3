"""End-to-end runs on the shipped scenarios and the artifacts they leave behind."""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import FAST_PSO, SCENARIO_DIR
from utils.cost import CostWeights
from utils.errors import EXIT_OK, EXIT_VALIDATION, ScenarioError
from utils.pipeline import RunConfig, run_pipeline
from utils.report import (
    CONVERGENCE_NAME,
    REPORT_NAME,
    build_report,
    read_trajectories,
    read_trajectory,
    write_artifacts,
)
from utils.scenario import load_scenario
from utils.theta_pso import PsoParams
from utils.trajectory import validate


def _config(**over) -> RunConfig:
    return RunConfig(pso=PsoParams(**FAST_PSO), weights=CostWeights(), segments=60, **over)

def _assert_follows_the_centroid(result):
    traj = result.trajectories
    mean = np.mean([c.positions for c in traj.commands], axis=0)
    assert np.abs(mean - traj.centroid).max() < 1e-9
    v_max = result.scenario.mission.max_speed_mps
    dt = np.diff(traj.timeline.times)
    for c in traj.commands:
        assert np.all(np.linalg.norm(np.diff(c.positions, axis=0), axis=1) <= v_max * dt + 1e-9)

@pytest.fixture(scope="module")
def aligned_run():
    return run_pipeline(load_scenario(SCENARIO_DIR / "bridge_alignment.json"), _config())


# =========================
# Pipeline
# =========================
def test_bridge_passes_with_alignment(aligned_run):
    assert len(aligned_run.iwps) == 1
    (plan,) = aligned_run.plans
    assert plan.shape.kind == "alignment"
    assert plan.t1_s < plan.t2_s <= plan.t3_s < plan.t4_s
    assert aligned_run.validation.ok
    assert aligned_run.exit_code == EXIT_OK

def test_aligned_run_follows_the_centroid(aligned_run):
    _assert_follows_the_centroid(aligned_run)

def test_hold_window_covers_the_gap(aligned_run):
    (plan,) = aligned_run.plans
    t = aligned_run.trajectories.timeline.times
    x = aligned_run.trajectories.centroid[:, 0]
    # centroid is level with the piers only while the line formation is held
    at_gap = np.abs(x - 60.0) < 1.0
    assert np.all((t[at_gap] >= plan.t2_s) & (t[at_gap] <= plan.t3_s))

def test_path_runs_start_to_goal(aligned_run):
    wp = aligned_run.waypoints
    assert wp[0].tolist() == [0.0, 0.0, 10.0]
    assert wp[-1].tolist() == [120.0, 0.0, 10.0]
    assert wp.shape == (FAST_PSO["waypoints"] + 2, 3)
    assert aligned_run.optimization.path.breakdown.j2 == 0.0

def test_rigid_formation_hits_the_piers():
    scenario = load_scenario(SCENARIO_DIR / "bridge_alignment.json")
    result = run_pipeline(scenario, _config(reconfig=False))
    assert result.plans == []
    assert result.active_iwps == [] and len(result.iwps) == 1
    assert result.exit_code == EXIT_VALIDATION
    assert result.validation.counts().get("clearance", 0) > 0

def test_scenario_can_switch_reconfiguration_off():
    scenario = load_scenario(SCENARIO_DIR / "bridge_alignment.json")
    scenario = scenario.model_copy(update={"reconfig": scenario.reconfig.model_copy(update={"enabled": False})})
    result = run_pipeline(scenario, _config())
    assert result.plans == []
    assert not build_report(result).reconfig

@pytest.mark.parametrize("name,kind", [("bridge_rotation", "rotation"), ("bridge_shrink", "shrink")])
def test_forced_shapes_pass_their_bridges(name, kind):
    result = run_pipeline(load_scenario(SCENARIO_DIR / f"{name}.json"), _config())
    (plan,) = result.plans
    assert plan.shape.kind == kind
    assert result.validation.ok, result.validation.counts()
    _assert_follows_the_centroid(result)

def test_rotation_narrows_the_altitude_search():
    scenario = load_scenario(SCENARIO_DIR / "bridge_rotation.json")
    result = run_pipeline(scenario, _config())
    z = result.waypoints[1:-1, 2]
    assert np.all((z >= 9.0) & (z <= 13.0))

def test_empty_corridor_has_nothing_to_schedule(empty_corridor):
    result = run_pipeline(empty_corridor, _config())
    assert result.iwps == [] and result.plans == []
    assert result.exit_code == EXIT_OK
    assert result.optimization.path.breakdown.j1 == pytest.approx(100.0, rel=1e-2)

def test_same_seed_same_plan():
    scenario = load_scenario(SCENARIO_DIR / "bridge_shrink.json")
    a = run_pipeline(scenario, _config())
    b = run_pipeline(scenario, _config())
    assert np.array_equal(a.waypoints, b.waypoints)
    assert a.plans == b.plans
    for ca, cb in zip(a.trajectories.commands, b.trajectories.commands):
        assert np.array_equal(ca.positions, cb.positions)


# =========================
# Report & artifacts
# =========================
def test_report_lists_the_passage(aligned_run):
    report = build_report(aligned_run)
    (entry,) = report.iwps
    assert entry.active and entry.scheduled
    assert entry.chosen_shape == "alignment"
    assert entry.feasible_shapes == ["alignment", "shrink"]
    assert entry.altitude_m == pytest.approx(10.0, abs=3.0)
    assert report.exit_code == 0 and report.validation.ok
    assert report.seed == FAST_PSO["rng_seed"]
    assert report.duration_s == pytest.approx(report.path_length_m / 3.0)
    assert set(report.cost) == {"j1", "j2", "j3", "jr", "total"}

def test_artifacts_round_trip(aligned_run, tmp_path):
    files = write_artifacts(aligned_run, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == [CONVERGENCE_NAME, REPORT_NAME,
                                                         "uav1.txt", "uav2.txt", "uav3.txt"]
    report = json.loads((tmp_path / REPORT_NAME).read_text(encoding="utf-8"))
    assert report["plans"][0]["shape"]["kind"] == "alignment"
    assert files["report"].endswith(REPORT_NAME)

    commands = read_trajectories(tmp_path)
    for original, loaded in zip(aligned_run.trajectories.commands, commands):
        assert loaded.uav == original.uav
        assert np.abs(loaded.positions - original.positions).max() <= 5e-7
        assert np.abs(loaded.times - original.times).max() <= 5e-7
    assert validate(commands, aligned_run.scenario).ok

    convergence = np.loadtxt(tmp_path / CONVERGENCE_NAME, ndmin=2)
    assert convergence.shape == (FAST_PSO["iterations"] + 1, 6)
    assert np.all(np.diff(convergence[:, 1]) <= 0.0)

def test_trajectory_file_needs_five_columns(tmp_path):
    p = tmp_path / "uav1.txt"
    p.write_text("0 1 2 3\n1 2 3 4\n", encoding="utf-8")
    with pytest.raises(ScenarioError, match="5 columns"):
        read_trajectory(p, 1)
    with pytest.raises(ScenarioError, match="cannot read"):
        read_trajectory(tmp_path / "missing.txt", 2)
