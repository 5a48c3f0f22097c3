"""Angle-encoded PSO: decoding, the particle update and whole optimizer runs."""

from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import FAST_PSO
from utils.cost import CostModel, CostWeights, FormationSafeRadius, discretize
from utils.errors import ContractViolationError, InfeasibleSetupError
from utils.formation import FormationState
from utils.scenario import distance_to_axis
from utils.theta_pso import (
    HALF_PI,
    AxisBounds,
    Particle,
    PsoParams,
    decode,
    decode_vector,
    encode,
    optimize,
    step,
)


class _FixedRng:
    """Stands in for a Generator; always returns the same r1, r2."""

    def __init__(self, r1: float, r2: float):
        self.values = np.array([r1, r2])

    def random(self, n: int) -> np.ndarray:
        return self.values[:n].copy()


def _bounds(lo, hi) -> AxisBounds:
    return AxisBounds(lower=np.array([lo], dtype=float), upper=np.array([hi], dtype=float))

def _particle(theta, dtheta=None) -> Particle:
    t = np.asarray(theta, dtype=float)
    return Particle(theta=t, delta_theta=np.zeros_like(t) if dtheta is None else np.asarray(dtheta, dtype=float),
                    best_theta=t.copy())

def _formation_radius(scenario) -> float:
    base = FormationState.from_offsets(scenario.mission.offsets_array())
    return base.swept_radius(scenario.safety.r_q_m)


# =========================
# Decode / encode
# =========================
def test_decode_midpoint_and_bounds():
    b = _bounds(0.0, 100.0)
    assert decode(0.0, b, 0) == 50.0
    assert decode(HALF_PI, b, 0) == 100.0
    assert decode(-HALF_PI, b, 0) == 0.0

def test_decode_negative_sixth():
    assert decode(-math.pi / 6, _bounds(-10.0, 10.0), 0) == pytest.approx(-5.0, abs=1e-12)

def test_decode_identity_exact_on_random_bounds():
    rng = np.random.default_rng(0)
    lo = rng.uniform(-500, 500, 1000)
    hi = lo + rng.uniform(1e-3, 300, 1000)
    b = AxisBounds(lower=lo, upper=hi)
    assert np.array_equal(decode_vector(np.full(1000, HALF_PI), b), hi)
    assert np.array_equal(decode_vector(np.full(1000, -HALF_PI), b), lo)
    assert np.array_equal(decode_vector(np.zeros(1000), b), (hi + lo) / 2)

def test_decode_stays_in_bounds_for_a_million_angles():
    rng = np.random.default_rng(1)
    n = 1_000_000
    lo = rng.uniform(-100, 100, n)
    hi = lo + rng.uniform(1e-6, 50, n)
    x = decode_vector(rng.uniform(-HALF_PI, HALF_PI, n), AxisBounds(lower=lo, upper=hi))
    assert np.all(x >= lo) and np.all(x <= hi)

def test_decode_rejects_out_of_range_angle():
    with pytest.raises(ContractViolationError):
        decode(1.7, _bounds(0.0, 1.0), 0)
    with pytest.raises(ContractViolationError):
        decode_vector(np.array([0.1, -2.0]), AxisBounds(lower=np.zeros(2), upper=np.ones(2)))

def test_encode_inverts_decode():
    rng = np.random.default_rng(2)
    b = AxisBounds(lower=np.full(30, -20.0), upper=np.full(30, 80.0))
    x = rng.uniform(-20, 80, 30)
    assert np.allclose(decode_vector(encode(x, b), b), x, atol=1e-9)

def test_axis_bounds_reject_degenerate_axis():
    with pytest.raises(ContractViolationError):
        AxisBounds(lower=np.array([0.0, 5.0]), upper=np.array([1.0, 5.0]))


# =========================
# Particle update
# =========================
def test_step_fixed_point():
    p = _particle([0.3, -0.7, 1.1])
    params = PsoParams(**FAST_PSO)
    out = step(p, p.theta, p.theta, params, np.random.default_rng(5))
    assert np.array_equal(out.theta, p.theta)
    assert np.array_equal(out.delta_theta, np.zeros(3))

def test_step_social_pull_by_hand():
    params = PsoParams.model_construct(inertia=0.0, c1=0.0, c2=1.0)
    p = _particle([0.0])
    out = step(p, p.theta, np.array([math.pi / 4]), params, _FixedRng(1.0, 1.0))
    assert out.theta[0] == pytest.approx(math.pi / 4)

def test_step_uses_independent_draws():
    params = PsoParams.model_construct(inertia=0.0, c1=1.0, c2=1.0)
    p = _particle([0.0])
    # r1 = 1 weights the personal best, r2 = 0 silences the global best
    out = step(p, np.array([0.2]), np.array([-0.9]), params, _FixedRng(1.0, 0.0))
    assert out.theta[0] == pytest.approx(0.2)

def test_step_clamps_position_and_velocity():
    params = PsoParams.model_construct(inertia=1.0, c1=1.0, c2=1.0)
    p = _particle([1.5], dtheta=[0.3])
    out = step(p, p.theta, p.theta, params, _FixedRng(0.5, 0.5))
    assert out.theta[0] == HALF_PI
    big = _particle([-1.5], dtheta=[-1.5])
    out = step(big, np.array([1.5]), np.array([1.5]), params, _FixedRng(1.0, 1.0))
    assert abs(out.delta_theta[0]) <= HALF_PI
    assert -HALF_PI <= out.theta[0] <= HALF_PI

def test_step_keeps_every_angle_in_box():
    rng = np.random.default_rng(9)
    params = PsoParams(inertia=0.9, c1=2.5, c2=2.5, swarm_size=2, waypoints=4, iterations=1)
    p = _particle(rng.uniform(-HALF_PI, HALF_PI, 12), rng.uniform(-HALF_PI, HALF_PI, 12))
    for _ in range(500):
        p = step(p, rng.uniform(-HALF_PI, HALF_PI, 12), rng.uniform(-HALF_PI, HALF_PI, 12), params, rng)
        assert np.all(np.abs(p.theta) <= HALF_PI)
        assert np.all(np.abs(p.delta_theta) <= HALF_PI)


# =========================
# Parameters & bounds
# =========================
def test_params_invariants():
    assert PsoParams(waypoints=7, swarm_size=10, iterations=1).dimensions == 21
    for bad in ({"swarm_size": 1}, {"waypoints": 0}, {"iterations": 0}, {"inertia": 0.0},
                {"inertia": 1.2}, {"c1": 0.0}, {"c2": -1.0}, {"rng_seed": -1}):
        with pytest.raises(ValidationError):
            PsoParams(**bad)

def test_axis_bounds_interleave_xyz(bridge_alignment):
    b = AxisBounds.for_scenario(bridge_alignment, 3, vertical_clearance=1.2)
    assert b.dimensions == 9
    assert b.lower[:3].tolist() == pytest.approx([0.0, -20.0, 8.2])
    assert b.upper[6:].tolist() == pytest.approx([120.0, 20.0, 13.8])

def test_axis_bounds_reject_collapsed_band(bridge_alignment):
    with pytest.raises(InfeasibleSetupError):
        AxisBounds.for_scenario(bridge_alignment, 2, vertical_clearance=4.0)


# =========================
# Optimizer
# =========================
def test_empty_corridor_finds_the_straight_line(empty_corridor, fast_pso):
    cost = CostModel(empty_corridor, CostWeights(), segments=60)
    result = optimize(empty_corridor, cost, fast_pso, _formation_radius(empty_corridor))
    best = result.path
    assert best.breakdown.j1 == pytest.approx(100.0, rel=1e-2)
    assert best.breakdown.j2 == 0.0 and best.breakdown.j3 == 0.0
    assert best.waypoints.shape == (fast_pso.waypoints + 2, 3)
    assert best.waypoints[0].tolist() == [0.0, 0.0, 10.0]
    assert best.waypoints[-1].tolist() == [100.0, 0.0, 10.0]

def test_unseeded_swarm_improves_on_its_start(empty_corridor):
    params = PsoParams(swarm_size=30, waypoints=3, iterations=100, rng_seed=5, seed_straight_line=False)
    cost = CostModel(empty_corridor, CostWeights(), segments=60)
    result = optimize(empty_corridor, cost, params, _formation_radius(empty_corridor))
    start = result.history[0]
    assert result.path.cost < start.best_cost
    # at least half of the initial detour over the 100 m line is flown off
    assert result.path.breakdown.j1 - 100.0 <= 0.5 * (start.breakdown.j1 - 100.0)

def test_straight_line_seed_is_particle_zero(empty_corridor, fast_pso):
    cost = CostModel(empty_corridor, CostWeights(), segments=60)
    seeded = optimize(empty_corridor, cost, fast_pso.model_copy(update={"iterations": 1}), 1.0)
    assert seeded.history[0].breakdown.j1 == pytest.approx(100.0)
    unseeded = fast_pso.model_copy(update={"iterations": 1, "seed_straight_line": False})
    assert optimize(empty_corridor, cost, unseeded, 1.0).history[0].breakdown.j1 > 100.0 + 1e-6

def test_history_starts_with_initial_swarm(empty_corridor, fast_pso):
    seen = []
    cost = CostModel(empty_corridor, CostWeights(), segments=40)
    result = optimize(empty_corridor, cost, fast_pso, 1.0, on_iteration=seen.append)
    assert [h.iteration for h in result.history] == list(range(fast_pso.iterations + 1))
    assert seen == result.history
    assert result.evaluations == fast_pso.swarm_size * (fast_pso.iterations + 1)
    assert result.path.cost == result.history[-1].best_cost

def test_obstacle_blocking_the_line_is_cleared(make_scenario):
    scenario = make_scenario(obstacles=[{"name": "mast", "center_m": [50.0, 0.0], "radius_m": 2.0, "height_m": 30.0}])
    params = PsoParams(swarm_size=50, waypoints=3, iterations=150, rng_seed=4)
    cost = CostModel(scenario, CostWeights(), segments=60)
    result = optimize(scenario, cost, params, _formation_radius(scenario))
    # the straight line runs through the mast, so the swarm has to find the detour itself
    line = np.linspace(scenario.mission.start.as_array(), scenario.mission.goal.as_array(), params.waypoints + 2)
    assert cost(line).j2 > 0.0
    assert result.path.cost < cost(line).total
    assert result.path.cost < result.history[0].best_cost
    assert result.path.breakdown.j2 == 0.0
    radius = FormationSafeRadius.for_scenario(scenario)
    mids = discretize(result.path.waypoints, 60).midpoints
    assert np.all(distance_to_axis(mids, scenario.obstacles[0]) >= radius(mids, 0))

def test_best_cost_never_increases(empty_corridor, bridge_alignment, bridge_shrink):
    for scenario in (empty_corridor, bridge_alignment, bridge_shrink):
        cost = CostModel(scenario, CostWeights(), segments=40)
        for seed in range(5):
            params = PsoParams(swarm_size=10, waypoints=4, iterations=15, rng_seed=seed)
            costs = optimize(scenario, cost, params, 1.0).best_costs
            assert np.all(np.diff(costs) <= 0.0)

@pytest.mark.slow
def test_best_cost_never_increases_many_seeds(empty_corridor, bridge_alignment, bridge_rotation):
    for scenario in (empty_corridor, bridge_alignment, bridge_rotation):
        cost = CostModel(scenario, CostWeights(), segments=60)
        for seed in range(50):
            params = PsoParams(swarm_size=30, waypoints=7, iterations=40, rng_seed=seed)
            assert np.all(np.diff(optimize(scenario, cost, params, 1.0).best_costs) <= 0.0)

def test_same_seed_same_path(bridge_alignment):
    params = PsoParams(swarm_size=2, waypoints=7, iterations=1, rng_seed=123)
    cost = CostModel(bridge_alignment, CostWeights(), segments=50)
    a = optimize(bridge_alignment, cost, params, 1.0)
    b = optimize(bridge_alignment, cost, params, 1.0)
    assert np.array_equal(a.path.waypoints, b.path.waypoints)
    assert a.path.cost == b.path.cost

def test_thread_count_does_not_change_the_result(bridge_alignment):
    cost = CostModel(bridge_alignment, CostWeights(), segments=40)
    serial = optimize(bridge_alignment, cost, PsoParams(**{**FAST_PSO, "workers": 1}), 1.0)
    threaded = optimize(bridge_alignment, cost, PsoParams(**{**FAST_PSO, "workers": 4}), 1.0)
    assert np.array_equal(serial.path.waypoints, threaded.path.waypoints)
    assert np.array_equal(serial.best_costs, threaded.best_costs)

def test_start_inside_obstacle_is_infeasible(make_scenario, fast_pso):
    scenario = make_scenario(obstacles=[{"center_m": [1.0, 0.0], "radius_m": 2.0, "height_m": 30.0}])
    with pytest.raises(InfeasibleSetupError, match="start"):
        optimize(scenario, CostModel(scenario, CostWeights(), segments=40), fast_pso, 1.0)

def test_goal_too_close_for_the_formation_is_infeasible(make_scenario, fast_pso):
    scenario = make_scenario(obstacles=[{"center_m": [100.0, 3.5], "radius_m": 2.0, "height_m": 30.0}])
    with pytest.raises(InfeasibleSetupError, match="goal"):
        optimize(scenario, CostModel(scenario, CostWeights(), segments=40), fast_pso, 2.586)

def test_start_outside_workspace_is_infeasible(make_scenario, fast_pso):
    scenario = make_scenario(mission={"start": [-5.0, 0.0, 10.0]})
    with pytest.raises(InfeasibleSetupError, match="outside the workspace"):
        optimize(scenario, CostModel(scenario, CostWeights(), segments=40), fast_pso, 1.0)

@pytest.mark.slow
def test_field_parameters_on_empty_corridor(empty_corridor):
    cost = CostModel(empty_corridor, CostWeights())
    within = 0
    for seed in range(20):
        params = PsoParams(swarm_size=100, waypoints=7, iterations=150, rng_seed=seed)
        best = optimize(empty_corridor, cost, params, _formation_radius(empty_corridor)).path
        within += abs(best.breakdown.j1 - 100.0) <= 1.0
    assert within >= 19
