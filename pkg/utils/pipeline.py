"""
utils/pipeline.py
-----------------
End-to-end planning run for one scenario:

    detect IWPs → choose shapes → optimize centroid path → schedule windows
    → generate per-UAV commands → validate

The pipeline is shared by ``cli.py`` and the HTTP service in ``main.py``; it
never touches the filesystem (``utils.report`` writes the artifacts).

Reconfiguration can be switched off per run (``RunConfig.reconfig``) or per
scenario (``reconfig.enabled``). IWPs are detected either way so the report can
list them, but only an active run attracts the path to them, relaxes the
clearance inside their passage zones and schedules shape changes.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import logging
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from logging_setup import set_iwp_id, set_run_id
from utils import settings
from utils.cost import CostModel, CostWeights, Passage
from utils.errors import EXIT_OK, EXIT_VALIDATION, PassageMissedError
from utils.formation import (
    FormationState,
    ReconfigPlan,
    ShapeSpec,
    check_conflicts,
    horizontal_radius,
    schedule,
    shape_offsets,
    vertical_extent,
)
from utils.iwp import IntermediateWaypoint, choose_shape, detect_iwps
from utils.scenario import Scenario
from utils.theta_pso import AxisBounds, IterationRecord, OptimizationResult, PsoParams, optimize
from utils.trajectory import TrajectorySet, ValidationReport, generate_commands, validate

log = logging.getLogger("utils.pipeline")


class RunConfig(BaseModel):
    """Everything a run needs besides the scenario itself."""

    model_config = ConfigDict(frozen=True)

    command: Literal["plan", "validate", "inspect-iwps"] = "plan"
    scenario_path: Optional[str] = None
    pso: PsoParams = Field(default_factory=PsoParams)
    weights: CostWeights = Field(default_factory=CostWeights)
    segments: int = Field(default_factory=lambda: settings.COST_SEGMENTS, ge=1)
    timestep_s: float = Field(default_factory=lambda: settings.TRAJ_TIMESTEP_S, gt=0)
    out_dir: str = Field(default_factory=lambda: settings.OUT_DIR)
    reconfig: bool = True


@dataclass
class PlanResult:
    scenario: Scenario
    config: RunConfig
    run_id: str
    iwps: List[IntermediateWaypoint]
    active_iwps: List[IntermediateWaypoint]
    shapes: Dict[int, ShapeSpec]
    plans: List[ReconfigPlan]
    optimization: OptimizationResult
    trajectories: TrajectorySet
    validation: ValidationReport
    skipped_iwps: List[int] = field(default_factory=list)

    @property
    def waypoints(self) -> np.ndarray:
        return self.optimization.path.waypoints

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.validation.ok else EXIT_VALIDATION


# =========================
# Helpers
# =========================
def passages_for(iwps: List[IntermediateWaypoint], shapes: Dict[int, ShapeSpec],
                 base: FormationState, r_q: float) -> List[Passage]:
    """Relaxed safe radius of each active IWP's obstacle pair, sized for its shape."""
    out = []
    for iwp in iwps:
        h = horizontal_radius(shape_offsets(shapes[iwp.index], base))
        out.append(Passage(center_m=iwp.center_m, zone_radius_m=iwp.zone_radius_m,
                           pair=iwp.pair, body_radius_m=h + r_q))
    return out

def nearest_waypoint(waypoints: np.ndarray, iwp: IntermediateWaypoint) -> int:
    """Index of the path waypoint horizontally closest to the IWP centre."""
    d = np.hypot(waypoints[:, 0] - iwp.center_m[0], waypoints[:, 1] - iwp.center_m[1])
    return int(np.argmin(d))


# =========================
# Run
# =========================
def run_pipeline(
    scenario: Scenario,
    config: RunConfig,
    on_iteration: Optional[Callable[[IterationRecord], None]] = None,
) -> PlanResult:
    run_id = uuid.uuid4().hex[:12]
    set_run_id(run_id)
    t0 = time.perf_counter()
    try:
        mission = scenario.mission
        base = FormationState.from_offsets(mission.offsets_array())
        r_q = scenario.safety.r_q_m

        iwps = detect_iwps(scenario, base.radius)
        active = iwps if (config.reconfig and scenario.reconfig.enabled) else []
        shapes = {iwp.index: choose_shape(iwp, scenario.reconfig) for iwp in active}
        log.info("pipeline_iwps", extra={"kv": {
            "detected": len(iwps), "active": len(active),
            "shapes": {i: s.kind for i, s in shapes.items()},
        }})

        passages = passages_for(active, shapes, base, r_q)
        clearance = max((vertical_extent(shape_offsets(s, base)) for s in shapes.values()), default=0.0)
        clearance = max(clearance, vertical_extent(base.offsets))
        bounds = AxisBounds.for_scenario(scenario, config.pso.waypoints, clearance)
        cost = CostModel(scenario, config.weights, active, segments=config.segments, passages=passages)

        optimization = optimize(
            scenario, cost, config.pso, base.swept_radius(r_q), bounds=bounds, on_iteration=on_iteration,
        )
        path = optimization.path.waypoints

        plans: List[ReconfigPlan] = []
        skipped: List[int] = []
        for iwp in active:
            set_iwp_id(f"iwp-{iwp.index}")
            try:
                plans.append(schedule(path, iwp, shapes[iwp.index], mission.nominal_speed_mps, scenario.reconfig))
            except PassageMissedError as e:
                skipped.append(iwp.index)
                log.warning("iwp_off_path", extra={"kv": {"iwp": iwp.index, "error": str(e)}})
            finally:
                set_iwp_id(None)
        plans = check_conflicts(plans)

        trajectories = generate_commands(path, plans, scenario, dt=config.timestep_s)
        report = validate(trajectories.commands, scenario)

        result = PlanResult(
            scenario=scenario, config=config, run_id=run_id,
            iwps=iwps, active_iwps=active, shapes=shapes, plans=plans,
            optimization=optimization, trajectories=trajectories, validation=report,
            skipped_iwps=skipped,
        )
        log.info("pipeline_done", extra={"kv": {
            "elapsed_ms": int((time.perf_counter() - t0) * 1000),
            "cost": optimization.path.cost, "plans": len(plans),
            "violations": len(report.violations), "exit_code": result.exit_code,
        }})
        return result
    finally:
        set_run_id(None)
