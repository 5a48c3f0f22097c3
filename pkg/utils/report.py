"""
utils/report.py
---------------
Run artifacts on disk.

Files written by ``write_artifacts`` into the output directory:

* ``uav1.txt`` .. ``uav3.txt``: one command row per timestep, columns
  ``t x y z v`` (seconds, meters, m/s), fixed ``%.6f`` formatting.
* ``convergence.txt``: ``iteration best_cost j1 j2 j3 jr`` per optimizer
  iteration (iteration 0 is the initial swarm).
* ``report.json``: chosen IWPs and shapes, phase times, cost breakdown, path
  waypoints, validation violations and speed warnings.

No wall-clock values go into any file, so the same config and seed reproduce
the artifacts byte for byte.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from utils.errors import ScenarioError
from utils.formation import ReconfigPlan, arc_lengths, interpolate_path
from utils.pipeline import PlanResult, nearest_waypoint
from utils.theta_pso import IterationRecord
from utils.trajectory import SpeedWarning, TrajectoryCommand, ValidationReport

log = logging.getLogger("utils.report")

TRAJECTORY_HEADER = "t x y z v"
CONVERGENCE_HEADER = "iteration best_cost j1 j2 j3 jr"
REPORT_NAME = "report.json"
CONVERGENCE_NAME = "convergence.txt"


def trajectory_filename(uav: int) -> str:
    return f"uav{uav}.txt"


# =========================
# Report model
# =========================
class IwpEntry(BaseModel):
    index: int
    center_m: Tuple[float, float]
    gap_m: float
    pair: Tuple[int, int]
    feasible_shapes: List[str]
    active: bool
    scheduled: bool
    chosen_shape: Optional[str] = None
    nearest_waypoint: Optional[int] = None
    altitude_m: Optional[float] = None


class RunReport(BaseModel):
    scenario: str
    seed: int
    swarm_size: int
    waypoints_count: int
    iterations: int
    segments: int
    reconfig: bool
    iwps: List[IwpEntry]
    plans: List[ReconfigPlan]
    cost: Dict[str, float]
    path_m: List[Tuple[float, float, float]]
    path_length_m: float
    duration_s: float
    validation: ValidationReport
    speed_warnings: List[SpeedWarning]
    exit_code: int


def _altitude_at(waypoints: np.ndarray, center: Tuple[float, float]) -> float:
    """Centroid altitude where the path passes closest to ``center``."""
    cum = arc_lengths(waypoints)
    s = np.linspace(0.0, float(cum[-1]), 2001)
    pts = interpolate_path(waypoints, cum, s)
    i = int(np.argmin(np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])))
    return float(pts[i, 2])

def build_report(result: PlanResult) -> RunReport:
    wp = result.waypoints
    scheduled = {p.iwp_index for p in result.plans}
    active = {i.index for i in result.active_iwps}
    entries = []
    for iwp in result.iwps:
        shape = result.shapes.get(iwp.index)
        entries.append(IwpEntry(
            index=iwp.index, center_m=iwp.center_m, gap_m=iwp.gap_m, pair=iwp.pair,
            feasible_shapes=list(iwp.feasible_shapes),
            active=iwp.index in active,
            scheduled=iwp.index in scheduled,
            chosen_shape=shape.kind if shape else None,
            nearest_waypoint=nearest_waypoint(wp, iwp),
            altitude_m=_altitude_at(wp, iwp.center_m),
        ))
    best = result.optimization.path
    cost = best.breakdown.as_dict() if best.breakdown else {"total": best.cost}
    cfg = result.config
    return RunReport(
        scenario=result.scenario.name,
        seed=cfg.pso.rng_seed,
        swarm_size=cfg.pso.swarm_size,
        waypoints_count=cfg.pso.waypoints,
        iterations=cfg.pso.iterations,
        segments=cfg.segments,
        reconfig=cfg.reconfig and result.scenario.reconfig.enabled,
        iwps=entries,
        plans=result.plans,
        cost=cost,
        path_m=[tuple(float(v) for v in row) for row in wp],
        path_length_m=float(arc_lengths(wp)[-1]),
        duration_s=float(result.trajectories.timeline.times[-1]),
        validation=result.validation,
        speed_warnings=result.trajectories.warnings,
        exit_code=result.exit_code,
    )


# =========================
# Trajectory files
# =========================
def write_trajectory(command: TrajectoryCommand, path: str | Path) -> Path:
    p = Path(path)
    table = np.column_stack([command.times, command.positions, command.speeds])
    np.savetxt(p, table, fmt="%.6f", header=TRAJECTORY_HEADER)
    return p

def read_trajectory(path: str | Path, uav: int) -> TrajectoryCommand:
    """Load a ``t x y z v`` file written by ``write_trajectory``."""
    p = Path(path)
    try:
        table = np.loadtxt(p, ndmin=2)
    except (OSError, ValueError) as e:
        raise ScenarioError(f"cannot read trajectory {p}: {e}") from e
    if table.shape[1] != 5:
        raise ScenarioError(f"trajectory {p} needs 5 columns ({TRAJECTORY_HEADER}), found {table.shape[1]}")
    return TrajectoryCommand(uav=uav, times=table[:, 0], positions=table[:, 1:4], speeds=table[:, 4])

def read_trajectories(directory: str | Path) -> List[TrajectoryCommand]:
    d = Path(directory)
    return [read_trajectory(d / trajectory_filename(n), n) for n in (1, 2, 3)]

def write_convergence(history: Sequence[IterationRecord], path: str | Path) -> Path:
    p = Path(path)
    rows = []
    for h in history:
        b = h.breakdown
        terms = (b.j1, b.j2, b.j3, b.jr) if b else (np.nan,) * 4
        rows.append((h.iteration, h.best_cost, *terms))
    np.savetxt(p, np.array(rows, dtype=float).reshape(-1, 6),
               fmt=["%d", "%.9g", "%.9g", "%.9g", "%.9g", "%.9g"], header=CONVERGENCE_HEADER)
    return p


# =========================
# All artifacts
# =========================
def write_artifacts(result: PlanResult, out_dir: str | Path) -> Dict[str, Any]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Any] = {
        "trajectories": [str(write_trajectory(c, out / trajectory_filename(c.uav)))
                         for c in result.trajectories.commands],
        "convergence": str(write_convergence(result.optimization.history, out / CONVERGENCE_NAME)),
    }
    report_path = out / REPORT_NAME
    report_path.write_text(build_report(result).model_dump_json(indent=2), encoding="utf-8")
    written["report"] = str(report_path)
    log.info("artifacts_written", extra={"kv": {"out_dir": str(out), "files": 5}})
    return written
