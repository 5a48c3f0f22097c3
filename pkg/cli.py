"""
Formation planner command line
==============================

Subcommands
-----------

``plan``
    Run the whole pipeline on a scenario file and write the three trajectory
    files, ``convergence.txt`` and ``report.json`` into ``--out``.

``validate``
    Re-check previously written ``uav1.txt`` .. ``uav3.txt`` against a scenario.

``inspect-iwps``
    List the intermediate waypoints of a scenario without optimizing.

Exit codes
----------

0 success, 1 unexpected failure, 3 scenario error, 4 optimizer infeasibility,
5 scheduling error or conflict, 6 validation violations.

Environment
-----------

``FORMATION_OUT_DIR`` sets the default of ``--out``; the ``PSO_*`` and
``COST_*`` variables set the defaults of the optimizer and cost flags (see
``utils/settings.py``).  Logging follows ``LOG_LEVEL`` / ``LOG_STYLE``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from logging_setup import init_logging
from utils import settings
from utils.cost import CostWeights
from utils.errors import EXIT_OK, EXIT_SCENARIO, EXIT_UNEXPECTED, EXIT_VALIDATION, PlannerError
from utils.formation import FormationState
from utils.iwp import IntermediateWaypoint, detect_iwps
from utils.pipeline import RunConfig, run_pipeline
from utils.report import read_trajectories, write_artifacts
from utils.scenario import load_scenario
from utils.theta_pso import PsoParams
from utils.trajectory import ValidationReport, validate

log = logging.getLogger("cli")


# =========================
# Argument parsing
# =========================
def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Reconfigurable three-UAV formation planner")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="optimize, reconfigure, generate and validate")
    plan.add_argument("--scenario", required=True)
    plan.add_argument("--seed", type=int, default=None)
    plan.add_argument("--swarm-size", type=int, default=None)
    plan.add_argument("--iterations", type=int, default=None)
    plan.add_argument("--waypoints", type=int, default=None)
    plan.add_argument("--workers", type=int, default=None)
    plan.add_argument("--segments", type=int, default=settings.COST_SEGMENTS)
    plan.add_argument("--beta1", type=float, default=settings.COST_BETA1)
    plan.add_argument("--beta2", type=float, default=settings.COST_BETA2)
    plan.add_argument("--beta3", type=float, default=settings.COST_BETA3)
    plan.add_argument("--no-reconfig", dest="reconfig", action="store_false")
    plan.add_argument("--out", default=settings.OUT_DIR)

    val = sub.add_parser("validate", help="re-validate written trajectory files")
    val.add_argument("--scenario", required=True)
    val.add_argument("--trajectories", default=settings.OUT_DIR,
                     help="directory holding uav1.txt .. uav3.txt")

    insp = sub.add_parser("inspect-iwps", help="list intermediate waypoints")
    insp.add_argument("--scenario", required=True)
    return parser

def config_from_args(args: argparse.Namespace) -> RunConfig:
    pso_over: Dict[str, Any] = {
        "rng_seed": args.seed,
        "swarm_size": args.swarm_size,
        "iterations": args.iterations,
        "waypoints": args.waypoints,
        "workers": args.workers,
    }
    pso = PsoParams(**{k: v for k, v in pso_over.items() if v is not None})
    weights = CostWeights(beta1=args.beta1, beta2=args.beta2, beta3=args.beta3)
    return RunConfig(
        command="plan", scenario_path=args.scenario, pso=pso, weights=weights,
        segments=args.segments, out_dir=args.out, reconfig=args.reconfig,
    )


# =========================
# Subcommands
# =========================
def run_plan(config: RunConfig) -> int:
    scenario = load_scenario(config.scenario_path)
    result = run_pipeline(scenario, config)
    files = write_artifacts(result, config.out_dir)
    best = result.optimization.path
    print(f"scenario {scenario.name}: cost {best.cost:.6g}, {len(result.plans)} reconfiguration(s)")
    for plan in result.plans:
        print(f"  IWP {plan.iwp_index}: {plan.shape.kind} t1={plan.t1_s:.2f} t2={plan.t2_s:.2f} "
              f"t3={plan.t3_s:.2f} t4={plan.t4_s:.2f}")
    _print_validation(result.validation)
    print(f"artifacts in {config.out_dir} ({files['report']})")
    return result.exit_code

def format_iwp(iwp: IntermediateWaypoint) -> str:
    cx, cy = iwp.center_m
    return (f"IWP {iwp.index}: center=({cx:.3f}, {cy:.3f}) gap={iwp.gap_m:.3f} m "
            f"pair={iwp.pair} shapes={','.join(iwp.feasible_shapes)}")

def run_inspect_iwps(config: RunConfig) -> List[IntermediateWaypoint]:
    scenario = load_scenario(config.scenario_path)
    base = FormationState.from_offsets(scenario.mission.offsets_array())
    iwps = detect_iwps(scenario, base.radius)
    print(f"{len(iwps)} intermediate waypoint(s)")
    for iwp in iwps:
        print("  " + format_iwp(iwp))
    return iwps

def run_validate(scenario_path: str, trajectories_dir: str) -> int:
    scenario = load_scenario(scenario_path)
    report = validate(read_trajectories(trajectories_dir), scenario)
    _print_validation(report)
    return EXIT_OK if report.ok else EXIT_VALIDATION

def _print_validation(report: ValidationReport, limit: int = 20) -> None:
    if report.ok:
        print(f"validation ok ({report.checked_steps} steps)")
        return
    counts = ", ".join(f"{k}={v}" for k, v in sorted(report.counts().items()))
    print(f"validation FAILED: {len(report.violations)} violation(s) [{counts}]")
    for v in report.violations[:limit]:
        where = f" {v.obstacle}" if v.obstacle else ""
        print(f"  t={v.time_s:.2f} {v.kind} uavs={list(v.uavs)}{where} value={v.value:.4f} limit={v.limit:.4f}")
    if len(report.violations) > limit:
        print(f"  ... {len(report.violations) - limit} more in the report")


# =========================
# Entry point
# =========================
def main(argv: Optional[List[str]] = None) -> int:
    init_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            try:
                config = config_from_args(args)
            except ValidationError as e:
                print(f"error: invalid option: {e}", file=sys.stderr)
                return EXIT_SCENARIO
            return run_plan(config)
        if args.command == "inspect-iwps":
            run_inspect_iwps(RunConfig(command="inspect-iwps", scenario_path=args.scenario))
            return EXIT_OK
        return run_validate(args.scenario, args.trajectories)
    except PlannerError as e:
        log.error("run_failed", extra={"kv": {"error": type(e).__name__, "detail": str(e)}})
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception:
        log.exception("run_crashed")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
