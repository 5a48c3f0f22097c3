"""
Formation Planner API
=====================

FastAPI front end of the planner. Scenarios are posted as JSON documents in
the same format as the files under ``scenarios/``.

* ``GET /`` – Liveness check.
* ``GET /health`` – Effective optimizer, cost and logging defaults.
* ``POST /iwps`` – Detect intermediate waypoints of a scenario (no optimization).
* ``POST /plan`` – Run the whole pipeline and return the run report.  The
  response carries the report only; trajectory files are written by the CLI.

Errors: an invalid scenario answers 422, any other planner failure (infeasible
setup, scheduling conflict) answers 409.  A plan with validation violations is
still a 200 whose report has ``exit_code`` 6.

Planning is CPU bound and runs in FastAPI's threadpool; ``PSO_WORKERS``
controls the threads used inside one optimization.
"""

from __future__ import annotations

import logging
import os
import time
import uuid
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from logging_setup import init_logging, set_run_id
from utils import settings
from utils.cost import CostWeights
from utils.errors import PlannerError, ScenarioError
from utils.formation import FormationState
from utils.iwp import IntermediateWaypoint, detect_iwps
from utils.pipeline import RunConfig, run_pipeline
from utils.report import RunReport, build_report
from utils.scenario import scenario_from_dict
from utils.theta_pso import PsoParams

init_logging()
log = logging.getLogger("main")

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

app = FastAPI(title="Formation Planner API")


class IwpRequest(BaseModel):
    scenario: Dict[str, Any]


class IwpResponse(BaseModel):
    ok: bool = True
    count: int
    iwps: List[IntermediateWaypoint]


class PlanRequest(BaseModel):
    scenario: Dict[str, Any]
    pso: Optional[PsoParams] = None
    weights: Optional[CostWeights] = None
    segments: Optional[int] = Field(default=None, ge=1)
    reconfig: bool = True


def _scenario(raw: Dict[str, Any], source: str):
    try:
        return scenario_from_dict(raw, source=source)
    except ScenarioError as e:
        raise HTTPException(status_code=422, detail=str(e))


# ---------------------------------------------------------------------------
# Root and health endpoints
# ---------------------------------------------------------------------------
@app.get("/")
def root() -> Dict[str, str]:
    return {"message": "Formation Planner API is running"}

@app.get("/health")
def health() -> Dict[str, Any]:
    """Effective defaults of the optimizer and the cost function."""
    return {
        "ok": True,
        "log_level": LOG_LEVEL,
        "pso": PsoParams().model_dump(),
        "weights": CostWeights().model_dump(),
        "segments": settings.COST_SEGMENTS,
        "timestep_s": settings.TRAJ_TIMESTEP_S,
        "slow_ms": {"pso": settings.SLOW_PSO_MS},
    }


# ---------------------------------------------------------------------------
# IWP inspection
# ---------------------------------------------------------------------------
@app.post("/iwps", response_model=IwpResponse)
def inspect_iwps(payload: IwpRequest) -> IwpResponse:
    req_id = uuid.uuid4().hex
    set_run_id(req_id)
    try:
        scenario = _scenario(payload.scenario, f"request {req_id[:8]}")
        base = FormationState.from_offsets(scenario.mission.offsets_array())
        iwps = detect_iwps(scenario, base.radius)
        log.info("iwps_endpoint_complete", extra={"kv": {"scenario": scenario.name, "count": len(iwps)}})
        return IwpResponse(count=len(iwps), iwps=iwps)
    finally:
        set_run_id(None)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------
@app.post("/plan", response_model=RunReport)
def plan(payload: PlanRequest) -> RunReport:
    """Optimize, reconfigure, generate and validate; returns the run report."""
    scenario = _scenario(payload.scenario, "request")
    config = RunConfig(
        pso=payload.pso or PsoParams(),
        weights=payload.weights or CostWeights(),
        segments=payload.segments or settings.COST_SEGMENTS,
        reconfig=payload.reconfig,
    )
    t0 = time.perf_counter()
    try:
        result = run_pipeline(scenario, config)
    except PlannerError as e:
        log.error("plan_failed", extra={"kv": {"error": type(e).__name__, "detail": str(e)}})
        raise HTTPException(status_code=409, detail=str(e))
    elapsed_ms = int((time.perf_counter() - t0) * 1000)
    if elapsed_ms > settings.SLOW_PSO_MS:
        log.warning("slow_plan_request", extra={"kv": {"elapsed_ms": elapsed_ms}})
    log.info("plan_endpoint_complete", extra={"kv": {
        "scenario": scenario.name, "elapsed_ms": elapsed_ms, "exit_code": result.exit_code,
    }})
    return build_report(result)
