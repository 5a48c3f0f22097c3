"""
utils/theta_pso.py
------------------
Angle-encoded particle swarm optimizer (θ-PSO) for the formation-centroid path.

Each particle is a vector of S = 3·W phase angles θ ∈ [−π/2, π/2]. Dimensions
are interleaved per interior waypoint (x1, y1, z1, ..., xW, yW, zW) and decoded
through the sine map

    x = ½ [ (x_max − x_min)·sin θ + x_max + x_min ]

so every decoded coordinate lies inside the workspace by construction. The
candidate path is start → W decoded waypoints → goal.

Update per particle and iteration (one scalar r1, r2 ~ U(0, 1) each):

    Δθ' = w·Δθ + c1·r1·(λ_i − θ) + c2·r2·(λ_g − θ)
    θ'  = θ + Δθ'

with both Δθ' and θ' clamped componentwise into [−π/2, π/2].

Determinism
- Every particle owns a random stream spawned from ``PsoParams.rng_seed``, so the
  result does not depend on evaluation order or on ``workers``.
- Updates are synchronous: all particles move against the global best of the
  previous iteration. Bests change only on a strictly lower cost; the global
  scan runs in particle order.
- Particle 0 starts on the straight start-goal line unless
  ``PsoParams.seed_straight_line`` is off; the others start uniformly in θ.

Environment
- Defaults come from ``utils.settings`` (``PSO_*``); ``SLOW_PSO_MS`` sets the
  threshold of the ``slow_optimize`` warning.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from utils import settings
from utils.cost import CostBreakdown
from utils.errors import ContractViolationError, InfeasibleSetupError
from utils.scenario import Scenario, distance_to_obstacle

log = logging.getLogger("utils.theta_pso")

HALF_PI = math.pi / 2.0

CostFn = Callable[[np.ndarray], Any]


class PsoParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    swarm_size: int = Field(default_factory=lambda: settings.PSO_SWARM_SIZE, ge=2)
    waypoints: int = Field(default_factory=lambda: settings.PSO_WAYPOINTS, ge=1)
    iterations: int = Field(default_factory=lambda: settings.PSO_ITERATIONS, ge=1)
    inertia: float = Field(default_factory=lambda: settings.PSO_INERTIA, gt=0, le=1)
    c1: float = Field(default_factory=lambda: settings.PSO_C1, gt=0)
    c2: float = Field(default_factory=lambda: settings.PSO_C2, gt=0)
    rng_seed: int = Field(default_factory=lambda: settings.PSO_SEED, ge=0, lt=2**64)
    workers: int = Field(default_factory=lambda: settings.PSO_WORKERS, ge=1)
    # particle 0 starts on the straight start-goal line
    seed_straight_line: bool = True

    @property
    def dimensions(self) -> int:
        """S = 3·W."""
        return 3 * self.waypoints


# =========================
# Types
# =========================
@dataclass(frozen=True)
class AxisBounds:
    """Per-dimension search interval [lower_j, upper_j]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ContractViolationError("axis bounds need matching 1-D lower/upper vectors")
        if not np.all(hi > lo):
            raise ContractViolationError("every axis needs x_max > x_min")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimensions(self) -> int:
        return int(self.lower.shape[0])

    @classmethod
    def for_scenario(cls, scenario: Scenario, waypoints: int, vertical_clearance: float = 0.0) -> "AxisBounds":
        """Interleaved x/y/z bounds of ``waypoints`` interior waypoints.

        The altitude interval is narrowed by ``vertical_clearance`` on both sides so
        UAVs stacked above or below the centroid stay in the band.
        """
        ws = scenario.workspace
        z_lo = ws.z_min_m + vertical_clearance
        z_hi = ws.z_max_m - vertical_clearance
        if not z_hi > z_lo:
            raise InfeasibleSetupError(
                f"altitude band [{ws.z_min_m}, {ws.z_max_m}] cannot hold a vertical extent of {vertical_clearance:.3f} m"
            )
        lo = np.tile([ws.x_bounds_m[0], ws.y_bounds_m[0], z_lo], waypoints)
        hi = np.tile([ws.x_bounds_m[1], ws.y_bounds_m[1], z_hi], waypoints)
        return cls(lower=lo, upper=hi)


@dataclass
class Particle:
    theta: np.ndarray
    delta_theta: np.ndarray
    best_theta: np.ndarray
    best_cost: float = math.inf


@dataclass
class Swarm:
    particles: List[Particle]
    best_theta: np.ndarray
    best_cost: float = math.inf
    iteration: int = 0


@dataclass(frozen=True)
class CandidatePath:
    """Start, W interior waypoints and goal, with the cost of the whole path."""

    waypoints: np.ndarray
    cost: float
    breakdown: Optional[CostBreakdown] = None


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    best_cost: float
    breakdown: Optional[CostBreakdown] = None


@dataclass
class OptimizationResult:
    path: CandidatePath
    history: List[IterationRecord] = field(default_factory=list)
    evaluations: int = 0

    @property
    def best_costs(self) -> np.ndarray:
        return np.array([h.best_cost for h in self.history])


# =========================
# Encoding
# =========================
def _check_angles(theta: np.ndarray) -> None:
    if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > HALF_PI):
        raise ContractViolationError("phase angles must lie in [-π/2, π/2]")

def decode_vector(theta: Any, bounds: AxisBounds) -> np.ndarray:
    """Decode all S angles at once; θ = ±π/2 map exactly onto the bounds."""
    t = np.asarray(theta, dtype=float)
    if t.shape != bounds.lower.shape:
        raise ContractViolationError(f"expected {bounds.dimensions} angles, got shape {t.shape}")
    _check_angles(t)
    lo, hi = bounds.lower, bounds.upper
    x = 0.5 * ((hi - lo) * np.sin(t) + hi + lo)
    x = np.where(t == HALF_PI, hi, np.where(t == -HALF_PI, lo, x))
    return np.clip(x, lo, hi)

def decode(theta: float, bounds: AxisBounds, dim: int) -> float:
    """Coordinate of dimension ``dim`` encoded by the phase angle ``theta``."""
    t = float(theta)
    _check_angles(np.array([t]))
    lo, hi = float(bounds.lower[dim]), float(bounds.upper[dim])
    if t == HALF_PI:
        return hi
    if t == -HALF_PI:
        return lo
    return min(max(0.5 * ((hi - lo) * math.sin(t) + hi + lo), lo), hi)

def encode(x: Any, bounds: AxisBounds) -> np.ndarray:
    """Inverse of ``decode_vector``; coordinates outside the bounds are clipped."""
    lo, hi = bounds.lower, bounds.upper
    s = (2.0 * np.asarray(x, dtype=float) - hi - lo) / (hi - lo)
    return np.arcsin(np.clip(s, -1.0, 1.0))


# =========================
# Particle update
# =========================
def step(particle: Particle, personal_best: Any, global_best: Any, params: PsoParams, rng: Any) -> Particle:
    """One velocity/position update with a fresh (r1, r2) pair from ``rng``."""
    r1, r2 = rng.random(2)
    theta = particle.theta
    dtheta = (
        params.inertia * particle.delta_theta
        + params.c1 * r1 * (np.asarray(personal_best) - theta)
        + params.c2 * r2 * (np.asarray(global_best) - theta)
    )
    dtheta = np.clip(dtheta, -HALF_PI, HALF_PI)
    new_theta = np.clip(theta + dtheta, -HALF_PI, HALF_PI)
    return Particle(
        theta=new_theta,
        delta_theta=dtheta,
        best_theta=particle.best_theta,
        best_cost=particle.best_cost,
    )


# =========================
# Optimizer
# =========================
def _total(value: Any) -> tuple[float, Optional[CostBreakdown]]:
    if isinstance(value, CostBreakdown):
        return value.total, value
    return float(value), None

def _check_setup(scenario: Scenario, formation_radius: float) -> None:
    ws = scenario.workspace
    for label, p in (("start", scenario.mission.start), ("goal", scenario.mission.goal)):
        if not (ws.x_bounds_m[0] <= p.x <= ws.x_bounds_m[1] and ws.y_bounds_m[0] <= p.y <= ws.y_bounds_m[1]):
            raise InfeasibleSetupError(f"{label} ({p.x}, {p.y}) lies outside the workspace")
        for k in scenario.obstacles:
            d = distance_to_obstacle(p, k)
            if d <= 0.0 or d < formation_radius:
                name = k.name or f"at {k.center_m}"
                raise InfeasibleSetupError(
                    f"{label} is {d:.3f} m from obstacle {name}, inside the formation radius {formation_radius:.3f} m"
                )

def _straight_line(scenario: Scenario, waypoints: int) -> np.ndarray:
    a = scenario.mission.start.as_array()
    b = scenario.mission.goal.as_array()
    frac = np.arange(1, waypoints + 1) / (waypoints + 1)
    return (a[None, :] + frac[:, None] * (b - a)[None, :]).reshape(-1)

def _assemble(scenario: Scenario, interior: np.ndarray) -> np.ndarray:
    return np.vstack([
        scenario.mission.start.as_array(),
        interior.reshape(-1, 3),
        scenario.mission.goal.as_array(),
    ])

def optimize(
    scenario: Scenario,
    cost_fn: CostFn,
    params: PsoParams,
    formation_radius: float,
    bounds: Optional[AxisBounds] = None,
    on_iteration: Optional[Callable[[IterationRecord], None]] = None,
) -> OptimizationResult:
    """Minimize ``cost_fn`` over start → W waypoints → goal paths.

    ``cost_fn`` maps a ``(W+2, 3)`` waypoint array to a ``CostBreakdown`` (or a
    float). ``history[0]`` is the initial swarm; one record follows per iteration.
    Raises ``InfeasibleSetupError`` before iterating when start or goal sits
    outside the workspace or within ``formation_radius`` of an obstacle.
    """
    _check_setup(scenario, formation_radius)
    bounds = bounds or AxisBounds.for_scenario(scenario, params.waypoints)
    if bounds.dimensions != params.dimensions:
        raise ContractViolationError(f"bounds cover {bounds.dimensions} dimensions, params need {params.dimensions}")

    n, s = params.swarm_size, params.dimensions
    rngs = [np.random.default_rng(ss) for ss in np.random.SeedSequence(params.rng_seed).spawn(n)]
    log.info("pso_start", extra={"kv": {
        "swarm": n, "waypoints": params.waypoints, "iterations": params.iterations,
        "seed": params.rng_seed, "workers": params.workers,
    }})
    started = time.perf_counter()

    thetas = [r.uniform(-HALF_PI, HALF_PI, s) for r in rngs]
    if params.seed_straight_line:
        thetas[0] = encode(_straight_line(scenario, params.waypoints), bounds)
    particles = [Particle(theta=t, delta_theta=np.zeros(s), best_theta=t.copy()) for t in thetas]
    swarm = Swarm(particles=particles, best_theta=particles[0].theta.copy())
    best_breakdown: Optional[CostBreakdown] = None
    history: List[IterationRecord] = []
    evaluations = 0

    pool = ThreadPoolExecutor(max_workers=params.workers) if params.workers > 1 else None

    def evaluate(theta: np.ndarray) -> Any:
        return cost_fn(_assemble(scenario, decode_vector(theta, bounds)))

    try:
        for k in range(params.iterations + 1):
            if k > 0:
                swarm.particles = [
                    step(p, p.best_theta, swarm.best_theta, params, rngs[i])
                    for i, p in enumerate(swarm.particles)
                ]
            thetas = [p.theta for p in swarm.particles]
            results = list(pool.map(evaluate, thetas)) if pool else [evaluate(t) for t in thetas]
            evaluations += len(results)

            for p, value in zip(swarm.particles, results):
                cost, breakdown = _total(value)
                if cost < p.best_cost:
                    p.best_cost = cost
                    p.best_theta = p.theta.copy()
                if cost < swarm.best_cost:
                    swarm.best_cost = cost
                    swarm.best_theta = p.theta.copy()
                    best_breakdown = breakdown
            swarm.iteration = k

            record = IterationRecord(iteration=k, best_cost=swarm.best_cost, breakdown=best_breakdown)
            history.append(record)
            log.debug("pso_iteration", extra={"kv": {"k": k, "best": swarm.best_cost}})
            if on_iteration is not None:
                on_iteration(record)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    elapsed_ms = int((time.perf_counter() - started) * 1000)
    waypoints = _assemble(scenario, decode_vector(swarm.best_theta, bounds))
    path = CandidatePath(waypoints=waypoints, cost=swarm.best_cost, breakdown=best_breakdown)
    log.info("pso_done", extra={"kv": {
        "best": swarm.best_cost, "evaluations": evaluations, "elapsed_ms": elapsed_ms,
        **(best_breakdown.as_dict() if best_breakdown else {}),
    }})
    if elapsed_ms > settings.SLOW_PSO_MS:
        log.warning("slow_optimize", extra={"kv": {"elapsed_ms": elapsed_ms, "threshold_ms": settings.SLOW_PSO_MS}})
    return OptimizationResult(path=path, history=history, evaluations=evaluations)
