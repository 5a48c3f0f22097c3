"""
utils/cost.py
-------------
Composite objective J = β1·J1 + β2·J2 + β3·J3 + J_R of a formation-centroid path.

Terms (all evaluated on the path resampled into L straight segments)
- J1: path length.
- J2: obstacle violation in [0, 1]; per segment midpoint and obstacle,
  max(1 − d/r^S, 0) averaged over L·K. d is the distance to the obstacle's axis
  segment and r^S the obstacle radius grown by the formation's swept radius and
  the clearance margin.
- J3: altitude band penalty, summed over midpoints; a midpoint on or below the
  ground costs ``GROUND_PENALTY``.
- J_R: mean horizontal distance from the midpoints to the intermediate waypoints.

``CostModel`` bundles a scenario, weights and IWP passages into the callable the
optimizer evaluates once per particle and iteration.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils import settings
from utils.errors import ContractViolationError
from utils.formation import FormationState
from utils.scenario import CylinderObstacle, Scenario, distance_to_axis

log = logging.getLogger("utils.cost")

# Finite stand-in for "infinite" cost of a midpoint at or below ground level.
GROUND_PENALTY = 1.0e9

SafeRadiusFn = Callable[[np.ndarray, int], Any]


class CostWeights(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    beta1: float = Field(default_factory=lambda: settings.COST_BETA1, ge=0)
    beta2: float = Field(default_factory=lambda: settings.COST_BETA2, ge=0)
    beta3: float = Field(default_factory=lambda: settings.COST_BETA3, ge=0)
    beta_r: float = Field(default_factory=lambda: settings.COST_BETA_R, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "CostWeights":
        if not (self.beta1 > 0 or self.beta2 > 0 or self.beta3 > 0):
            raise ValueError("at least one of beta1, beta2, beta3 must be positive")
        return self


@dataclass(frozen=True)
class DiscretizedPath:
    """Nodes P_0..P_L of a path resampled into L segments."""

    nodes: np.ndarray

    @property
    def segments(self) -> int:
        return int(self.nodes.shape[0] - 1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])


@dataclass(frozen=True)
class CostBreakdown:
    j1: float
    j2: float
    j3: float
    jr: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"j1": self.j1, "j2": self.j2, "j3": self.j3, "jr": self.jr, "total": self.total}


@dataclass(frozen=True)
class Passage:
    """Relaxed safe radius for an IWP's obstacle pair inside its passage zone."""

    center_m: tuple[float, float]
    zone_radius_m: float
    pair: tuple[int, int]
    body_radius_m: float  # shape's horizontal radius + r_Q


# =========================
# Discretization
# =========================
def _control_points(path: Any) -> np.ndarray:
    pts = getattr(path, "waypoints", path)
    return np.asarray(pts, dtype=float)

def discretize(path: Any, segments: int) -> DiscretizedPath:
    """Resample the piecewise-linear path into ``segments`` equal arc-length steps."""
    pts = _control_points(path)
    # L ≥ W+1: at least one segment per control-polygon leg
    if segments < pts.shape[0] - 1:
        raise ContractViolationError(
            f"segment count {segments} is below the {pts.shape[0] - 1} legs of the control path"
        )
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0.0:
        raise ContractViolationError("path has zero length")
    s = np.linspace(0.0, cum[-1], segments + 1)
    nodes = np.stack([np.interp(s, cum, pts[:, i]) for i in range(3)], axis=-1)
    return DiscretizedPath(nodes=nodes)


# =========================
# Cost terms
# =========================
def j1_length(d: DiscretizedPath) -> float:
    return float(np.sum(np.linalg.norm(np.diff(d.nodes, axis=0), axis=1)))

def j2_violation(d: DiscretizedPath, obstacles: Sequence[CylinderObstacle], safe_radius_fn: SafeRadiusFn) -> float:
    """Mean over segments and obstacles of max(1 − d_{l,k}/r^S_{l,k}, 0)."""
    k_count = len(obstacles)
    if k_count == 0:
        return 0.0
    mids = d.midpoints
    total = 0.0
    for k, obstacle in enumerate(obstacles):
        dist = distance_to_axis(mids, obstacle)
        r_s = np.broadcast_to(np.asarray(safe_radius_fn(mids, k), dtype=float), dist.shape)
        total += float(np.sum(np.maximum(1.0 - dist / r_s, 0.0)))
    return total / (d.segments * k_count)

def j3_altitude(d: DiscretizedPath, z_min: float, z_max: float) -> float:
    z = d.midpoints[:, 2]
    delta = np.where(
        z > z_max, z - z_max,
        np.where(z >= z_min, 0.0, np.where(z > 0.0, z_min - z, GROUND_PENALTY)),
    )
    return float(np.sum(delta))

def _iwp_centers(iwps: Any) -> np.ndarray:
    if iwps is None:
        return np.zeros((0, 2))
    centers = [getattr(w, "center_m", w) for w in iwps]
    return np.asarray(centers, dtype=float).reshape(-1, 2)

def jr_iwp_attraction(d: DiscretizedPath, iwps: Any) -> float:
    centers = _iwp_centers(iwps)
    if centers.shape[0] == 0:
        return 0.0
    mids = d.midpoints[:, None, :2]
    dist = np.linalg.norm(mids - centers[None, :, :], axis=-1)
    return float(np.sum(dist) / (d.segments * centers.shape[0]))


# =========================
# Safe radius r^S_{l,k}
# =========================
class FormationSafeRadius:
    """r^S = r_k + (r_F + r_Q) + margin, relaxed inside IWP passage zones."""

    def __init__(
        self,
        obstacles: Sequence[CylinderObstacle],
        swept_radius_m: float,
        margin_m: float,
        passages: Sequence[Passage] = (),
    ):
        self.obstacles = list(obstacles)
        self.swept_radius_m = float(swept_radius_m)
        self.margin_m = float(margin_m)
        self.passages = list(passages)

    def __call__(self, midpoints: np.ndarray, k: int) -> np.ndarray:
        r_k = self.obstacles[k].radius_m
        r_s = np.full(midpoints.shape[0], r_k + self.swept_radius_m + self.margin_m)
        for p in self.passages:
            if k not in p.pair:
                continue
            inside = np.hypot(midpoints[:, 0] - p.center_m[0], midpoints[:, 1] - p.center_m[1]) <= p.zone_radius_m
            r_s[inside] = r_k + p.body_radius_m + self.margin_m
        return r_s

    @classmethod
    def for_scenario(cls, scenario: Scenario, passages: Sequence[Passage] = ()) -> "FormationSafeRadius":
        base = FormationState.from_offsets(scenario.mission.offsets_array())
        return cls(
            scenario.obstacles,
            base.swept_radius(scenario.safety.r_q_m),
            scenario.safety.clearance_margin_m,
            passages,
        )


# =========================
# Totals
# =========================
def total_cost(
    path: Any,
    scenario: Scenario,
    weights: CostWeights,
    iwps: Any = (),
    *,
    segments: Optional[int] = None,
    safe_radius_fn: Optional[SafeRadiusFn] = None,
) -> CostBreakdown:
    """β1·J1 + β2·J2 + β3·J3 + β_R·J_R with its breakdown (β_R defaults to 1)."""
    d = discretize(path, segments or settings.COST_SEGMENTS)
    radius = safe_radius_fn or FormationSafeRadius.for_scenario(scenario)
    ws = scenario.workspace
    j1 = j1_length(d)
    j2 = j2_violation(d, scenario.obstacles, radius)
    j3 = j3_altitude(d, ws.z_min_m, ws.z_max_m)
    jr = jr_iwp_attraction(d, iwps)
    total = weights.beta1 * j1 + weights.beta2 * j2 + weights.beta3 * j3 + weights.beta_r * jr
    return CostBreakdown(j1=j1, j2=j2, j3=j3, jr=jr, total=float(total))


class CostModel:
    """Cost function bound to one scenario, weight set and IWP list."""

    def __init__(
        self,
        scenario: Scenario,
        weights: CostWeights,
        iwps: Any = (),
        *,
        segments: Optional[int] = None,
        passages: Sequence[Passage] = (),
    ):
        self.scenario = scenario
        self.weights = weights
        self.iwps = list(iwps or ())
        self.segments = int(segments or settings.COST_SEGMENTS)
        self.safe_radius = FormationSafeRadius.for_scenario(scenario, passages)

    def __call__(self, path: Any) -> CostBreakdown:
        return total_cost(
            path, self.scenario, self.weights, self.iwps,
            segments=self.segments, safe_radius_fn=self.safe_radius,
        )
