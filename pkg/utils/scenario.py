"""
utils/scenario.py
-----------------
World model of a formation inspection mission and its file format.

A scenario is one JSON document with the sections ``workspace``,
``obstacles[]``, ``surface``, ``safety``, ``mission`` and (optional)
``reconfig``.  Lengths are meters and speeds m/s; field names carry the unit
suffix (``radius_m``, ``nominal_speed_mps``).  Coordinates are a local
East-North-Up frame; geodetic conversion happens before a scenario is written.

Every section is a frozen pydantic model that validates its own invariants, so
``load_scenario`` either returns a usable ``Scenario`` or raises
``ScenarioError`` naming what is wrong.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.errors import ContractViolationError, ScenarioError

log = logging.getLogger("utils.scenario")

ShapeKind = Literal["triangle", "alignment", "rotation", "shrink"]
Vec2 = Tuple[float, float]

# Field experiment triangle: ΔT_1..ΔT_3 relative to the centroid.
DEFAULT_OFFSETS = ((0.0, 2.0, 0.0), (-2.0, -1.0, 0.0), (2.0, -1.0, 0.0))


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")


# =========================
# Domain types
# =========================
class Point3(_Frozen):
    """Position in meters; accepts ``[x, y, z]`` as well as ``{"x":..}``."""

    x: float
    y: float
    z: float

    @model_validator(mode="before")
    @classmethod
    def _from_sequence(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple, np.ndarray)):
            if len(data) != 3:
                raise ValueError("a point needs exactly three coordinates")
            return {"x": float(data[0]), "y": float(data[1]), "z": float(data[2])}
        return data

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a: Any) -> "Point3":
        return cls(x=float(a[0]), y=float(a[1]), z=float(a[2]))


class CylinderObstacle(_Frozen):
    """Vertical cylinder standing on the ground plane."""

    name: Optional[str] = None
    center_m: Vec2
    radius_m: float = Field(gt=0)
    height_m: float = Field(gt=0)


class Workspace(_Frozen):
    x_bounds_m: Vec2
    y_bounds_m: Vec2
    z_min_m: float
    z_max_m: float

    @model_validator(mode="after")
    def _check(self) -> "Workspace":
        for axis, (lo, hi) in (("x", self.x_bounds_m), ("y", self.y_bounds_m)):
            if not hi > lo:
                raise ValueError(f"workspace {axis} bounds must satisfy max > min")
        if not self.z_min_m > 0:
            raise ValueError("z_min must be positive")
        if not self.z_max_m > self.z_min_m:
            raise ValueError("z_max must exceed z_min")
        return self


class InspectionSurface(_Frozen):
    """Vertical facade extruded from a 2D polyline up to ``height_m``."""

    points_m: List[Vec2] = Field(min_length=2)
    height_m: float = Field(gt=0)


class SafetyConstraints(_Frozen):
    r_q_m: float = Field(gt=0, description="UAV safe radius")
    d_com_m: float = Field(description="communication range")
    standoff_min_m: float
    standoff_max_m: float
    clearance_margin_m: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "SafetyConstraints":
        if not self.d_com_m > 2.0 * self.r_q_m:
            raise ValueError("d_com must exceed 2·r_Q")
        if not self.standoff_min_m > 0:
            raise ValueError("d_s_min must be positive")
        if not self.standoff_max_m > self.standoff_min_m:
            raise ValueError("d_s_max must exceed d_s_min")
        return self


class MissionSpec(_Frozen):
    start: Point3
    goal: Point3
    nominal_speed_mps: float = Field(gt=0)
    max_speed_mps: float = Field(default=10.0, gt=0)
    offsets_m: Tuple[Point3, Point3, Point3] = Field(
        default_factory=lambda: tuple(Point3.from_array(o) for o in DEFAULT_OFFSETS)
    )

    @model_validator(mode="after")
    def _check(self) -> "MissionSpec":
        if self.start == self.goal:
            raise ValueError("start and goal must differ")
        total = np.sum([o.as_array() for o in self.offsets_m], axis=0)
        if float(np.max(np.abs(total))) > 1e-9:
            raise ValueError("UAV offsets must sum to the zero vector")
        return self

    def offsets_array(self) -> np.ndarray:
        return np.array([o.as_array() for o in self.offsets_m])


class ReconfigSettings(_Frozen):
    """Shape choices and scheduling buffers around intermediate waypoints."""

    enabled: bool = True
    shape_priority: List[ShapeKind] = ["alignment", "shrink", "rotation"]
    forced_shape: Optional[ShapeKind] = None
    alignment_spacing_m: float = Field(default=1.2, gt=0)
    alignment_axis: Literal["auto", "vertical", "along_path", "lateral"] = "auto"
    rotation_axis: Literal["leader", "path", "lateral", "vertical"] = "leader"
    rotation_angle_rad: float = math.pi / 2
    shrink_scale: float = Field(default=0.5, gt=0, le=1)
    lead_buffer_m: float = Field(default=1.0, ge=0)
    lag_buffer_m: float = Field(default=1.0, ge=0)
    transformation_distance_m: Optional[float] = Field(default=None, gt=0)
    reconfiguration_distance_m: Optional[float] = Field(default=None, gt=0)
    neighborhood_radius_m: float = Field(default=30.0, gt=0)
    heading_window_m: float = Field(default=2.0, gt=0)


class Scenario(_Frozen):
    name: str = "scenario"
    workspace: Workspace
    obstacles: List[CylinderObstacle] = []
    surface: Optional[InspectionSurface] = None
    safety: SafetyConstraints
    mission: MissionSpec
    reconfig: ReconfigSettings = ReconfigSettings()

    @property
    def obstacle_count(self) -> int:
        return len(self.obstacles)


# =========================
# Load / dump
# =========================
def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e.get("loc", ())) or "<root>"
        msg = str(e.get("msg", "")).removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)

def parse_scenario(text: str, source: str = "<memory>") -> Scenario:
    """Parse and validate a scenario document held in memory."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"malformed scenario {source}: {e}") from e
    return scenario_from_dict(data, source=source)

def scenario_from_dict(data: Any, source: str = "<memory>") -> Scenario:
    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario {source}: {_describe(e)}") from e
    log.info("scenario_loaded", extra={"kv": {
        "source": source,
        "name": scenario.name,
        "obstacles": scenario.obstacle_count,
        "surface": scenario.surface is not None,
    }})
    return scenario

def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file (the planner's init file)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {p}: {e}") from e
    return parse_scenario(text, source=str(p))

def serialize_scenario(scenario: Scenario) -> str:
    return scenario.model_dump_json(indent=2)

def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")


# =========================
# Geometry
# =========================
def _as_points(p: Any) -> tuple[np.ndarray, bool]:
    if isinstance(p, Point3):
        return p.as_array()[None, :], True
    a = np.asarray(p, dtype=float)
    if a.ndim == 1:
        return a[None, :], True
    return a, False

def _finish(d: np.ndarray, single: bool) -> Any:
    return float(d[0]) if single else d

def distance_to_obstacle(p: Any, k: CylinderObstacle) -> Any:
    """Shortest distance from ``p`` to the solid cylinder ``k`` (0 inside or on it).

    Accepts a ``Point3``, a length-3 array or an ``(n, 3)`` array of points.
    """
    pts, single = _as_points(p)
    cx, cy = k.center_m
    horizontal = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    radial = np.maximum(horizontal - k.radius_m, 0.0)
    above = np.maximum(pts[:, 2] - k.height_m, 0.0)
    return _finish(np.hypot(radial, above), single)

def distance_to_axis(p: Any, k: CylinderObstacle) -> Any:
    """Distance from ``p`` to the axis segment of ``k`` (centre line, ground to cap)."""
    pts, single = _as_points(p)
    cx, cy = k.center_m
    horizontal = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    above = np.maximum(pts[:, 2] - k.height_m, 0.0)
    return _finish(np.hypot(horizontal, above), single)

def distance_to_surface(p: Any, surface: InspectionSurface | Any) -> Any:
    """Minimum horizontal distance from ``p`` to the surface polyline."""
    poly = surface.points_m if isinstance(surface, InspectionSurface) else surface
    poly = np.asarray(poly, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 2:
        raise ContractViolationError("surface polyline needs at least two points")
    pts, single = _as_points(p)
    xy = pts[:, None, :2]                      # (n, 1, 2)
    a = poly[None, :-1, :]                     # (1, m, 2)
    ab = (poly[1:] - poly[:-1])[None, :, :]    # (1, m, 2)
    denom = np.sum(ab * ab, axis=-1)
    t = np.sum((xy - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0)
    t = np.clip(np.where(denom > 0, t, 0.0), 0.0, 1.0)
    nearest = a + t[..., None] * ab
    d = np.min(np.linalg.norm(xy - nearest, axis=-1), axis=1)
    return _finish(d, single)
