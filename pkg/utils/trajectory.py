"""
utils/trajectory.py
-------------------
Per-UAV command generation and trajectory validation.

Pipeline for one mission:
1. ``build_timeline``: sample the optimized centroid path at the command
   timestep while flying at the nominal speed.
2. ``heading_series``: formation heading ψ(t) from the centroid's direction of
   travel, smoothed over ``reconfig.heading_window_m`` and rate limited so the
   outer UAVs never exceed the mission's max speed while the formation turns.
3. ``offset_series``: formation-frame offsets ΔP_n(t), blending into the target
   shape over [t1, t2], holding it over [t2, t3] and blending back over [t3, t4].
4. ``to_inertial`` + ``uav_path``: P*_n = P*_F + R_IF(ψ)·ΔP_n.
5. ``velocity_profile``: ground speed per UAV, raised or lowered inside the
   blend windows by Δd / window length.

``validate`` re-checks finished commands against the scenario and returns every
violation as data; it never raises on a violation.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from utils import settings
from utils.errors import ContractViolationError
from utils.formation import ReconfigPlan, arc_lengths, horizontal_radius, interpolate_path, shape_offsets
from utils.scenario import Scenario, distance_to_obstacle, distance_to_surface

log = logging.getLogger("utils.trajectory")

# Standoff is only enforced within d_s_max + this of the surface.
INSPECTION_RANGE_EXTRA_M = 5.0
_TOL = 1e-9
_PAIRS = ((0, 1), (0, 2), (1, 2))
# Absorbs the 6-decimal rounding of written trajectory files.
_STEP_TOL_M = 1e-6

ViolationKind = Literal["separation", "communication", "standoff", "clearance", "altitude", "continuity"]


# =========================
# Types
# =========================
class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ViolationKind
    time_s: float
    uavs: tuple[int, ...]
    value: float
    limit: float
    obstacle: Optional[str] = None


class SpeedWarning(BaseModel):
    model_config = ConfigDict(frozen=True)

    uav: int
    iwp_index: int
    window: Literal["transformation", "reconfiguration"]
    speed_mps: float
    max_speed_mps: float


class ValidationReport(BaseModel):
    checked_steps: int
    violations: List[Violation] = []

    @property
    def ok(self) -> bool:
        return not self.violations

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.kind] = out.get(v.kind, 0) + 1
        return out


@dataclass(frozen=True)
class TrajectoryCommand:
    """Commands of one UAV (1-based ``uav``): time, position P*_n and speed V_n."""

    uav: int
    times: np.ndarray
    positions: np.ndarray
    speeds: np.ndarray

    def __post_init__(self) -> None:
        n = self.times.shape[0]
        if self.positions.shape != (n, 3) or self.speeds.shape != (n,):
            raise ContractViolationError(f"UAV {self.uav}: times, positions and speeds disagree in length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ContractViolationError(f"UAV {self.uav}: timestamps must be strictly increasing")
        if np.any(self.speeds < 0):
            raise ContractViolationError(f"UAV {self.uav}: speeds must be non-negative")


@dataclass(frozen=True)
class Timeline:
    times: np.ndarray
    arc_m: np.ndarray
    total_length_m: float
    speed_mps: float


@dataclass
class TrajectorySet:
    timeline: Timeline
    centroid: np.ndarray        # (n, 3)
    heading_rad: np.ndarray     # (n,)
    offsets: np.ndarray         # (n, 3, 3) formation frame
    positions: np.ndarray       # (n, 3, 3) inertial
    commands: List[TrajectoryCommand]
    warnings: List[SpeedWarning] = field(default_factory=list)


# =========================
# Timeline & heading
# =========================
def build_timeline(path: Any, nominal_speed: float, dt: Optional[float] = None) -> Timeline:
    """Times 0, dt, 2·dt, ... up to the arrival time T = length / speed (T included)."""
    if nominal_speed <= 0:
        raise ContractViolationError("nominal speed must be positive")
    step = float(dt or settings.TRAJ_TIMESTEP_S)
    pts = np.asarray(path, dtype=float)
    total = float(arc_lengths(pts)[-1])
    t_end = total / nominal_speed
    n = int(np.floor(t_end / step + 1e-9))
    times = np.arange(n + 1) * step
    if t_end - times[-1] > 1e-9:
        times = np.append(times, t_end)
    arc = np.minimum(times * nominal_speed, total)
    return Timeline(times=times, arc_m=arc, total_length_m=total, speed_mps=float(nominal_speed))

def heading_series(
    path: Any,
    arc_m: np.ndarray,
    window_m: float,
    max_turn_rad_per_m: Optional[float] = None,
) -> np.ndarray:
    """ψ(s) = direction of P_F(s+h) − P_F(s−h); vertical segments keep the previous ψ.

    With ``max_turn_rad_per_m`` the heading turns by at most that much per metre
    the centroid advances, so a hairpin is flown as a gradual turn instead of a
    jump of the whole formation.
    """
    pts = np.asarray(path, dtype=float)
    cum = arc_lengths(pts)
    total = float(cum[-1])
    ahead = interpolate_path(pts, cum, np.clip(arc_m + window_m, 0.0, total))
    behind = interpolate_path(pts, cum, np.clip(arc_m - window_m, 0.0, total))
    d = ahead - behind
    flat = np.hypot(d[:, 0], d[:, 1]) < 1e-9
    psi = np.arctan2(d[:, 1], d[:, 0])
    if flat.all():
        return np.zeros_like(psi)
    first = int(np.argmax(~flat))
    psi[:first] = psi[first]
    for i in range(first + 1, psi.shape[0]):
        if flat[i]:
            psi[i] = psi[i - 1]
    if max_turn_rad_per_m is None:
        return psi
    return _rate_limited(psi, np.diff(arc_m) * max_turn_rad_per_m)

def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi

def _rate_limited(psi: np.ndarray, max_step: np.ndarray) -> np.ndarray:
    out = psi.copy()
    for i in range(1, psi.shape[0]):
        turn = _wrap(float(psi[i] - out[i - 1]))
        if abs(turn) > max_step[i - 1]:
            out[i] = _wrap(float(out[i - 1]) + math.copysign(float(max_step[i - 1]), turn))
    return out

def max_turn_rate(
    offsets: Sequence[np.ndarray],
    nominal_speed: float,
    max_speed: float,
    blend_speed: float = 0.0,
) -> Optional[float]:
    """Heading rate (rad per metre of centroid travel) that keeps every UAV under ``max_speed``.

    A UAV at horizontal radius r moves at most (v + b)·dt + r·Δψ per step, b being
    the fastest offset change of a blend window; the rate spends the margin
    max_speed − v − b on the turn. None when there is no margin.
    """
    radius = max(horizontal_radius(np.asarray(o, dtype=float)) for o in offsets)
    margin = max_speed - nominal_speed - blend_speed
    if radius <= 0.0 or margin <= 0.0:
        return None
    return margin / (nominal_speed * radius)

def blend_speed(plans: Sequence[ReconfigPlan], base: Any) -> float:
    """Fastest rate (m/s) at which any formation-frame offset changes inside a blend window."""
    b = np.asarray(base, dtype=float)
    fastest = 0.0
    for plan in plans:
        moved = float(np.max(np.linalg.norm(shape_offsets(plan.shape, b) - b, axis=1)))
        fastest = max(fastest, moved / min(plan.transformation_time_s, plan.reconfiguration_time_s))
    return fastest


# =========================
# Offsets & frames
# =========================
def blend(source: np.ndarray, target: np.ndarray, fraction: Any) -> np.ndarray:
    """Linear interpolation of offset sets; ``fraction`` 0 → source, 1 → target."""
    f = np.asarray(fraction, dtype=float)[..., None, None]
    return source + f * (target - source)

def offset_series(plans: Sequence[ReconfigPlan], base: Any, times: Any) -> np.ndarray:
    """Formation-frame offsets ΔP_n(t) as an ``(n, 3, 3)`` array."""
    b = np.asarray(base, dtype=float)
    t = np.asarray(times, dtype=float)
    out = np.broadcast_to(b, (t.shape[0], 3, 3)).copy()
    for plan in plans:
        target = shape_offsets(plan.shape, b)
        into = (t >= plan.t1_s) & (t < plan.t2_s)
        hold = (t >= plan.t2_s) & (t <= plan.t3_s)
        back = (t > plan.t3_s) & (t <= plan.t4_s)
        out[into] = blend(b, target, (t[into] - plan.t1_s) / plan.transformation_time_s)
        out[hold] = target
        out[back] = blend(target, b, (t[back] - plan.t3_s) / plan.reconfiguration_time_s)
    return out

def to_inertial(offsets: Any, heading_rad: Any) -> np.ndarray:
    """ΔP^I = R_IF(ψ)·ΔP, per timestep; accepts single offsets or ``(n, 3, 3)`` stacks."""
    o = np.asarray(offsets, dtype=float)
    psi = np.asarray(heading_rad, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    if psi.ndim:
        c = c.reshape((-1,) + (1,) * (o.ndim - 2))
        s = s.reshape((-1,) + (1,) * (o.ndim - 2))
    x, y, z = o[..., 0], o[..., 1], o[..., 2]
    return np.stack([c * x - s * y, s * x + c * y, z], axis=-1)

def uav_path(centroid: Any, inertial_offsets: Any) -> np.ndarray:
    """P*_n = P*_F + ΔP^I_n; ``(n, 3)`` centroid with ``(n, 3, 3)`` offsets → ``(n, 3, 3)``."""
    c = np.asarray(centroid, dtype=float)
    o = np.asarray(inertial_offsets, dtype=float)
    if o.ndim == c.ndim:
        return c + o
    return c[:, None, :] + o


# =========================
# Velocity
# =========================
def window_speed(nominal: float, extra_distance_m: float, duration_s: float) -> float:
    """V = nominal + Δd / window length, never below zero."""
    return max(nominal + extra_distance_m / duration_s, 0.0)

def _polyline_length(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))

def velocity_profile(
    positions: np.ndarray,
    nominal_positions: np.ndarray,
    plans: Sequence[ReconfigPlan],
    times: np.ndarray,
    nominal_speed: float,
    max_speed: float = 10.0,
) -> tuple[np.ndarray, List[SpeedWarning]]:
    """Ground speed of every UAV at every timestep, shape ``(n, 3)``.

    Δd for UAV n in a window is the length of its sampled path inside the window
    minus the length of the path it would fly in the rigid formation.
    """
    if nominal_speed <= 0:
        raise ContractViolationError("nominal speed must be positive")
    t = np.asarray(times, dtype=float)
    speeds = np.full((t.shape[0], 3), float(nominal_speed))
    warnings: List[SpeedWarning] = []

    for plan in plans:
        windows = (
            ("transformation", plan.t1_s, plan.t2_s, (t >= plan.t1_s) & (t < plan.t2_s)),
            ("reconfiguration", plan.t3_s, plan.t4_s, (t > plan.t3_s) & (t <= plan.t4_s)),
        )
        for name, ta, tb, active in windows:
            span = (t >= ta) & (t <= tb)
            for n in range(3):
                extra = _polyline_length(positions[span, n]) - _polyline_length(nominal_positions[span, n])
                v = window_speed(nominal_speed, extra, tb - ta)
                speeds[active, n] = v
                if v > max_speed:
                    w = SpeedWarning(uav=n + 1, iwp_index=plan.iwp_index, window=name,
                                     speed_mps=v, max_speed_mps=max_speed)
                    warnings.append(w)
                    log.warning("speed_limit_exceeded", extra={"kv": w.model_dump()})
    return speeds, warnings


# =========================
# Generation
# =========================
def generate_commands(
    path: Any,
    plans: Sequence[ReconfigPlan],
    scenario: Scenario,
    *,
    dt: Optional[float] = None,
) -> TrajectorySet:
    """Emit synchronized commands for the three UAVs along the centroid ``path``."""
    mission = scenario.mission
    pts = np.asarray(path, dtype=float)
    timeline = build_timeline(pts, mission.nominal_speed_mps, dt)
    cum = arc_lengths(pts)
    centroid = interpolate_path(pts, cum, timeline.arc_m)
    base = mission.offsets_array()
    turn_rate = max_turn_rate(
        [base, *(shape_offsets(p.shape, base) for p in plans)],
        mission.nominal_speed_mps, mission.max_speed_mps, blend_speed(plans, base),
    )
    psi = heading_series(pts, timeline.arc_m, scenario.reconfig.heading_window_m, turn_rate)

    offsets = offset_series(plans, base, timeline.times)
    positions = uav_path(centroid, to_inertial(offsets, psi))
    nominal = uav_path(centroid, to_inertial(np.broadcast_to(base, offsets.shape), psi))
    speeds, warnings = velocity_profile(
        positions, nominal, plans, timeline.times, mission.nominal_speed_mps, mission.max_speed_mps,
    )

    commands = [
        TrajectoryCommand(
            uav=n + 1,
            times=timeline.times.copy(),
            positions=np.ascontiguousarray(positions[:, n, :]),
            speeds=np.ascontiguousarray(speeds[:, n]),
        )
        for n in range(3)
    ]
    log.info("trajectories_generated", extra={"kv": {
        "steps": int(timeline.times.shape[0]), "duration_s": float(timeline.times[-1]),
        "plans": len(plans), "speed_warnings": len(warnings),
    }})
    return TrajectorySet(
        timeline=timeline, centroid=centroid, heading_rad=psi, offsets=offsets,
        positions=positions, commands=commands, warnings=warnings,
    )


# =========================
# Validation
# =========================
def _stack(commands: Sequence[TrajectoryCommand]) -> tuple[np.ndarray, np.ndarray]:
    if len(commands) != 3:
        raise ContractViolationError("validation needs exactly three command sets")
    ordered = sorted(commands, key=lambda c: c.uav)
    times = ordered[0].times
    for c in ordered[1:]:
        if c.times.shape != times.shape or not np.array_equal(c.times, times):
            raise ContractViolationError("command sets must share the same timestamps")
    return times, np.stack([c.positions for c in ordered], axis=1)

def validate(commands: Sequence[TrajectoryCommand], scenario: Scenario) -> ValidationReport:
    """Check separation, communication range, standoff, clearance, altitude and step length per timestep."""
    times, pos = _stack(commands)
    safety = scenario.safety
    ws = scenario.workspace
    min_sep = 2.0 * safety.r_q_m
    clearance = safety.r_q_m + safety.clearance_margin_m
    v_max = scenario.mission.max_speed_mps
    found: list[tuple[int, int, Violation]] = []

    def add(i: int, order: int, **kw: Any) -> None:
        found.append((i, order, Violation(time_s=float(times[i]), **kw)))

    for a, b in _PAIRS:
        d = np.linalg.norm(pos[:, a] - pos[:, b], axis=1)
        for i in np.flatnonzero(d < min_sep - _TOL):
            add(int(i), 0, kind="separation", uavs=(a + 1, b + 1), value=float(d[i]), limit=min_sep)
        for i in np.flatnonzero(d > safety.d_com_m + _TOL):
            add(int(i), 1, kind="communication", uavs=(a + 1, b + 1), value=float(d[i]), limit=safety.d_com_m)

    for n in range(3):
        p = pos[:, n]
        if scenario.surface is not None:
            ds = distance_to_surface(p, scenario.surface)
            near = ds <= safety.standoff_max_m + INSPECTION_RANGE_EXTRA_M
            for i in np.flatnonzero(near & (ds < safety.standoff_min_m - _TOL)):
                add(int(i), 2, kind="standoff", uavs=(n + 1,), value=float(ds[i]), limit=safety.standoff_min_m)
            for i in np.flatnonzero(near & (ds > safety.standoff_max_m + _TOL)):
                add(int(i), 2, kind="standoff", uavs=(n + 1,), value=float(ds[i]), limit=safety.standoff_max_m)
        for k, obstacle in enumerate(scenario.obstacles):
            dk = distance_to_obstacle(p, obstacle)
            for i in np.flatnonzero(dk < clearance - _TOL):
                add(int(i), 3, kind="clearance", uavs=(n + 1,), value=float(dk[i]), limit=clearance,
                    obstacle=obstacle.name or f"obstacle-{k}")
        z = p[:, 2]
        for i in np.flatnonzero(z < ws.z_min_m - _TOL):
            add(int(i), 4, kind="altitude", uavs=(n + 1,), value=float(z[i]), limit=ws.z_min_m)
        for i in np.flatnonzero(z > ws.z_max_m + _TOL):
            add(int(i), 4, kind="altitude", uavs=(n + 1,), value=float(z[i]), limit=ws.z_max_m)
        # ‖p_k+1 − p_k‖ ≤ V_max·Δt, reported at the later sample
        step = np.linalg.norm(np.diff(p, axis=0), axis=1)
        reach = v_max * np.diff(times)
        for i in np.flatnonzero(step > reach + _STEP_TOL_M):
            add(int(i) + 1, 5, kind="continuity", uavs=(n + 1,), value=float(step[i]), limit=float(reach[i]))

    found.sort(key=lambda e: (e[0], e[1], e[2].uavs))
    report = ValidationReport(checked_steps=int(times.shape[0]), violations=[v for _, _, v in found])
    if report.ok:
        log.info("validation_ok", extra={"kv": {"steps": report.checked_steps}})
    else:
        log.warning("validation_failed", extra={"kv": {"steps": report.checked_steps, **report.counts()}})
    return report
