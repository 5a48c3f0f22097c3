"""
Environment driven defaults
===========================

Tuning knobs for the optimizer, the cost function and the trajectory
generator.  Values are read once at import time (after loading an optional
``.env`` file) and only provide *defaults*: CLI flags and explicit arguments
always win.

Environment
-----------

``PSO_SWARM_SIZE``, ``PSO_WAYPOINTS``, ``PSO_ITERATIONS``
    Swarm size N, interior waypoint count W (S = 3·W) and iteration count.
    Defaults follow the field experiments: 100, 7 and 150.

``PSO_INERTIA``, ``PSO_C1``, ``PSO_C2``
    Inertia weight and cognitive/social gains (0.7, 1.5, 1.5).

``PSO_SEED``, ``PSO_WORKERS``
    Base seed of the per-particle random streams and the number of threads
    used to evaluate particle costs within one iteration.

``COST_BETA1``, ``COST_BETA2``, ``COST_BETA3``, ``COST_BETA_R``
    Weights of path length, obstacle violation, altitude and IWP attraction.

``COST_SEGMENTS``
    Number L of segments a candidate path is resampled into.

``TRAJ_TIMESTEP_S``
    Command discretization of the emitted trajectories (0.1 s).

``FORMATION_OUT_DIR``
    Default output directory of ``cli.py plan``.

``SLOW_PSO_MS``
    Optimizations running longer than this emit a ``slow_optimize`` warning.
"""

from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()


def _get_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)))
    except Exception:
        return default

def _get_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, str(default)))
    except Exception:
        return default


PSO_SWARM_SIZE: int = _get_int("PSO_SWARM_SIZE", 100)
PSO_WAYPOINTS: int  = _get_int("PSO_WAYPOINTS", 7)
PSO_ITERATIONS: int = _get_int("PSO_ITERATIONS", 150)
PSO_INERTIA: float  = _get_float("PSO_INERTIA", 0.7)
PSO_C1: float       = _get_float("PSO_C1", 1.5)
PSO_C2: float       = _get_float("PSO_C2", 1.5)
PSO_SEED: int       = _get_int("PSO_SEED", 7)
PSO_WORKERS: int    = _get_int("PSO_WORKERS", 1)

COST_BETA1: float  = _get_float("COST_BETA1", 1.0)
COST_BETA2: float  = _get_float("COST_BETA2", 1.0e5)
COST_BETA3: float  = _get_float("COST_BETA3", 100.0)
COST_BETA_R: float = _get_float("COST_BETA_R", 1.0)
COST_SEGMENTS: int = _get_int("COST_SEGMENTS", 100)

TRAJ_TIMESTEP_S: float = _get_float("TRAJ_TIMESTEP_S", 0.1)

OUT_DIR: str = os.getenv("FORMATION_OUT_DIR", "out")
SLOW_PSO_MS: int = _get_int("SLOW_PSO_MS", 10000)
