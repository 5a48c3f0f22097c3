from __future__ import annotations

import copy
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import pytest

from utils.scenario import Scenario, load_scenario, scenario_from_dict
from utils.theta_pso import PsoParams

SCENARIO_DIR = Path(_ROOT) / "scenarios"

# Small swarm for everything that is not an acceptance-size run.
FAST_PSO = dict(swarm_size=16, waypoints=5, iterations=25, rng_seed=11, workers=1)


def scenario_dict(name: str) -> Dict[str, Any]:
    return json.loads((SCENARIO_DIR / f"{name}.json").read_text(encoding="utf-8"))


@pytest.fixture
def fast_pso() -> PsoParams:
    return PsoParams(**FAST_PSO)


@pytest.fixture
def empty_corridor() -> Scenario:
    return load_scenario(SCENARIO_DIR / "empty_corridor.json")


@pytest.fixture
def bridge_alignment() -> Scenario:
    return load_scenario(SCENARIO_DIR / "bridge_alignment.json")


@pytest.fixture
def bridge_rotation() -> Scenario:
    return load_scenario(SCENARIO_DIR / "bridge_rotation.json")


@pytest.fixture
def bridge_shrink() -> Scenario:
    return load_scenario(SCENARIO_DIR / "bridge_shrink.json")


@pytest.fixture
def make_scenario() -> Callable[..., Scenario]:
    """Empty corridor with sections replaced or merged from keyword arguments."""

    def _make(**sections: Any) -> Scenario:
        data = scenario_dict("empty_corridor")
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                merged = copy.deepcopy(data[key])
                merged.update(value)
                data[key] = merged
            else:
                data[key] = value
        return scenario_from_dict(data)

    return _make
