"""Path tracking, lane vision, obstacle guarding and pitch balance for a six-wheel campus robot."""
from __future__ import annotations

from .fuzzy import ControllerConfig, MembershipTriple, control_step
from .geo import OffsetPair, Pose2D, ReferencePath, offsets_from_path
from .scenario import Scenario, load_preset, load_scenario
from .sim import RunLog, Simulation, run_scenario

__all__ = [
    "ControllerConfig", "MembershipTriple", "control_step",
    "OffsetPair", "Pose2D", "ReferencePath", "offsets_from_path",
    "Scenario", "load_preset", "load_scenario",
    "RunLog", "Simulation", "run_scenario",
]
__version__ = "0.1.0"
