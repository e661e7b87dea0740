"""Closed-loop world model: scenarios, plant loop, baseline, metrics and traces."""

from .baseline import LABEL as BASELINE_LABEL, baseline_controller, baseline_setup, baseline_torque
from .metrics import lyapunov_violations, metrics, rms, settling_time
from .presets import build_scene
from .scenarios import DesiredTrajectory, TargetMotion, desired_state, target_position
from .trace import TraceLog, column_names
from .world import (NoiseModel, Simulation, SimulationSetup, WorldState, initial_estimates,
                    lyapunov_value, observe, run, step, true_state)

__all__ = [
    "BASELINE_LABEL", "DesiredTrajectory", "NoiseModel", "Simulation", "SimulationSetup", "TargetMotion",
    "TraceLog", "WorldState", "baseline_controller", "baseline_setup", "baseline_torque", "build_scene",
    "column_names", "desired_state", "initial_estimates", "lyapunov_value", "lyapunov_violations",
    "metrics", "observe", "rms", "run", "settling_time", "step", "target_position", "true_state",
]
