"""Interactive 2D indoor world: ground truth state, stepping and sensors."""
from .model import (
    ArmState,
    Door,
    Event,
    GestureCommand,
    RobotState,
    Scenario,
    ScenarioError,
    Sign,
    SimHuman,
    Table,
    Wall,
    WorldModel,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    world_from_dict,
)
from .sensors import observe_planes, observe_signs, observe_skeletons, simulate_laser
from .sim import Commands, GestureNoise, Simulator, step, synthesize_arm
from .social import social_force_step

__all__ = [
    "ArmState",
    "Commands",
    "Door",
    "Event",
    "GestureCommand",
    "GestureNoise",
    "RobotState",
    "Scenario",
    "ScenarioError",
    "Sign",
    "SimHuman",
    "Simulator",
    "Table",
    "Wall",
    "WorldModel",
    "load_scenario",
    "observe_planes",
    "observe_signs",
    "observe_skeletons",
    "scenario_from_dict",
    "scenario_to_dict",
    "simulate_laser",
    "social_force_step",
    "step",
    "synthesize_arm",
    "world_from_dict",
]
