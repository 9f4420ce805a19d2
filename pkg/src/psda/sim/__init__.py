from .world import (
    Distractor,
    Landmark,
    MissionConfig,
    ScenarioConfig,
    TargetSpec,
    WorldConfig,
    builtin_scenario,
    initial_beliefs,
    load_scenario,
    scenario_from_dict,
)
from .mission import (
    HumanModel,
    MissionRecord,
    MissionState,
    MissionDriver,
    average_belief,
    fuse_step,
    plan_goal_and_path,
    run_mission,
    simulate_detector,
    simulate_human,
)
from .planner import astar_grid

__all__ = [name for name in dir() if not name.startswith("_")]
