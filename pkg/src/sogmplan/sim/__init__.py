from .environment import (
    Environment,
    EnvironmentConfig,
    build_local_sogm,
    clearance,
    generate_environment,
    obstacle_density,
    sample_density,
    step_obstacles,
)
from .trial import OUTCOMES, TASKS, TrialRecord, default_agents, run_trial, task_endpoints
