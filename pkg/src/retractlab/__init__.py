"""retractlab: a desk-scale autonomous tissue retraction lab.

The package couples a quasi-static soft-tissue finite element simulator with
a bounded-horizon task planner, a geometric situation-awareness layer and a
plan-execute-monitor executive, plus a batch CLI for repeatable experiments.
"""

from retractlab.model import (
    Action,
    BlockGrid,
    Config,
    EnvState,
    RobotState,
    Scenario,
    ScenarioError,
    block_distance,
    block_of_point,
    generate_scenario,
    make_grid,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BlockGrid",
    "Config",
    "EnvState",
    "RobotState",
    "Scenario",
    "ScenarioError",
    "block_distance",
    "block_of_point",
    "generate_scenario",
    "make_grid",
    "__version__",
]
