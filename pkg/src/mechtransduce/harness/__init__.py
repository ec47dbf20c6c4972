"""Config-driven experiment runner."""

from .config import SCENARIOS, ExperimentConfig, bundled_config, from_dict, load_config
from .results import Check, ScenarioResult
from .scenarios import (
    RUNNERS,
    member_seed,
    proposal_window,
    run_fc_sweep,
    run_linearity,
    run_noise,
    run_proposal,
    run_pump_sweep,
    run_scenario,
    run_thermal,
)

__all__ = [
    "SCENARIOS", "ExperimentConfig", "bundled_config", "from_dict", "load_config",
    "Check", "ScenarioResult", "RUNNERS", "member_seed", "proposal_window",
    "run_fc_sweep", "run_linearity", "run_noise", "run_proposal", "run_pump_sweep",
    "run_scenario", "run_thermal",
]
