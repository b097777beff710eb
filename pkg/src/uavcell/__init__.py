"""Max-min UAV rate planning for cellular uplink: receive beamforming,
UAV-to-BS association, and UAV height control under ground-user SINR
guarantees, with perfect and imperfect channel knowledge."""

__version__ = "0.1.0"

from .scenario import (Scenario, SystemParams, ValidationError,
                       generate_scenario, load_scenario, scenario_to_text)
from .channel import (ChannelSet, ImperfectChannelSet, corrupt_channels,
                      realize_channels)
from .linkmetrics import (Association, BeamformerSet, SinrReport,
                          effective_sinr_all, min_uav_rate, rates, sinr_all)
from .beamforming import (baseline_beamformers, eig_beamformers,
                          mmse_beamformers)
from .association import bisection_maximin, max_activation
from .height import ccp_solve, optimize_heights, height_feasible_interval
from .orchestrator import (Solution, evaluate_solution, nearest_baseline,
                           solution_to_text, solve_bilayer,
                           solve_fixed_heights)
from .harness import (ExperimentSpec, ResultTable, read_results,
                      run_experiment, trial_seed, write_results)

__all__ = [
    "Scenario", "SystemParams", "ValidationError", "generate_scenario",
    "load_scenario", "scenario_to_text",
    "ChannelSet", "ImperfectChannelSet", "corrupt_channels",
    "realize_channels",
    "Association", "BeamformerSet", "SinrReport", "effective_sinr_all",
    "min_uav_rate", "rates", "sinr_all",
    "baseline_beamformers", "eig_beamformers", "mmse_beamformers",
    "bisection_maximin", "max_activation",
    "ccp_solve", "optimize_heights", "height_feasible_interval",
    "Solution", "evaluate_solution", "nearest_baseline", "solution_to_text",
    "solve_bilayer", "solve_fixed_heights",
    "ExperimentSpec", "ResultTable", "read_results", "run_experiment",
    "trial_seed", "write_results",
]
