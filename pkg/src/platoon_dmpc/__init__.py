"""Observer-based distributed MPC for vehicle platoons under Markovian switching topologies."""

from .config import ScenarioConfig
from .sim import SimResult, compute_moe, run, string_stability_check

__all__ = ["ScenarioConfig", "SimResult", "compute_moe", "run", "string_stability_check"]
__version__ = "0.1.0"
