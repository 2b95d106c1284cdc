"""Deterministic flow-level simulator of training I/O."""

from .engine import SimReport, effective_bandwidth, run_scenario
from .fairshare import Flow, max_min_rates
from .model import MemoryCacheModel, ModelProfile, fps, mem_hit_rate
from .projections import fit_epoch_times, speedup_projection
from .scenario import Scenario, ScenarioJob, load_scenario, scenario_from_dict

__all__ = [
    "Flow",
    "MemoryCacheModel",
    "ModelProfile",
    "Scenario",
    "ScenarioJob",
    "SimReport",
    "effective_bandwidth",
    "fit_epoch_times",
    "fps",
    "load_scenario",
    "max_min_rates",
    "mem_hit_rate",
    "run_scenario",
    "scenario_from_dict",
    "speedup_projection",
]
