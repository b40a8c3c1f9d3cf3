"""Simulator and analysis toolkit for wavelength-routed star QKD networks."""

from .decoy import IntensityPair, analyse, bound_y1_e1, secure_key_rate
from .errors import ConfigurationError, StarQKDError
from .kernel import BACKEND
from .optics import link_budget, qber_model, transmittance
from .protocol import SessionConfig, run_session
from .scenario_file import beijing, dump_scenario, load_scenario, parse_scenario
from .simulator import compare_modes, derive_stream, run_mode_comparison, run_scenario
from .topology import build_router_spec, color_complete_graph, route, validate_plan

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "IntensityPair",
    "SessionConfig",
    "StarQKDError",
    "analyse",
    "beijing",
    "bound_y1_e1",
    "build_router_spec",
    "color_complete_graph",
    "compare_modes",
    "derive_stream",
    "dump_scenario",
    "link_budget",
    "load_scenario",
    "parse_scenario",
    "qber_model",
    "route",
    "run_mode_comparison",
    "run_scenario",
    "run_session",
    "secure_key_rate",
    "transmittance",
    "validate_plan",
]
