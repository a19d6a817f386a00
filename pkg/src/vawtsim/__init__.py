"""2D aerodynamic force simulation for H-rotor vertical-axis wind turbines.

Two independent models produce the same normal-force-vs-azimuth output: a
free-vortex particle method (vortex2d) and an actuator-line method on an
LES grid solver (alm2d). The harness loads scenario files, runs either
model, and compares or plots the resulting force series.
"""

from .airfoil import PolarFormatError, PolarTable, load_polar_file, naca0021_polar
from .alm2d import ALMConfig, ConfigurationError, StepError
from .harness import (ComparisonReport, ConfigError, Scenario, compare,
                      emit_plot, load_config, run_scenario, scenario_path)
from .series import ForceSeries, SeriesFormatError
from .turbine import OperatingPoint, TurbineGeometry, tip_speed_ratio
from .vortex2d import VortexConfig

__version__ = "0.1.0"

__all__ = [
    "ALMConfig",
    "ComparisonReport",
    "ConfigError",
    "ConfigurationError",
    "ForceSeries",
    "OperatingPoint",
    "PolarFormatError",
    "PolarTable",
    "Scenario",
    "SeriesFormatError",
    "StepError",
    "TurbineGeometry",
    "VortexConfig",
    "compare",
    "emit_plot",
    "load_config",
    "load_polar_file",
    "naca0021_polar",
    "run_scenario",
    "scenario_path",
    "tip_speed_ratio",
    "__version__",
]
