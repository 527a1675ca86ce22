"""Phase-field simulator for coupled Cahn-Hilliard, elastodynamics and damage."""

from .grid import GridConfig, GridDesc, build_grid, integrate
from .material import MaterialModel, validate_assumptions
from .stepper import Scenario, State, StepperParams, run_simulation, step

__all__ = ["GridConfig", "GridDesc", "build_grid", "integrate", "MaterialModel",
           "validate_assumptions", "Scenario", "State", "StepperParams", "run_simulation", "step"]
__version__ = "0.1.0"
