"""Frequency-tuned implicit integration for three-phase electromagnetic transients."""

__version__ = "0.1.0"

from .case import Case, CaseParseError, CaseValidationError, load_case
from .engine import ConvergenceError, NewtonSettings, Scheme, SpectralClass, StepSolver
from .integrators import (
    IntegratorCoefficients,
    IntegratorError,
    IntegratorKind,
    coefficients,
    discontinuity_variant,
    relative_error,
)
from .metrics import compare_runs, comparison_table
from .powerflow import PowerFlowError, solve_power_flow
from .simulation import RunRecord, SimulationConfig, SimulationError, reference_run, run
from .timeseries import export_csv, import_csv

__all__ = [
    "Case",
    "CaseParseError",
    "CaseValidationError",
    "load_case",
    "ConvergenceError",
    "NewtonSettings",
    "Scheme",
    "SpectralClass",
    "StepSolver",
    "IntegratorCoefficients",
    "IntegratorError",
    "IntegratorKind",
    "coefficients",
    "discontinuity_variant",
    "relative_error",
    "compare_runs",
    "comparison_table",
    "PowerFlowError",
    "solve_power_flow",
    "RunRecord",
    "SimulationConfig",
    "SimulationError",
    "reference_run",
    "run",
    "export_csv",
    "import_csv",
]
