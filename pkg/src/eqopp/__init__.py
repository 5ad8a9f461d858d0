"""Equality-of-opportunity doctrines as auditable decision procedures."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, EqoppError, InfeasibleFitError, LabelsRequiredError
from .taxonomy import Doctrine
from .population import EmpiricalQuantiles, GroupId, Individual, Population, summarize
from .synthetic import GroupSpec, OutcomeModel, ScenarioSpec, generate_synthetic, load_scenario, preset
from .dataio import ColumnMapping, load_csv, write_csv
from .metrics import AuditReport, Tolerances, Verdict, audit, calibration_audit, error_rate_gaps
from .procedures import (
    DecisionOutcome, Formal, FormalPlus, LuckEgalitarian, Rawlsian, ResourceResponse, decide,
    fit_formal_plus, water_fill,
)
from .impossibility import empirical_tradeoff, feasibility_search, ppv_identity
from .lifecourse import DynamicsSpec, SimulationTrace, compare_doctrines, simulate

__all__ = [
    "AuditReport", "ColumnMapping", "ConfigError", "DataError", "DecisionOutcome", "Doctrine",
    "DynamicsSpec", "EmpiricalQuantiles", "EqoppError", "Formal", "FormalPlus", "GroupId", "GroupSpec",
    "InfeasibleFitError", "Individual", "LabelsRequiredError", "LuckEgalitarian", "OutcomeModel",
    "Population", "Rawlsian", "ResourceResponse", "ScenarioSpec", "SimulationTrace", "Tolerances",
    "Verdict", "audit", "calibration_audit", "compare_doctrines", "decide", "empirical_tradeoff",
    "error_rate_gaps", "feasibility_search", "fit_formal_plus", "generate_synthetic", "load_csv",
    "load_scenario", "ppv_identity", "preset", "simulate", "summarize", "water_fill", "write_csv",
]
