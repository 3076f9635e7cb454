"""pathgauge: bounded symbolic analysis of path protocols against agent skipping."""

from .dsl import DslError, load_protocol, parse_protocol_dsl, render_protocol_dsl
from .explorer import (
    AttackFound,
    Bounds,
    NoAttackWithinBound,
    RestrictionUnsatisfiable,
    Scenario,
    check_protocol,
    explore,
)
from .properties import PATH_INTEGRITY, PATH_SYMMETRY, PROPERTIES, VD_PATH_INTEGRITY
from .protocols import MODELS, audit_structural_symmetry, instantiate_model
from .report import AnalysisRequest, Report, emit_report, run_analysis

__version__ = "0.1.0"

__all__ = [
    "AnalysisRequest", "AttackFound", "Bounds", "DslError", "MODELS", "NoAttackWithinBound",
    "PATH_INTEGRITY", "PATH_SYMMETRY", "PROPERTIES", "Report", "RestrictionUnsatisfiable",
    "Scenario", "VD_PATH_INTEGRITY", "audit_structural_symmetry", "check_protocol", "emit_report",
    "explore", "instantiate_model", "load_protocol", "parse_protocol_dsl", "render_protocol_dsl",
    "run_analysis",
]
