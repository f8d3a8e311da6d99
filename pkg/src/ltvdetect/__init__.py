"""Exponential dichotomy, uniform observability and detectability of LTV systems."""

from .detect import (DETECTABLE, INCONCLUSIVE, NOT_DETECTABLE, AnalysisOptions, DetectabilityReport,
                     analyze, analyze_diagonal)
from .dichotomy import CertificationGrid, DichotomyCertificate, certify_dichotomy, estimate_exponents
from .errors import LtvError
from .gramian import GramianReport, check_uco, observability_gramian
from .observer import certify_error_decay, solve_filter_riccati, synthesize_gain
from .propagate import IntegratorSettings, TransitionCache, propagate_linear
from .qrflow import run_qr_flow, triangularized_system
from .reduce import BlockDiagReduction, coppel_transform, triangular_reduction
from .system import (BlockPartition, Constant, Periodic, PiecewiseConstant, Sampled, TrigTerm, LtvSystem,
                     assemble_block_triangular, constant_system)

__version__ = "0.1.0"

__all__ = [
    "DETECTABLE", "NOT_DETECTABLE", "INCONCLUSIVE", "AnalysisOptions", "DetectabilityReport", "analyze",
    "analyze_diagonal", "CertificationGrid", "DichotomyCertificate", "certify_dichotomy",
    "estimate_exponents", "LtvError", "GramianReport", "check_uco", "observability_gramian",
    "certify_error_decay", "solve_filter_riccati", "synthesize_gain", "IntegratorSettings",
    "TransitionCache", "propagate_linear", "run_qr_flow", "triangularized_system", "BlockDiagReduction",
    "coppel_transform", "triangular_reduction", "BlockPartition", "Constant", "Periodic",
    "PiecewiseConstant", "Sampled", "TrigTerm", "LtvSystem", "assemble_block_triangular", "constant_system",
]
