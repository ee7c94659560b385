"""Accelerated over-relaxed ADMM with certified convergence rates."""

from .lure import (AlgorithmParams, ProblemClass, StateSpacePlant, Trace, build_plant,
                   closed_loop_matrix, iterate_direct, normalize_problem, simulate_lure)
from .ozf import OZFMultiplier, build_augmented_plant, iqc_sample_check, validate_coeffs
from .certify import (BisectionOptions, FeasibilityResult, LMIProblem, RateCertificate,
                      assemble_lmi, min_rate, solve_feasibility, theoretical_rates)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmParams",
    "ProblemClass",
    "StateSpacePlant",
    "Trace",
    "build_plant",
    "closed_loop_matrix",
    "iterate_direct",
    "normalize_problem",
    "simulate_lure",
    "OZFMultiplier",
    "build_augmented_plant",
    "iqc_sample_check",
    "validate_coeffs",
    "BisectionOptions",
    "FeasibilityResult",
    "LMIProblem",
    "RateCertificate",
    "assemble_lmi",
    "min_rate",
    "solve_feasibility",
    "theoretical_rates",
]
