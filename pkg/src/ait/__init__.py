"""Adaptively iterative thresholding (AIT) for sparse solutions of y = Ax.

The solver, the thresholding rules it is built on, and the coherence-based
convergence bounds used to check its traces.
"""
from .engine import HaltReason, RecoveryResult, SolverConfig, landweber_step, select_threshold, solve
from .errors import AITError
from .problem import (
    GroundTruth,
    ProblemInstance,
    SensingMatrix,
    coherence,
    dynamic_range_of,
    generate_instance,
    normalize_columns,
    welch_bound,
)
from .theory import (
    check_hypotheses,
    compute_bounds,
    contraction_factor,
    detection_budget_lr,
    iteration_bound,
    iteration_bound_exact_k,
    verify_trace,
)
from .thresholding import ThresholdRule, apply_scalar, apply_vector, boundedness_constant, parse_rule

__version__ = "0.1.0"
