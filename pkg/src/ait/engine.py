"""Adaptively iterative thresholding: Landweber step + (k+1)-th order-statistic threshold."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidK
from .problem import ProblemInstance, SensingMatrix
from .thresholding import ThresholdRule, apply_vector, parse_rule

__all__ = [
    "HaltReason",
    "SolverConfig",
    "IterationRecord",
    "RecoveryResult",
    "landweber_step",
    "select_threshold",
    "solve",
]

DIVERGENCE_FACTOR = 1e12
FULL_TRACE_LIMIT = 10**7


class HaltReason(enum.Enum):
    MAX_ITERATIONS = "MaxIterations"
    STALLED = "Stalled"
    SUPPORT_STABLE_AND_STALLED = "SupportStableAndStalled"


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``max_iterations`` defaults to ``50 k + 100``. The run stops early once
    the support has been unchanged for ``stable_support_window`` consecutive
    iterations and the relative l-infinity change of x is below
    ``stall_tolerance``, or immediately when an iterate repeats exactly.
    """

    rule: ThresholdRule
    k: int
    max_iterations: Optional[int] = None
    stall_tolerance: float = 1e-10
    stable_support_window: int = 5

    def __post_init__(self):
        object.__setattr__(self, "rule", parse_rule(self.rule))
        if self.k < 1:
            raise InvalidK(f"specified sparsity must be >= 1, got {self.k}")
        if self.max_iterations is None:
            object.__setattr__(self, "max_iterations", 50 * self.k + 100)
        if self.max_iterations < 1:
            raise InvalidK("max_iterations must be positive")
        if self.stall_tolerance < 0:
            raise InvalidK("stall_tolerance must be >= 0")
        if self.stable_support_window < 1:
            raise InvalidK("stable_support_window must be positive")


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """State after iteration ``t``; ``x`` and ``z`` are None in a thinned trace.

    The t = 0 record is the starting point x = 0 and carries no z or tau.
    """

    t: int
    support: tuple
    tau: Optional[float] = None
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    linf_err: Optional[float] = None


@dataclass(eq=False)
class RecoveryResult:
    final_x: np.ndarray
    final_support: tuple
    iterations_run: int
    halt_reason: HaltReason
    trace: list = field(default_factory=list)
    diverged: bool = False
    thinned: bool = False
    final_x_normalized: Optional[np.ndarray] = None


def _entries(A):
    return A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=np.float64)


def landweber_step(A, y, x):
    """z = x + A^T (y - A x), residual first."""
    E = _entries(A)
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != (E.shape[0],) or x.shape != (E.shape[1],):
        raise DimensionMismatch(
            f"A is {E.shape}, y has shape {y.shape}, x has shape {x.shape}"
        )
    residual = y - E @ x
    return x + E.T @ residual


def select_threshold(z, k):
    """Return ``(tau, pivot)``: the (k+1)-th largest |z_i| and the smallest index attaining it."""
    a = np.abs(np.asarray(z, dtype=np.float64))
    n = a.size
    if not 1 <= k <= n - 1:
        raise InvalidK(f"need 1 <= k <= {n - 1}, got k={k}")
    pos = n - k - 1
    tau = float(np.partition(a, pos)[pos])
    pivot = int(np.flatnonzero(a == tau)[0])
    return tau, pivot


def solve(instance, config):
    """Run the iteration from x = 0 until the stop rule fires.

    The returned ``final_x`` is in the coordinates of the raw (unnormalized)
    matrix; ``final_x_normalized`` and the trace use the normalized system.
    """
    A = instance.matrix
    E = A.entries
    y = instance.observation
    N = A.N
    k = config.k
    if not 1 <= k <= N - 1:
        raise InvalidK(f"need 1 <= k <= N-1 = {N - 1}, got k={k}")
    rule = config.rule
    truth = instance.truth.signal if instance.truth is not None else None

    thinned = N * config.max_iterations > FULL_TRACE_LIMIT
    blowup = DIVERGENCE_FACTOR * float(np.max(np.abs(E.T @ y)))

    def err(x):
        return None if truth is None else float(np.max(np.abs(x - truth)))

    x = np.zeros(N)
    support = ()
    trace = [IterationRecord(t=0, support=(), x=None if thinned else x, linf_err=err(x))]
    halt = HaltReason.MAX_ITERATIONS
    diverged = False
    unchanged = 0
    t = 0
    while t < config.max_iterations:
        t += 1
        z = landweber_step(E, y, x)
        tau, _ = select_threshold(z, k)
        x_new = apply_vector(rule, z, tau)
        new_support = tuple(int(i) for i in np.flatnonzero(x_new))
        trace.append(
            IterationRecord(
                t=t,
                support=new_support,
                tau=tau,
                x=None if thinned else x_new,
                z=None if thinned else z,
                linf_err=err(x_new),
            )
        )
        scale = float(np.max(np.abs(x_new))) if N else 0.0
        if scale > blowup:
            x, support, diverged = x_new, new_support, True
            break
        change = float(np.max(np.abs(x_new - x)))
        unchanged = unchanged + 1 if new_support == support else 0
        repeated = np.array_equal(x_new, x)
        x, support = x_new, new_support
        if repeated:
            # the map is deterministic, so an exact repeat is a fixed point
            halt = HaltReason.STALLED
            break
        if unchanged >= config.stable_support_window and change <= config.stall_tolerance * scale:
            halt = HaltReason.SUPPORT_STABLE_AND_STALLED
            break

    return RecoveryResult(
        final_x=A.to_original(x),
        final_support=support,
        iterations_run=t,
        halt_reason=halt,
        trace=trace,
        diverged=diverged,
        thinned=thinned,
        final_x_normalized=x,
    )
