"""Independent reference solvers for tiny instances: exhaustive l0 search and OMP."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .engine import _entries
from .errors import NoSolution, SingularRefit, TooLarge

__all__ = ["OracleResult", "brute_force_sparsest", "omp_baseline"]

ENUMERATION_LIMIT = 10**6
RESIDUAL_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class OracleResult:
    x: np.ndarray
    support: tuple
    residual_norm: float
    enumerated_supports: int


def _refit(E, y, support):
    """Least squares on the columns in ``support`` via the restricted Gram matrix."""
    As = E[:, list(support)]
    gram = As.T @ As
    try:
        coef = np.linalg.solve(gram, As.T @ y)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(coef)):
        return None
    return coef


def _result(E, y, support, coef, count):
    x = np.zeros(E.shape[1])
    x[list(support)] = coef
    return OracleResult(
        x=x,
        support=tuple(int(i) for i in support),
        residual_norm=float(np.linalg.norm(E @ x - y)),
        enumerated_supports=count,
    )


def brute_force_sparsest(A, y, k_max):
    """Sparsest exact solution with at most ``k_max`` nonzeros, by enumeration.

    Supports are tried by increasing size and, within a size, in lexicographic
    order; the first whose least-squares fit leaves a residual of at most
    1e-9 * ||y|| wins.
    """
    E = _entries(A)
    y = np.asarray(y, dtype=np.float64)
    N = E.shape[1]
    if comb(N, k_max) > ENUMERATION_LIMIT:
        raise TooLarge(f"C({N}, {k_max}) supports exceeds the {ENUMERATION_LIMIT} limit")
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return OracleResult(x=np.zeros(N), support=(), residual_norm=0.0, enumerated_supports=0)
    tol = RESIDUAL_RTOL * ynorm
    count = 0
    for size in range(1, k_max + 1):
        for support in itertools.combinations(range(N), size):
            count += 1
            coef = _refit(E, y, support)
            if coef is None:
                continue
            if np.linalg.norm(E[:, list(support)] @ coef - y) <= tol:
                return _result(E, y, support, coef, count)
    raise NoSolution(f"no support of size <= {k_max} reproduces y")


def omp_baseline(A, y, k_star):
    """Orthogonal matching pursuit for at most ``k_star`` rounds.

    Each round adds the column most correlated with the residual (lowest index
    on ties) and refits on the selected columns. Stops early once y is
    reproduced to 1e-9 relative.
    """
    E = _entries(A)
    y = np.asarray(y, dtype=np.float64)
    N = E.shape[1]
    ynorm = float(np.linalg.norm(y))
    selected = []
    coef = np.zeros(0)
    residual = y.copy()
    for _ in range(k_star):
        if np.linalg.norm(residual) <= RESIDUAL_RTOL * ynorm:
            break
        corr = np.abs(E.T @ residual)
        corr[selected] = -1.0
        selected.append(int(np.argmax(corr)))
        coef = _refit(E, y, selected)
        if coef is None or np.linalg.matrix_rank(E[:, selected]) < len(selected):
            raise SingularRefit(f"columns {selected} are linearly dependent")
        residual = y - E[:, selected] @ coef
    order = np.argsort(selected)
    support = [selected[i] for i in order]
    return _result(E, y, support, coef[order] if len(selected) else coef, len(selected))
