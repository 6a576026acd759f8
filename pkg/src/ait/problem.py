"""Linear-system data model: sensing matrices, ground truth, instance generation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import hadamard

from .errors import (
    EmptySupport,
    InvalidShape,
    NotUnderdetermined,
    ZeroColumn,
    ZeroOnSupport,
)

__all__ = [
    "SensingMatrix",
    "GroundTruth",
    "ProblemInstance",
    "CoherenceReport",
    "normalize_columns",
    "coherence",
    "welch_bound",
    "generate_instance",
    "dynamic_range_of",
    "truth_from_signal",
]

_ZERO_COLUMN_TOL = 1e-14
_COHERENCE_BLOCK = 512


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    """Column-normalized M x N matrix plus the original column norms.

    A solution ``x`` of the normalized system maps back to the raw system as
    ``x / column_scales``.
    """

    entries: np.ndarray
    column_scales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))
        object.__setattr__(self, "column_scales", _frozen(self.column_scales))
        if self.entries.ndim != 2:
            raise InvalidShape("matrix must be 2-D")
        if self.column_scales.shape != (self.entries.shape[1],):
            raise InvalidShape("column_scales must have one entry per column")
        if np.any(self.column_scales <= 0):
            raise InvalidShape("column scales must be positive")

    @property
    def M(self):
        return self.entries.shape[0]

    @property
    def N(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def to_original(self, x):
        """Map a solution of the normalized system to raw-matrix coordinates."""
        return np.asarray(x, dtype=np.float64) / self.column_scales


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The sparse solution x* with its support ordered by descending magnitude."""

    signal: np.ndarray
    support: tuple
    sparsity: int
    dynamic_range: float

    def __post_init__(self):
        object.__setattr__(self, "signal", _frozen(self.signal))
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))

    @property
    def min_magnitude(self):
        if not self.support:
            return 0.0
        return float(np.min(np.abs(self.signal[list(self.support)])))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    matrix: SensingMatrix
    observation: np.ndarray
    truth: Optional[GroundTruth] = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "observation", _frozen(self.observation))
        if self.observation.shape != (self.matrix.M,):
            raise InvalidShape(
                f"observation has shape {self.observation.shape}, expected ({self.matrix.M},)"
            )


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    welch_lower_bound: float
    argmax_pair: tuple


def normalize_columns(raw):
    """Scale every column of ``raw`` to unit l2 norm, remembering the norms.

    Raises ``ZeroColumn`` for a column of norm below 1e-14 and
    ``NotUnderdetermined`` unless the matrix is strictly wider than tall.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise InvalidShape("matrix must be 2-D")
    M, N = raw.shape
    if M >= N:
        raise NotUnderdetermined(f"need M < N, got M={M}, N={N}")
    norms = np.linalg.norm(raw, axis=0)
    bad = np.flatnonzero(norms < _ZERO_COLUMN_TOL)
    if bad.size:
        raise ZeroColumn(int(bad[0]))
    return SensingMatrix(raw / norms, norms)


def welch_bound(M, N):
    """Lower bound sqrt((N - M) / (M (N - 1))) on the coherence of any M x N frame."""
    if M < 1 or N <= M:
        raise InvalidShape(f"Welch bound needs N > M >= 1, got M={M}, N={N}")
    return float(np.sqrt((N - M) / (M * (N - 1))))


def coherence(A):
    """Largest absolute inner product between two distinct columns.

    Ties go to the lexicographically smallest pair ``(i, j)`` with ``i < j``.
    The Gram matrix is formed in row blocks so wide matrices stay cheap on
    memory.
    """
    E = A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=np.float64)
    M, N = E.shape
    best, pair = -1.0, (0, 1)
    for start in range(0, N, _COHERENCE_BLOCK):
        stop = min(start + _COHERENCE_BLOCK, N)
        G = np.abs(E[:, start:stop].T @ E)
        # keep only j > i so each pair is seen once, in row-major order
        rows = np.arange(start, stop)[:, None]
        G[np.arange(N)[None, :] <= rows] = -1.0
        flat = int(np.argmax(G))
        val = G.flat[flat]
        if val > best:
            best = float(val)
            pair = (start + flat // N, flat % N)
    return CoherenceReport(mu=best, welch_lower_bound=welch_bound(M, N), argmax_pair=pair)


def dynamic_range_of(x, support):
    """Ratio of the largest to the smallest magnitude of ``x`` over ``support``."""
    support = list(support)
    if not support:
        raise EmptySupport("dynamic range of an empty support is undefined")
    mags = np.abs(np.asarray(x, dtype=np.float64)[support])
    if np.any(mags == 0):
        raise ZeroOnSupport("x vanishes on part of the support")
    return float(mags.max() / mags.min())


def truth_from_signal(x):
    """Build a ``GroundTruth`` from a dense vector (support = its nonzeros)."""
    x = np.asarray(x, dtype=np.float64)
    nz = np.flatnonzero(x)
    # stable sort keeps ascending index order among equal magnitudes
    order = nz[np.argsort(-np.abs(x[nz]), kind="stable")]
    dr = dynamic_range_of(x, order) if order.size else 1.0
    return GroundTruth(signal=x, support=tuple(order), sparsity=int(order.size), dynamic_range=dr)


def _gaussian_matrix(rng, M, N):
    return rng.standard_normal((M, N))


def _spikes_hadamard_matrix(rng, M, N):
    # [I, H / sqrt(M)] has coherence exactly 1/sqrt(M)
    if M & (M - 1) or N > 2 * M:
        raise InvalidShape("spikes_hadamard needs M a power of two and N <= 2M")
    dictionary = np.hstack([np.eye(M), hadamard(M).astype(np.float64) / np.sqrt(M)])
    # N > M columns out of two blocks of M always mixes both blocks
    cols = rng.permutation(2 * M)[:N]
    signs = rng.choice(np.array([-1.0, 1.0]), size=N)
    return dictionary[:, cols] * signs


_ENSEMBLES = {"gaussian": _gaussian_matrix, "spikes_hadamard": _spikes_hadamard_matrix}


def generate_instance(M, N, k_star, dynamic_range=1.0, signs="random", seed=0, ensemble="gaussian"):
    """Draw a reproducible exact-sparse instance ``y = A x*``.

    Parameters
    ----------
    M, N : int
        Matrix shape, ``k_star < M < N``.
    k_star : int
        Number of nonzeros of x* (0 gives the trivial instance y = 0).
    dynamic_range : float
        Ratio of the largest to smallest nonzero magnitude; magnitudes are
        log-uniformly spaced between 1 and ``dynamic_range`` so every adjacent
        ratio is equal.
    signs : {"random", "positive"}
    seed : int
        Seed for ``numpy.random.default_rng``; the instance is a pure function
        of all arguments.
    ensemble : {"gaussian", "spikes_hadamard"}
        ``gaussian`` draws i.i.d. N(0, 1) entries. ``spikes_hadamard`` takes a
        random signed subset of the columns of ``[I, H/sqrt(M)]``, a
        low-coherence frame (mu = 1/sqrt(M)).
    """
    if not (0 <= k_star < M < N):
        raise InvalidShape(f"need 0 <= k_star < M < N, got k_star={k_star}, M={M}, N={N}")
    if not dynamic_range >= 1:
        raise InvalidShape(f"dynamic range must be >= 1, got {dynamic_range}")
    if k_star == 1 and dynamic_range != 1:
        raise InvalidShape("a 1-sparse signal has dynamic range 1")
    if signs not in ("random", "positive"):
        raise InvalidShape(f"unknown sign rule {signs!r}")
    if ensemble not in _ENSEMBLES:
        raise InvalidShape(f"unknown ensemble {ensemble!r}")

    rng = np.random.default_rng(seed)
    A = normalize_columns(_ENSEMBLES[ensemble](rng, M, N))

    support = rng.choice(N, size=k_star, replace=False)
    if k_star > 1:
        # largest first: Dr, ..., 1, with every adjacent ratio Dr**(1/(k*-1))
        mags = float(dynamic_range) ** (np.arange(k_star - 1, -1, -1) / (k_star - 1))
    else:
        mags = np.ones(k_star)
    if signs == "random":
        sgn = rng.choice(np.array([-1.0, 1.0]), size=k_star)
    else:
        sgn = np.ones(k_star)

    x = np.zeros(N)
    x[support] = sgn * mags
    truth = GroundTruth(
        signal=x,
        support=tuple(support),
        sparsity=int(k_star),
        dynamic_range=float(dynamic_range) if k_star else 1.0,
    )
    y = A.entries @ x
    meta = {
        "seed": int(seed),
        "M": int(M),
        "N": int(N),
        "k_star": int(k_star),
        "dr": float(dynamic_range),
        "signs": signs,
        "ensemble": ensemble,
    }
    return ProblemInstance(matrix=A, observation=y, truth=truth, seed=int(seed), meta=meta)
