"""Coherence-based convergence guarantees and their empirical check on solver traces.

All bound functions return real values; :func:`floor_bound` and
:func:`ceil_bound` turn them into iteration counts for display.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AITError, HypothesisViolated, IncompleteTrace, LogDomain

__all__ = [
    "HypothesisCheck",
    "TheoryBounds",
    "VerificationVerdict",
    "contraction_factor",
    "check_hypotheses",
    "iteration_bound",
    "iteration_bound_exact_k",
    "detection_budget_lr",
    "floor_bound",
    "ceil_bound",
    "compute_bounds",
    "verify_trace",
]

ENVELOPE_SLACK = 1e-9
# the envelope eventually drops below what a float64 iterate can resolve
ENVELOPE_ULPS = 64


def _check_domain(c, k, mu):
    if not 0.0 <= c <= 1.0:
        raise AITError(f"boundedness constant must lie in [0, 1], got {c}")
    if k < 1:
        raise AITError(f"k must be >= 1, got {k}")
    if not 0.0 < mu <= 1.0:
        raise AITError(f"coherence must lie in (0, 1], got {mu}")


def contraction_factor(c, k, mu):
    """rho = (1 + c) k mu."""
    _check_domain(c, k, mu)
    return (1.0 + c) * k * mu


@dataclass(frozen=True)
class HypothesisCheck:
    theorem1: bool
    corollary1: bool
    slack: dict
    failed: tuple = ()
    unique_sparsest: Optional[bool] = None


def check_hypotheses(c, k, k_star, mu):
    """Evaluate ``0 < mu < 1/((3+c)k*)`` and ``k* <= k < 1/((3+c)mu)``.

    ``slack`` holds the signed distance to each boundary (positive means the
    inequality holds). ``unique_sparsest`` reports, informationally, whether
    ``k* <= (1 + 1/mu)/2``.
    """
    mu_cap = math.inf if k_star == 0 else 1.0 / ((3.0 + c) * k_star)
    k_cap = math.inf if mu <= 0 else 1.0 / ((3.0 + c) * mu)
    slack = {
        "mu_positive": mu,
        "mu_below_cap": mu_cap - mu,
        "k_at_least_kstar": k - k_star,
        "k_below_cap": k_cap - k,
    }
    failed = []
    if not mu > 0:
        failed.append("mu > 0")
    if not mu < mu_cap:
        failed.append(f"mu < 1/((3+c)k*) = {mu_cap:.6g} (mu = {mu:.6g})")
    if not k_star <= k:
        failed.append(f"k* <= k ({k_star} > {k})")
    if not k < k_cap:
        failed.append(f"k < 1/((3+c)mu) = {k_cap:.6g} (k = {k})")
    theorem1 = not failed
    unique = None if mu <= 0 else bool(k_star <= (1.0 + 1.0 / mu) / 2.0)
    return HypothesisCheck(
        theorem1=theorem1,
        corollary1=theorem1 and k == k_star,
        slack=slack,
        failed=tuple(failed),
        unique_sparsest=unique,
    )


def _require(c, k, k_star, mu):
    _check_domain(c, k, mu)
    h = check_hypotheses(c, k, k_star, mu)
    if not h.theorem1:
        raise HypothesisViolated("; ".join(h.failed))


def _log_base(base, value, what):
    if not value > 0:
        raise LogDomain(f"{what}: log argument {value!r} is not positive")
    return math.log(value) / math.log(base)


def iteration_bound(c, k, k_star, mu, dr):
    """Upper bound T on the iterations needed to contain the true support.

    T = k* + (k*-1) log_rho[(1-(3+c)k mu) / ((3+c) - (c^2+4c+3+2/Dr) k mu)] - log_rho(Dr)
    with rho = (1+c) k mu.
    """
    if dr < 1:
        raise AITError(f"dynamic range must be >= 1, got {dr}")
    _require(c, k, k_star, mu)
    rho = (1.0 + c) * k * mu
    km = k * mu
    num = 1.0 - (3.0 + c) * km
    den = (3.0 + c) - (c * c + 4.0 * c + 3.0 + 2.0 / dr) * km
    if den == 0:
        raise LogDomain("iteration bound: denominator vanishes")
    term = 0.0 if k_star <= 1 else (k_star - 1) * _log_base(rho, num / den, "iteration bound")
    return k_star + term - _log_base(rho, dr, "iteration bound")


def iteration_bound_exact_k(c, k_star, mu, dr):
    """The bound specialised to k = k*."""
    return iteration_bound(c, k_star, k_star, mu, dr)


def detection_budget_lr(c, k, mu, ratio_r):
    """Real-valued iteration budget for detecting index r+1 once I_r is held.

    ``ratio_r`` is |x*_r| / |x*_{r+1}| >= 1.
    """
    if ratio_r < 1:
        raise AITError(f"adjacent magnitude ratio must be >= 1, got {ratio_r}")
    _check_domain(c, k, mu)
    if not k < 1.0 / ((3.0 + c) * mu):
        raise HypothesisViolated(f"k < 1/((3+c)mu) = {1.0 / ((3.0 + c) * mu):.6g} (k = {k})")
    rho = (1.0 + c) * k * mu
    km = k * mu
    num = 1.0 - (3.0 + c) * km
    den = (3.0 + c) * (1.0 - rho) * ratio_r - 2.0 * km
    if den == 0:
        raise LogDomain("detection budget: denominator vanishes")
    return _log_base(rho, num / den, "detection budget")


def floor_bound(value):
    return math.floor(value)


def ceil_bound(value):
    return math.ceil(value)


@dataclass(frozen=True)
class TheoryBounds:
    mu: float
    c: float
    k: int
    k_star: int
    dr: float
    rho: float
    t_bound: Optional[float]
    t_bound_exact_k: Optional[float]
    l_budgets: tuple
    hypotheses: HypothesisCheck

    @property
    def theorem1(self):
        return self.hypotheses.theorem1

    @property
    def corollary1(self):
        return self.hypotheses.corollary1

    @property
    def t_bound_floor(self):
        return None if self.t_bound is None else floor_bound(self.t_bound)


def compute_bounds(mu, c, k, k_star, dr=1.0, truth=None):
    """Collect every closed-form quantity for one (mu, c, k, k*, Dr) setting.

    Bounds that only exist under the theorem's hypotheses are None when the
    hypotheses fail. With ``truth`` given, ``dr`` and the per-index budgets
    come from the realized x*.
    """
    if truth is not None and truth.sparsity:
        mags = np.abs(truth.signal[list(truth.support)])
        dr = float(mags[0] / mags[-1])
        ratios = mags[:-1] / mags[1:]
    else:
        ratios = np.array([])
    h = check_hypotheses(c, k, k_star, mu)
    rho = (1.0 + c) * k * mu
    t_bound = t_exact = None
    budgets = ()
    if h.theorem1 and k_star >= 1:
        t_bound = iteration_bound(c, k, k_star, mu, dr)
        t_exact = iteration_bound_exact_k(c, k_star, mu, dr)
        budgets = tuple(detection_budget_lr(c, k, mu, float(r)) for r in ratios)
    return TheoryBounds(
        mu=float(mu),
        c=float(c),
        k=int(k),
        k_star=int(k_star),
        dr=float(dr),
        rho=rho,
        t_bound=t_bound,
        t_bound_exact_k=t_exact,
        l_budgets=budgets,
        hypotheses=h,
    )


@dataclass(frozen=True)
class VerificationVerdict:
    """Outcome of checking a trace against the convergence theorem.

    Checks that do not apply (no bound because the hypotheses fail, or no
    identification) are None rather than False.
    """

    support_identified_at: Optional[int]
    within_t_bound: Optional[bool]
    geometric_envelope_ok: Optional[bool]
    recruitment_order_ok: bool
    containment_persistent: bool
    exact_support_ok: Optional[bool] = None
    details: dict = field(default_factory=dict)

    def all_ok(self):
        checks = (
            self.support_identified_at is not None,
            self.within_t_bound,
            self.geometric_envelope_ok,
            self.recruitment_order_ok,
            self.containment_persistent,
        )
        if self.exact_support_ok is not None:
            checks += (self.exact_support_ok,)
        return all(v is True for v in checks)


def _trace_errors(trace, truth):
    errs = []
    for rec in trace:
        if rec.x is not None:
            errs.append(float(np.max(np.abs(rec.x - truth.signal))))
        elif rec.linf_err is not None:
            errs.append(float(rec.linf_err))
        else:
            errs.append(None)
    return errs


def _envelope_check(errs, anchor, bounds, truth):
    """Return (ok, worst err/limit ratio) for the envelope anchored at ``anchor``.

    ok is None when a needed error is missing from the trace.
    """
    base = (3.0 + bounds.c) / 2.0 * truth.min_magnitude
    floor_abs = ENVELOPE_ULPS * np.finfo(float).eps * float(np.max(np.abs(truth.signal)))
    ok, worst = True, 0.0
    for t in range(anchor, len(errs)):
        if errs[t] is None:
            return None, worst
        limit = base * bounds.rho ** (t - anchor + 1) * (1.0 + ENVELOPE_SLACK) + floor_abs
        worst = max(worst, errs[t] / limit)
        if errs[t] > limit:
            ok = False
    return ok, worst


def verify_trace(trace, truth, bounds):
    """Check identification time, error envelope, recruitment order and persistence.

    ``trace`` is a sequence of records with consecutive ``t`` starting at 0;
    only ``support`` is required, plus ``x`` or ``linf_err`` for the envelope.
    """
    if not trace:
        raise IncompleteTrace("trace is empty")
    ts = [rec.t for rec in trace]
    if ts != list(range(len(trace))):
        raise IncompleteTrace("trace iterations must run 0, 1, 2, ... without gaps")

    supports = [frozenset(rec.support) for rec in trace]
    true_support = list(truth.support)
    target = frozenset(true_support)
    T = len(trace)

    if truth.sparsity == 0:
        return VerificationVerdict(
            support_identified_at=0,
            within_t_bound=True,
            geometric_envelope_ok=True,
            recruitment_order_ok=True,
            containment_persistent=True,
            exact_support_ok=True if bounds.corollary1 else None,
            details={"trivial": "empty true support"},
        )

    # smallest t after which I* stays inside the iterate support
    identified = None
    for t in range(T - 1, -1, -1):
        if target <= supports[t]:
            identified = t
        else:
            break

    within = None
    if identified is not None and bounds.t_bound is not None:
        within = identified <= floor_bound(bounds.t_bound)

    envelope = None
    strict = None
    anchor = None
    if identified is not None:
        errs = _trace_errors(trace, truth)
        # the theorem only promises some anchor t* <= T; a later anchor gives a
        # looser envelope, so floor(T) is the weakest anchor it allows
        anchor = identified
        if bounds.t_bound is not None:
            anchor = max(identified, floor_bound(bounds.t_bound))
        envelope = _envelope_check(errs, anchor, bounds, truth)
        strict = _envelope_check(errs, identified, bounds, truth)

    entry = {}
    for i in true_support:
        entry[i] = next((t for t in range(T) if i in supports[t]), None)
    mags = np.abs(truth.signal[true_support])
    order_ok = True
    for a in range(len(true_support)):
        for b in range(len(true_support)):
            if mags[a] > mags[b]:
                ea, eb = entry[true_support[a]], entry[true_support[b]]
                if eb is not None and (ea is None or ea > eb):
                    order_ok = False

    # once the r largest are all held they must stay held
    persistent = True
    for r in range(1, len(true_support) + 1):
        top = frozenset(true_support[:r])
        held = [top <= s for s in supports]
        first = next((t for t, h in enumerate(held) if h), None)
        if first is not None and not all(held[first:]):
            persistent = False

    exact = None
    if bounds.corollary1 and identified is not None:
        exact = all(supports[t] == target for t in range(identified, T))

    return VerificationVerdict(
        support_identified_at=identified,
        within_t_bound=within,
        geometric_envelope_ok=None if envelope is None else envelope[0],
        recruitment_order_ok=order_ok,
        containment_persistent=persistent,
        exact_support_ok=exact,
        details={
            "entry_times": {int(i): entry[i] for i in true_support},
            "t_bound_floor": bounds.t_bound_floor,
            "envelope_anchor": anchor,
            "worst_envelope_ratio": None if envelope is None else envelope[1],
            "envelope_from_identification": None if strict is None else strict[0],
            "worst_ratio_from_identification": None if strict is None else strict[1],
            "iterations_in_trace": T - 1,
        },
    )
