import math

import mpmath as mp
import numpy as np
import pytest

from ait.engine import IterationRecord, SolverConfig, solve
from ait.errors import AITError, HypothesisViolated, IncompleteTrace
from ait.problem import ProblemInstance, coherence, generate_instance, truth_from_signal
from ait.theory import (
    ceil_bound,
    check_hypotheses,
    compute_bounds,
    contraction_factor,
    detection_budget_lr,
    floor_bound,
    iteration_bound,
    iteration_bound_exact_k,
    verify_trace,
)
from ait.thresholding import parse_rule


def bound_reference(c, k, k_star, mu, dr):
    """The iteration bound at 50 digits, written with natural logs."""
    with mp.workdps(50):
        c, mu, dr = mp.mpf(c), mp.mpf(mu), mp.mpf(dr)
        rho = (1 + c) * k * mu
        arg = (1 - (3 + c) * k * mu) / ((3 + c) - (c**2 + 4 * c + 3 + 2 / dr) * k * mu)
        return float(k_star + (k_star - 1) * mp.log(arg) / mp.log(rho) - mp.log(dr) / mp.log(rho))


def lr_reference(c, k, mu, ratio):
    with mp.workdps(50):
        c, mu, ratio = mp.mpf(c), mp.mpf(mu), mp.mpf(ratio)
        rho = (1 + c) * k * mu
        arg = (1 - (3 + c) * k * mu) / ((3 + c) * (1 - rho) * ratio - 2 * k * mu)
        return float(mp.log(arg) / mp.log(rho))


GOLDEN = [
    # c, floored value, real value
    (0.0, 20, 20.9917),
    (1.0, 42, 42.6447),
    (1.0 / 3.0, 25, 25.6246),
    (0.5, 28, 28.5772),
]


class TestContraction:
    @pytest.mark.parametrize("c,expected", [(0.0, 0.225), (1.0, 0.45), (1 / 3, 0.3)])
    def test_values(self, c, expected):
        assert contraction_factor(c, 9, 1 / 40) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("args", [(-0.1, 9, 0.1), (1.5, 9, 0.1), (0.0, 0, 0.1), (0.0, 3, 0.0), (0.0, 3, 1.5)])
    def test_domain(self, args):
        with pytest.raises(AITError):
            contraction_factor(*args)


class TestIterationBound:
    @pytest.mark.parametrize("c,floored,approx", GOLDEN)
    def test_golden(self, c, floored, approx):
        T = iteration_bound(c, 9, 9, 1 / 40, 10.0)
        assert floor_bound(T) == floored
        assert T == pytest.approx(bound_reference(c, 9, 9, 1 / 40, 10), abs=1e-9)
        assert T == pytest.approx(approx, abs=1e-4)
        assert ceil_bound(T) == floored + 1

    def test_unit_dynamic_range(self):
        c, k, mu = 0.0, 5, 0.02
        arg = (1 - 3 * k * mu) / (3 - (3 + 2) * k * mu)
        expected = k + (k - 1) * math.log(arg) / math.log(k * mu)
        assert iteration_bound(c, k, k, mu, 1.0) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("c", [0.0, 1 / 3, 0.5, 1.0])
    def test_exact_k_is_specialisation(self, c):
        assert iteration_bound_exact_k(c, 6, 0.02, 3.0) == iteration_bound(c, 6, 6, 0.02, 3.0)

    def test_single_spike(self):
        # k* = 1: only the dynamic-range term survives and it is zero
        assert iteration_bound(0.0, 1, 1, 0.1, 1.0) == 1.0

    def test_violated(self):
        with pytest.raises(HypothesisViolated) as exc:
            iteration_bound(1.0, 9, 9, 1 / 30, 10.0)
        assert "mu < 1/((3+c)k*)" in str(exc.value)
        with pytest.raises(HypothesisViolated):
            iteration_bound(0.0, 8, 9, 1 / 40, 10.0)
        with pytest.raises(HypothesisViolated):
            iteration_bound(0.0, 14, 9, 1 / 40, 10.0)

    def test_bad_dynamic_range(self):
        with pytest.raises(AITError):
            iteration_bound(0.0, 9, 9, 1 / 40, 0.5)

    def test_budget_argument_positive_under_hypotheses(self):
        # (3+c)(1-rho)r - 2k mu > 2 - 2/(3+c) > 0 whenever k < 1/((3+c)mu)
        for c in (0.0, 0.5, 1.0):
            mu = 0.01
            k = math.ceil(1 / ((3 + c) * mu)) - 1
            assert math.isfinite(detection_budget_lr(c, k, mu, 1.0))

    @pytest.mark.parametrize("seed", range(5))
    def test_reference_random(self, seed):
        r = np.random.default_rng(seed)
        c = float(r.choice([0.0, 1 / 3, 0.5, 1.0]))
        k_star = int(r.integers(2, 10))
        mu = float(r.uniform(0.1, 0.99)) / ((3 + c) * k_star)
        k = k_star
        dr = float(r.uniform(1, 50))
        assert iteration_bound(c, k, k_star, mu, dr) == pytest.approx(
            bound_reference(c, k, k_star, mu, dr), abs=1e-9
        )


class TestDetectionBudget:
    def test_unit_ratio(self):
        v = detection_budget_lr(0.0, 9, 1 / 40, 1.0)
        assert v == pytest.approx(math.log(0.325 / 1.875) / math.log(0.225), abs=1e-12)
        assert v == pytest.approx(1.174, abs=1e-3)

    def test_reference(self):
        for ratio in (1.0, 2.0, 10.0, 37.5):
            assert detection_budget_lr(0.0, 9, 1 / 40, ratio) == pytest.approx(
                lr_reference(0.0, 9, 1 / 40, ratio), abs=1e-12
            )

    def test_grows_with_ratio(self):
        # a wider gap to the next entry makes it harder to detect
        l2 = detection_budget_lr(0.0, 9, 1 / 40, 2.0)
        l10 = detection_budget_lr(0.0, 9, 1 / 40, 10.0)
        assert l2 == pytest.approx(1.715, abs=1e-3)
        assert l10 == pytest.approx(2.85, abs=1e-2)
        assert l10 > l2

    def test_summation_identity(self):
        r = np.random.default_rng(11)
        checked = 0
        for _ in range(400):
            c = float(r.choice([0.0, 1 / 3, 0.5, 1.0]))
            k_star = int(r.integers(2, 12))
            mu = float(r.uniform(0.01, 0.999)) / ((3 + c) * k_star)
            k_cap = 1 / ((3 + c) * mu)
            k = int(r.integers(k_star, max(k_star + 1, math.ceil(k_cap))))
            if not k < k_cap:
                continue
            dr = float(np.exp(r.uniform(0, 5)))
            ratios = np.exp(r.dirichlet(np.ones(k_star - 1)) * math.log(dr))
            total = k_star + sum(detection_budget_lr(c, k, mu, float(q)) for q in ratios)
            assert total <= iteration_bound(c, k, k_star, mu, dr) + 1e-9
            checked += 1
        assert checked > 300

    def test_ratio_below_one(self):
        with pytest.raises(AITError):
            detection_budget_lr(0.0, 9, 1 / 40, 0.5)

    def test_k_too_large(self):
        with pytest.raises(HypothesisViolated):
            detection_budget_lr(0.0, 14, 1 / 40, 1.0)


class TestHypotheses:
    def test_worked_example(self):
        h = check_hypotheses(0.0, 9, 9, 1 / 40)
        assert h.theorem1 and h.corollary1 and h.failed == ()
        assert h.slack["mu_below_cap"] == pytest.approx(1 / 27 - 1 / 40)
        assert h.slack["k_below_cap"] == pytest.approx(40 / 3 - 9)

    def test_soft_violation(self):
        h = check_hypotheses(1.0, 9, 9, 1 / 30)
        assert not h.theorem1 and not h.corollary1
        assert h.slack["mu_below_cap"] < 0
        assert len(h.failed) == 2

    def test_larger_k(self):
        h = check_hypotheses(0.0, 12, 9, 1 / 40)
        assert h.theorem1 and not h.corollary1

    def test_k_below_kstar(self):
        h = check_hypotheses(0.0, 8, 9, 1 / 40)
        assert not h.theorem1 and h.slack["k_at_least_kstar"] == -1

    def test_uniqueness_informational(self):
        assert check_hypotheses(0.0, 9, 9, 1 / 40).unique_sparsest is True
        assert check_hypotheses(0.0, 3, 3, 0.5).unique_sparsest is False

    def test_rho_below_half(self):
        r = np.random.default_rng(5)
        hits = 0
        for _ in range(2000):
            c = float(r.uniform(0, 1))
            k_star = int(r.integers(1, 20))
            mu = float(r.uniform(1e-4, 1.0 / ((3 + c) * k_star)))
            k = int(r.integers(k_star, k_star + 30))
            if check_hypotheses(c, k, k_star, mu).theorem1:
                hits += 1
                assert contraction_factor(c, k, mu) < 0.5
        assert hits > 100


def test_monotonicity_grid():
    checked = 0
    for c in (0.0, 1 / 3, 0.5, 1.0):
        for mu in (0.004, 0.01, 0.02):
            k_cap = 1 / ((3 + c) * mu)
            for k_star in range(2, 12):
                if not mu < 1 / ((3 + c) * k_star):
                    continue
                ks = [k for k in range(k_star, math.ceil(k_cap) + 1) if k < k_cap]
                for dr in (1.0, 2.0, 10.0, 100.0):
                    vals = [iteration_bound(c, k, k_star, mu, dr) for k in ks]
                    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
                    checked += len(vals)
                    if mu < 1 / ((3 + c) * (k_star + 1)):
                        k = k_star + 1
                        assert iteration_bound(c, k, k_star + 1, mu, dr) >= iteration_bound(c, k, k_star, mu, dr) - 1e-9
                for k in ks:
                    drs = [iteration_bound(c, k, k_star, mu, d) for d in (1.0, 1.5, 3.0, 10.0, 1e3)]
                    assert all(b >= a - 1e-9 for a, b in zip(drs, drs[1:]))
    assert checked > 500


class TestComputeBounds:
    def test_worked_example(self):
        b = compute_bounds(1 / 40, 0.0, 9, 9, 10.0)
        assert b.theorem1 and b.corollary1 and b.t_bound_floor == 20
        assert b.rho == pytest.approx(0.225)
        assert b.t_bound == b.t_bound_exact_k

    def test_violated_gives_none(self):
        b = compute_bounds(0.05, 0.0, 9, 9, 10.0)
        assert b.t_bound is None and b.t_bound_floor is None and not b.theorem1

    def test_uses_truth(self):
        truth = truth_from_signal([0.0, 8.0, 0.0, -2.0, 1.0])
        b = compute_bounds(0.02, 0.0, 3, 3, truth=truth)
        assert b.dr == 8.0
        assert len(b.l_budgets) == 2
        assert b.l_budgets[0] == pytest.approx(detection_budget_lr(0.0, 3, 0.02, 4.0))
        assert b.l_budgets[1] == pytest.approx(detection_budget_lr(0.0, 3, 0.02, 2.0))


def _certified_run(rule, k_star, k, dr, seed):
    inst = generate_instance(256, 512, k_star, dr, seed=seed, ensemble="spikes_hadamard")
    mu = coherence(inst.matrix).mu
    res = solve(inst, SolverConfig(rule, k))
    bounds = compute_bounds(mu, parse_rule(rule).c, k, k_star, truth=inst.truth)
    return inst, res, bounds


class TestVerifyTrace:
    @pytest.mark.parametrize("rule", ["hard", "half", "twothirds", "soft", "scad"])
    def test_certified_exact_k(self, rule):
        inst, res, bounds = _certified_run(rule, 3, 3, 4.0, seed=2)
        assert bounds.corollary1
        v = verify_trace(res.trace, inst.truth, bounds)
        assert v.support_identified_at is not None
        assert v.within_t_bound and v.geometric_envelope_ok
        assert v.recruitment_order_ok and v.containment_persistent
        assert v.exact_support_ok
        assert v.all_ok()
        assert v.support_identified_at <= res.iterations_run

    def test_certified_larger_k(self):
        inst, res, bounds = _certified_run("hard", 2, 4, 10.0, seed=4)
        assert bounds.theorem1 and not bounds.corollary1
        v = verify_trace(res.trace, inst.truth, bounds)
        assert v.all_ok() and v.exact_support_ok is None

    def test_k_below_kstar(self):
        inst = generate_instance(64, 128, 3, 2.0, seed=0, ensemble="spikes_hadamard")
        mu = coherence(inst.matrix).mu
        res = solve(inst, SolverConfig("hard", 2, max_iterations=50))
        v = verify_trace(res.trace, inst.truth, compute_bounds(mu, 0.0, 2, 3, truth=inst.truth))
        assert v.support_identified_at is None
        assert not v.all_ok()

    def test_empty_truth(self):
        inst = generate_instance(8, 16, 0, 1.0, seed=0)
        res = solve(inst, SolverConfig("hard", 2))
        b = compute_bounds(coherence(inst.matrix).mu, 0.0, 2, 0, truth=inst.truth)
        v = verify_trace(res.trace, inst.truth, b)
        assert v.support_identified_at == 0
        assert v.within_t_bound and v.geometric_envelope_ok and v.recruitment_order_ok

    def test_incomplete(self):
        inst, res, bounds = _certified_run("hard", 2, 2, 1.0, seed=1)
        with pytest.raises(IncompleteTrace):
            verify_trace([], inst.truth, bounds)
        with pytest.raises(IncompleteTrace):
            verify_trace(res.trace[1:], inst.truth, bounds)
        gap = res.trace[:1] + res.trace[2:]
        with pytest.raises(IncompleteTrace):
            verify_trace(gap, inst.truth, bounds)

    def test_detects_order_violation(self):
        truth = truth_from_signal([4.0, 0.0, 1.0, 0.0])
        trace = [
            IterationRecord(0, ()),
            IterationRecord(1, (2,)),
            IterationRecord(2, (0, 2)),
        ]
        b = compute_bounds(0.05, 0.0, 2, 2, truth=truth)
        v = verify_trace(trace, truth, b)
        assert not v.recruitment_order_ok
        assert v.support_identified_at == 2

    def test_detects_lost_containment(self):
        truth = truth_from_signal([4.0, 0.0, 1.0, 0.0])
        trace = [
            IterationRecord(0, ()),
            IterationRecord(1, (0, 2)),
            IterationRecord(2, (1, 2)),
            IterationRecord(3, (0, 2)),
        ]
        b = compute_bounds(0.05, 0.0, 2, 2, truth=truth)
        v = verify_trace(trace, truth, b)
        assert not v.containment_persistent
        assert v.support_identified_at == 3
        assert v.exact_support_ok

    def test_detects_envelope_breach(self):
        truth = truth_from_signal([4.0, 0.0, 1.0, 0.0])
        x_bad = np.array([4.0, 0.0, 1.5, 0.0])
        trace = [IterationRecord(0, ())] + [
            IterationRecord(t, (0, 2), x=x_bad) for t in range(1, 6)
        ]
        b = compute_bounds(0.05, 0.0, 2, 2, truth=truth)
        v = verify_trace(trace, truth, b)
        assert v.geometric_envelope_ok is False
        assert v.details["worst_envelope_ratio"] > 1

    def test_thinned_trace_uses_linf(self):
        inst, res, bounds = _certified_run("hard", 2, 2, 2.0, seed=7)
        thin = [IterationRecord(r.t, r.support, r.tau, linf_err=r.linf_err) for r in res.trace]
        a = verify_trace(res.trace, inst.truth, bounds)
        b = verify_trace(thin, inst.truth, bounds)
        assert a.all_ok() == b.all_ok()
        assert a.details["worst_envelope_ratio"] == pytest.approx(b.details["worst_envelope_ratio"])

    def test_zero_data_instance(self):
        inst = generate_instance(8, 16, 2, 1.0, seed=0)
        zero = ProblemInstance(inst.matrix, np.zeros(8), truth=truth_from_signal(np.zeros(16)))
        res = solve(zero, SolverConfig("soft", 2))
        v = verify_trace(res.trace, zero.truth, compute_bounds(0.1, 1.0, 2, 0, truth=zero.truth))
        assert v.support_identified_at == 0 and v.all_ok()
