"""Command-line front end: ``ait gen | solve | theory | sweep | verify``.

Exit codes: 0 success, 1 usage or I/O error, 2 the solve hit the divergence guard.
"""
from __future__ import annotations

import argparse
import csv
import io as _stringio
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .engine import SolverConfig, solve
from .errors import AITError
from .io import (
    SCHEMA_VERSION,
    dump_json,
    load_bundle,
    read_trace_csv,
    write_bundle,
    write_trace_csv,
)
from .problem import coherence, generate_instance, welch_bound
from .theory import (
    ceil_bound,
    check_hypotheses,
    compute_bounds,
    floor_bound,
    iteration_bound,
    verify_trace,
)
from .thresholding import ALL_RULES, parse_rule

log = logging.getLogger("ait")

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2


def _num(v):
    """JSON-safe float: non-finite values become None."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def bounds_to_dict(b):
    return {
        "mu": _num(b.mu),
        "c": _num(b.c),
        "k": b.k,
        "k_star": b.k_star,
        "dr": _num(b.dr),
        "rho": _num(b.rho),
        "t_bound": _num(b.t_bound),
        "t_bound_floor": b.t_bound_floor,
        "t_bound_exact_k": _num(b.t_bound_exact_k),
        "l_budgets": [_num(v) for v in b.l_budgets],
        "hypotheses": {
            "theorem1": b.hypotheses.theorem1,
            "corollary1": b.hypotheses.corollary1,
            "failed": list(b.hypotheses.failed),
            "unique_sparsest": b.hypotheses.unique_sparsest,
        },
    }


def verdict_to_dict(v):
    d = {
        "support_identified_at": v.support_identified_at,
        "within_t_bound": v.within_t_bound,
        "geometric_envelope_ok": v.geometric_envelope_ok,
        "recruitment_order_ok": v.recruitment_order_ok,
        "containment_persistent": v.containment_persistent,
        "exact_support_ok": v.exact_support_ok,
        "all_ok": v.all_ok(),
    }
    details = dict(v.details)
    if "entry_times" in details:
        details["entry_times"] = {str(i): t for i, t in details["entry_times"].items()}
    for key in ("worst_envelope_ratio", "worst_ratio_from_identification"):
        if key in details:
            details[key] = _num(details[key])
    d["details"] = details
    return d


def build_report(instance, config, result, wall_seconds=None):
    """Assemble the schema-1 recovery report for one solve."""
    report = {
        "schema": SCHEMA_VERSION,
        "instance": {
            "M": instance.matrix.M,
            "N": instance.matrix.N,
            "seed": instance.seed,
            "meta": instance.meta,
        },
        "config": {
            "rule": config.rule.name,
            "k": config.k,
            "max_iterations": config.max_iterations,
            "stall_tolerance": config.stall_tolerance,
            "stable_support_window": config.stable_support_window,
        },
        "halt_reason": result.halt_reason.value,
        "diverged": result.diverged,
        "iterations_run": result.iterations_run,
        "final_support": list(result.final_support),
        "support_identified_at": None,
        "theory": None,
        "verdict": None,
        "errors": None,
    }
    truth = instance.truth
    if truth is not None:
        mu = coherence(instance.matrix).mu
        bounds = compute_bounds(mu, config.rule.c, config.k, truth.sparsity, truth=truth)
        verdict = verify_trace(result.trace, truth, bounds)
        diff = result.final_x_normalized - truth.signal
        report["support_identified_at"] = verdict.support_identified_at
        report["theory"] = bounds_to_dict(bounds)
        report["verdict"] = verdict_to_dict(verdict)
        report["errors"] = {
            "linf": _num(np.max(np.abs(diff))),
            "l2": _num(np.linalg.norm(diff)),
        }
    if wall_seconds is not None:
        report["timing"] = {"wall_seconds": wall_seconds}
    return report


def cmd_gen(args):
    instance = generate_instance(
        args.M,
        args.N,
        args.k,
        args.dr,
        signs=args.signs,
        seed=args.seed,
        ensemble=args.ensemble,
    )
    write_bundle(instance, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_solve(args):
    instance = load_bundle(args.bundle)
    k = args.k
    if k is None:
        if instance.truth is not None and instance.truth.sparsity > 0:
            k = instance.truth.sparsity
        else:
            k = math.ceil(math.sqrt(instance.matrix.M))
            log.warning("no -k given and no truth available; using ceil(sqrt(M)) = %d", k)
    config = SolverConfig(
        rule=parse_rule(args.rule),
        k=k,
        max_iterations=args.max_iter,
        stall_tolerance=args.stall_tol,
        stable_support_window=args.window,
    )
    start = time.perf_counter()
    result = solve(instance, config)
    wall = time.perf_counter() - start
    report = build_report(instance, config, result, wall_seconds=None if args.no_timing else wall)
    text = dump_json(report, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    if args.x_out:
        with open(args.x_out, "w") as fh:
            for v in result.final_x:
                fh.write(format(float(v), ".17g") + "\n")
    return EXIT_DIVERGED if result.diverged else EXIT_OK


def theory_table(k_star, mu, dr, k, rules=ALL_RULES):
    rows = []
    for rule in rules:
        c = rule.c
        h = check_hypotheses(c, k, k_star, mu)
        row = {
            "rule": rule.name,
            "c": c,
            "mu_cap": 1.0 / ((3.0 + c) * k_star),
            "theorem1": h.theorem1,
            "corollary1": h.corollary1,
            "rho": (1.0 + c) * k * mu,
            "t_bound": None,
            "t_floor": None,
            "t_ceil": None,
            "error": None,
        }
        try:
            t = iteration_bound(c, k, k_star, mu, dr)
            row.update(t_bound=t, t_floor=floor_bound(t), t_ceil=ceil_bound(t))
        except AITError as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows


def cmd_theory(args):
    if args.welch:
        if args.M is None or args.N is None:
            raise AITError("--welch needs -M and -N")
        w = welch_bound(args.M, args.N)
        if args.json:
            sys.stdout.write(dump_json({"welch_bound": w, "M": args.M, "N": args.N}))
        else:
            print(f"welch bound (M={args.M}, N={args.N}): {w:.6g}")
            print(f"1/sqrt(M) approximation: {1 / math.sqrt(args.M):.6g}")
        return EXIT_OK
    if args.kstar is None or args.mu is None:
        raise AITError("theory needs --kstar and --mu (or --welch)")
    k = args.k if args.k is not None else args.kstar
    rules = [parse_rule(r) for r in args.rule] if args.rule else ALL_RULES
    rows = theory_table(args.kstar, args.mu, args.dr, k, rules)
    if args.json:
        payload = {"k_star": args.kstar, "mu": args.mu, "dr": args.dr, "k": k, "rules": rows}
        sys.stdout.write(dump_json(payload))
        return EXIT_OK
    print(f"k*={args.kstar}  mu={args.mu:g}  Dr={args.dr:g}  k={k}")
    print(f"{'rule':<10}{'c':>7}{'mu cap':>10}{'thm1':>6}{'cor1':>6}{'rho':>9}{'T':>12}{'floor':>7}{'ceil':>6}")
    for r in rows:
        if r["error"]:
            tail = f"  {r['error']}"
        else:
            tail = f"{r['t_bound']:>12.4f}{r['t_floor']:>7d}{r['t_ceil']:>6d}"
        print(
            f"{r['rule']:<10}{r['c']:>7.4f}{r['mu_cap']:>10.5f}{str(r['theorem1'])[0]:>6}"
            f"{str(r['corollary1'])[0]:>6}{r['rho']:>9.4f}{tail}"
        )
    return EXIT_OK


# ---------------------------------------------------------------- sweep

SWEEP_AXES = ("rule", "k", "M", "N", "k_star", "dr")
SWEEP_CSV_COLUMNS = (
    "rule",
    "k",
    "M",
    "N",
    "k_star",
    "dr",
    "trials",
    "successes",
    "success_rate",
    "mean_support_identified_at",
    "certified_fraction",
    "errors",
)


def _as_list(v):
    return v if isinstance(v, list) else [v]


def load_sweep_spec(path):
    spec = json.loads(Path(path).read_text())
    grid = spec.get("grid", {})
    missing = [a for a in SWEEP_AXES if a not in grid]
    if missing:
        raise AITError(f"sweep grid is missing axes: {', '.join(missing)}")
    for axis in SWEEP_AXES:
        grid[axis] = _as_list(grid[axis])
    for r in grid["rule"]:
        parse_rule(r)
    crit = spec.get("success_criterion", "support_exact")
    if isinstance(crit, dict):
        if set(crit) != {"linf_below"}:
            raise AITError("success_criterion must be 'support_exact' or {'linf_below': eps}")
    elif crit != "support_exact":
        raise AITError("success_criterion must be 'support_exact' or {'linf_below': eps}")
    return {
        "grid": grid,
        "trials_per_cell": int(spec.get("trials_per_cell", 10)),
        "base_seed": int(spec.get("base_seed", 0)),
        "success_criterion": crit,
        "ensemble": spec.get("ensemble", "gaussian"),
        "signs": spec.get("signs", "random"),
    }


def _cells(grid):
    for combo in itertools.product(*(grid[a] for a in SWEEP_AXES)):
        yield dict(zip(SWEEP_AXES, combo))


def _trial(cell, trial, spec):
    """One generate -> solve -> verify pipeline; returns a plain dict."""
    try:
        instance = generate_instance(
            cell["M"],
            cell["N"],
            cell["k_star"],
            cell["dr"],
            signs=spec["signs"],
            seed=spec["base_seed"] + trial,
            ensemble=spec["ensemble"],
        )
        rule = parse_rule(cell["rule"])
        result = solve(instance, SolverConfig(rule=rule, k=cell["k"]))
        truth = instance.truth
        mu = coherence(instance.matrix).mu
        bounds = compute_bounds(mu, rule.c, cell["k"], truth.sparsity, truth=truth)
        verdict = verify_trace(result.trace, truth, bounds)
        crit = spec["success_criterion"]
        if crit == "support_exact":
            ok = set(result.final_support) == set(truth.support)
        else:
            err = float(np.max(np.abs(result.final_x_normalized - truth.signal)))
            ok = err < float(crit["linf_below"])
        return {
            "success": bool(ok),
            "identified_at": verdict.support_identified_at,
            "certified": bounds.theorem1,
            "error": None,
        }
    except AITError as exc:
        return {"success": False, "identified_at": None, "certified": False, "error": str(exc)}


def _threads():
    env = os.environ.get("AIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(spec):
    """Run every cell of the sweep; returns the list of per-cell summaries."""
    cells = list(_cells(spec["grid"]))
    n = spec["trials_per_cell"]
    jobs = [(ci, t) for ci in range(len(cells)) for t in range(n)]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        # map preserves submission order, so aggregation is order-independent
        outcomes = list(pool.map(lambda job: _trial(cells[job[0]], job[1], spec), jobs))
    summaries = []
    for ci, cell in enumerate(cells):
        trials = outcomes[ci * n : (ci + 1) * n]
        ids = [o["identified_at"] for o in trials if o["identified_at"] is not None]
        summaries.append(
            {
                **cell,
                "rule": parse_rule(cell["rule"]).name,
                "trials": n,
                "successes": sum(o["success"] for o in trials),
                "success_rate": sum(o["success"] for o in trials) / n if n else None,
                "mean_support_identified_at": float(np.mean(ids)) if ids else None,
                "certified_fraction": sum(o["certified"] for o in trials) / n if n else None,
                "errors": sum(o["error"] is not None for o in trials),
                "error_messages": sorted({o["error"] for o in trials if o["error"]}),
            }
        )
    return summaries


def sweep_csv(summaries):
    buf = _stringio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_CSV_COLUMNS)
    for s in summaries:
        row = []
        for col in SWEEP_CSV_COLUMNS:
            v = s[col]
            if v is None:
                row.append("")
            elif isinstance(v, float):
                row.append(format(v, ".17g"))
            else:
                row.append(v)
        w.writerow(row)
    return buf.getvalue()


def cmd_sweep(args):
    spec = load_sweep_spec(args.spec)
    start = time.perf_counter()
    summaries = run_sweep(spec)
    wall = time.perf_counter() - start
    text = sweep_csv(summaries)
    if args.out_csv:
        Path(args.out_csv).write_text(text)
    else:
        sys.stdout.write(text)
    if args.out_json:
        trials = sum(s["trials"] for s in summaries)
        payload = {
            "schema": SCHEMA_VERSION,
            "spec": spec,
            "cells": summaries,
            "totals": {
                "cells": len(summaries),
                "trials": trials,
                "successes": sum(s["successes"] for s in summaries),
                "errors": sum(s["errors"] for s in summaries),
            },
        }
        if not args.no_timing:
            payload["timing"] = {"wall_seconds": wall}
        dump_json(payload, args.out_json)
    return EXIT_OK


def cmd_verify(args):
    instance = load_bundle(args.bundle)
    truth = instance.truth
    if truth is None:
        raise AITError(f"{args.bundle} has no xstar.csv; nothing to verify against")
    trace = read_trace_csv(args.trace)
    rule = parse_rule(args.rule)
    k = args.k if args.k is not None else max(truth.sparsity, 1)
    mu = coherence(instance.matrix).mu
    bounds = compute_bounds(mu, rule.c, k, truth.sparsity, truth=truth)
    verdict = verify_trace(trace, truth, bounds)
    payload = {
        "schema": SCHEMA_VERSION,
        "rule": rule.name,
        "k": k,
        "theory": bounds_to_dict(bounds),
        "verdict": verdict_to_dict(verdict),
    }
    text = dump_json(payload, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ait", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance bundle")
    g.add_argument("-M", type=int, required=True)
    g.add_argument("-N", type=int, required=True)
    g.add_argument("-k", "--kstar", dest="k", type=int, required=True, help="true sparsity k*")
    g.add_argument("--dr", type=float, default=1.0, help="dynamic range of x*")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--signs", choices=("random", "positive"), default="random")
    g.add_argument("--ensemble", choices=("gaussian", "spikes_hadamard"), default="gaussian")
    g.add_argument("-o", "--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the solver on a bundle")
    s.add_argument("bundle")
    s.add_argument("--rule", default="hard", help="hard|half|twothirds|soft|scad[:a=3.7]")
    s.add_argument("-k", type=int, default=None, help="specified sparsity level")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--stall-tol", type=float, default=1e-10)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("-o", "--out", default=None, help="report JSON path (default stdout)")
    s.add_argument("--trace", default=None, help="write the trace CSV here")
    s.add_argument("--x-out", default=None, help="write the final x (original coordinates)")
    s.add_argument("--no-timing", action="store_true", help="omit the timing block")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("theory", help="evaluate the convergence bounds")
    t.add_argument("--kstar", type=int)
    t.add_argument("--mu", type=float)
    t.add_argument("--dr", type=float, default=1.0)
    t.add_argument("--k", type=int, default=None, help="specified sparsity (default k*)")
    t.add_argument("--rule", action="append", help="restrict to these rules")
    t.add_argument("--welch", action="store_true", help="print the Welch bound for -M, -N")
    t.add_argument("-M", type=int)
    t.add_argument("-N", type=int)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_theory)

    w = sub.add_parser("sweep", help="run a parameter sweep from a JSON spec")
    w.add_argument("spec")
    w.add_argument("--out-csv", default=None)
    w.add_argument("--out-json", default=None)
    w.add_argument("--no-timing", action="store_true")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="check a trace CSV against the theorem")
    v.add_argument("bundle")
    v.add_argument("trace")
    v.add_argument("--rule", default="hard")
    v.add_argument("-k", type=int, default=None, help="k used for the solve (default k*)")
    v.add_argument("-o", "--out", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for divergence
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AITError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
