"""Acceptance checks, one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import logging
import math
import sys
import time
from dataclasses import replace

import mpmath
import pytest

from corrqkd.config import Truncation, parse_config
from corrqkd.corrmodel import INFINITE, LtiModel, required_lc, trace_distance_bound, xi_at, xi_total
from corrqkd.estimator import BoundTable, EstimatorSpec, sampling_estimator, tabulate
from corrqkd.keyrate import (
    binary_entropy,
    ec_leakage,
    finalize_key,
    key_length,
    sweep,
    sweep_queries,
    uncorrelated_key_result,
)
from corrqkd.partition import EmptyKeyError, EpsBudget, RoundLog, combine_bounds, partition_rounds, restrict_data
from corrqkd.verify import AttackModel, binomial_slack, check_fidelity_chain, check_truncation, mc_peep, mc_union

SEED = 20251015


def announce(capsys, n, name, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_1_formula_fidelity(capsys):
    t0 = time.perf_counter()
    m = LtiModel(1e-3, 12.7)
    got = xi_total(m, INFINITE)
    mpmath.mp.dps = 40
    series = mpmath.nsum(lambda l: mpmath.mpf("1e-3") * mpmath.exp(-mpmath.mpf("12.7") * (l - 1)), [1, mpmath.inf])
    rel_xi = abs(got - float(series)) / float(series)

    ref = LtiModel(1e-6, 12.7)
    N = 10**12
    d = trace_distance_bound(ref, N, 5)
    tail = mpmath.sqrt(N) * mpmath.nsum(
        lambda l: mpmath.sqrt(mpmath.mpf("1e-6") * mpmath.exp(-mpmath.mpf("12.7") * (l - 1))), [6, mpmath.inf]
    )
    rel_d = abs(d - float(tail)) / float(tail)
    rel_target = abs(d - 1.63e-11) / 1.63e-11

    l_c = required_lc(ref, N, 1e-11)
    linear = next(k for k in range(100) if trace_distance_bound(ref, N, k) <= 1e-11)
    elapsed = time.perf_counter() - t0

    ok = (
        rel_xi <= 1e-12
        and abs(got - 1.000003e-3) / 1.000003e-3 < 1e-6
        and rel_d <= 1e-12
        and rel_target <= 0.01
        and l_c == 6 == linear
        and elapsed < 1.0
    )
    announce(
        capsys, 1, "formula fidelity", ok,
        f"xi_total={got:.10e} rel.err {rel_xi:.1e}; d(l_c=5)={d:.4e} rel.err vs tail sum {rel_d:.1e}; "
        f"required_lc={l_c} (linear search {linear}); {elapsed:.3f} s",
    )
    assert ok


def test_criterion_2_fidelity_theorem(capsys):
    t0 = time.perf_counter()
    draws = 0
    violations = 0
    margin = math.inf
    # strongest admissible correlations allowed by the criterion, every l_c up to 4
    for l_c in (1, 2, 3, 4):
        r = check_fidelity_chain(LtiModel(0.1, 0.5), 2500, SEED + l_c, l_c=l_c)
        draws += r.trials
        violations += r.violations
        margin = min(margin, r.details["min_margin"])
    elapsed = time.perf_counter() - t0
    ok = draws == 10**4 and violations == 0 and elapsed < 10
    announce(
        capsys, 2, "fidelity floor theorem", ok,
        f"{draws} tables, {violations} violations, smallest margin {margin:.2e}; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_3_truncation_oracle(capsys):
    t0 = time.perf_counter()
    results = [
        check_truncation(LtiModel(xi1, C), 8, None, SEED, tables=100)
        for xi1, C in ((0.01, 1.0), (0.1, 0.5))
    ]
    elapsed = time.perf_counter() - t0
    checks = sum(r.trials for r in results)
    violations = sum(r.violations for r in results)
    worst = max(r.details["max_d_over_bound"] for r in results)
    # 36 (N, l_c) pairs with N <= 8, l_c < N; 100 tables each; two models
    ok = checks == 2 * 36 * 100 and violations == 0 and elapsed < 60
    announce(
        capsys, 3, "truncation oracle", ok,
        f"{checks} exact distances, {violations} above the bound, max d/bound {worst:.3f}; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_4_combination_soundness(capsys):
    t0 = time.perf_counter()
    lines = []
    ok = True
    for l_c in (1, 2, 5):
        sizes = partition_rounds(10**4 + 3, l_c).sizes
        for p in (0.01, 0.05):
            r = mc_union(sizes, p, 10**6, SEED + 10 * l_c + int(p * 100))
            fine = r.passed and r.details["containment_failures"] == 0
            ok &= fine
            lines.append(f"l_c={l_c} p={p}: Pr[B]={r.frequency:.5f} <= {r.bound:.5f}, containment failures {r.details['containment_failures']}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    announce(capsys, 4, "combination soundness", ok, "; ".join(lines) + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_5_protocol_soundness(capsys):
    t0 = time.perf_counter()
    trials, eps, N = 10**4, 1e-3, 10**4
    cases = [
        (0, LtiModel(0.0, 12.7), EstimatorSpec("sampling")),
        (1, LtiModel(1e-3, 12.7), EstimatorSpec("reference_penalty")),
    ]
    attacks = [AttackModel("rotation", angle=0.2), AttackModel("intercept_resend", basis="Z")]
    ok = True
    lines = []
    for i, (l_c, model, est) in enumerate(cases):
        for j, attack in enumerate(attacks):
            r = mc_peep(attack, est, model, N, l_c, trials, eps, SEED + 2 * i + j)
            threshold = (l_c + 1) * eps + binomial_slack(eps, trials)
            fine = r.frequency <= threshold and r.details["containment_failures"] == 0
            ok &= fine
            lines.append(
                f"{attack.kind} l_c={l_c} xi1={model.xi1}: {r.violations}/{trials} violations "
                f"(limit {threshold:.5f}, mean e_ph {r.details['mean_phase_error_rate']:.4f})"
            )
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    announce(capsys, 5, "end-to-end protocol soundness", ok, "; ".join(lines) + f"; {elapsed:.1f} s")
    assert ok


def trend_curves():
    """Key-rate curves at the default channel parameters, all sharing one estimator.

    The estimator is a lookup table filled with the sampling bound at exactly
    the data every curve will query; the shipped distance-penalty estimator is
    vacuous at this block size once the source correlates.
    """
    base = parse_config({})
    modes = {"l_c=1": Truncation("explicit", l_c=1), "l_c=5": Truncation("explicit", l_c=5), "l_c=inf": Truncation("infinite")}
    variants = {
        (xi1, name): replace(base, model=replace(base.model, xi1=xi1), truncation=t)
        for xi1 in (0.0, 1e-6, 1e-3)
        for name, t in modes.items()
    }
    probe = EstimatorSpec("table", {"table": BoundTable({})})
    queries = [q for v in variants.values() for q in sweep_queries(replace(v, estimator=probe))]
    uncorrelated = replace(base, model=replace(base.model, xi1=0.0))
    table = EstimatorSpec("table", {"table": tabulate(queries, sampling_estimator)})
    rates = {k: [p.key_rate for p in sweep(replace(v, estimator=table))] for k, v in variants.items()}
    reference = [uncorrelated_key_result(replace(uncorrelated, estimator=table), a).l / base.protocol.N for a in base.att_grid]
    return base.att_grid, rates, reference, variants


def test_criterion_6_key_rate_trends(capsys, caplog):
    caplog.set_level(logging.ERROR)
    t0 = time.perf_counter()
    grid, rates, reference, variants = trend_curves()
    modes = ("l_c=1", "l_c=5", "l_c=inf")

    # (a) more correlation never helps
    mono = all(
        rates[(lo, m)][i] >= rates[(hi, m)][i]
        for m in modes
        for lo, hi in ((0.0, 1e-6), (1e-6, 1e-3))
        for i in range(len(grid))
    )
    default_est = {k: [p.key_rate for p in sweep(v)] for k, v in variants.items()}
    mono_default = all(
        default_est[(lo, m)][i] >= default_est[(hi, m)][i]
        for m in modes
        for lo, hi in ((0.0, 1e-6), (1e-6, 1e-3))
        for i in range(len(grid))
    )

    # (b) no correlation reproduces the unpartitioned pipeline exactly
    same = all(rates[(0.0, m)] == reference for m in modes)

    # (c) unbounded correlations cost within 1% of the length-5 truncation
    worst, worst_at, compared = 0.0, None, 0
    within = {}
    for xi1 in (1e-6, 1e-3):
        within[xi1], broken = None, False
        for a, r5, ri in zip(grid, rates[(xi1, "l_c=5")], rates[(xi1, "l_c=inf")]):
            if not (r5 > 0 and ri > 0):
                continue
            compared += 1
            dev = abs(ri - r5) / r5
            if dev > worst:
                worst, worst_at = dev, (xi1, a)
            # last attenuation before the first gap above 1%
            broken = broken or dev > 0.01
            if not broken:
                within[xi1] = a
    close = compared > 0 and worst <= 0.01

    # (d) key-length spot value
    spot = key_length(1000, 0.0, 0, 1e-10, 1e-10)

    elapsed = time.perf_counter() - t0
    parts = {
        "a": mono and mono_default,
        "b": same,
        "c": close,
        "d": spot == 901,
    }
    ok = all(parts.values()) and elapsed < 60
    announce(
        capsys, 6, "key-rate trends", ok,
        f"(a) {'ok' if parts['a'] else 'FAIL'}; (b) {'ok' if parts['b'] else 'FAIL'}; "
        f"(c) {'ok' if parts['c'] else 'FAIL'}: max relative gap {worst:.2%} at xi1={worst_at[0] if worst_at else None}, "
        f"{worst_at[1] if worst_at else None} dB over {compared} points; within 1% up to "
        f"{within[1e-6]} dB (xi1=1e-6) and {within[1e-3]} dB (xi1=1e-3); (d) key length {spot}; {elapsed:.1f} s",
    )
    for name, good in parts.items():
        assert good, f"criterion 6({name})"
    assert elapsed < 60


def test_criterion_7_degenerate_inputs(capsys):
    checks = {}
    checks["n_K=0 key length"] = key_length(0, 0.0, 0, 1e-10, 1e-10) == 0
    try:
        combine_bounds([(0, 0.3), (0, 0.1)], 1e-10, 1)
        checks["n_K=0 combine"] = False
    except EmptyKeyError:
        checks["n_K=0 combine"] = True
    empty = restrict_data(RoundLog.empty(9), partition_rounds(9, 2))
    res = finalize_key(empty, EstimatorSpec("sampling"), EpsBudget(1e-10, 1e-10, 1e-10), 2, 1.16)
    checks["n_K=0 pipeline"] = res.l == 0 and res.reason == "no sifted key"
    checks["empty partition"] = combine_bounds([(0, 0.9), (50, 0.03)], 1e-10, 1)[0] == 0.03
    checks["empty set of rounds"] = partition_rounds(2, 4).sizes == [0, 1, 1, 0, 0]
    zero = LtiModel(0.0, 12.7)
    checks["xi1=0"] = (
        xi_total(zero, INFINITE) == 0
        and trace_distance_bound(zero, 10**12, 0) == 0
        and required_lc(zero, 10**12, 1e-11) == 0
        and xi_at(zero, 3) == 0
    )
    checks["l_c=0"] = (
        xi_total(LtiModel(1e-3, 12.7), 0) == 0
        and [s.tolist() for s in partition_rounds(4, 0).sets] == [[1, 2, 3, 4]]
        and combine_bounds([(10, 0.2)], 1e-9, 0) == (0.2, 1e-9)
    )
    checks["E_ph>=0.5"] = (
        binary_entropy(0.5) == 1
        and binary_entropy(0.8) == 1
        and key_length(10**6, 0.5, 0, 1e-10, 1e-10) == 0
        and key_length(10**6, 0.9, 0, 1e-10, 1e-10) == 0
    )
    checks["no test data"] = sampling_estimator(100, 0, 0, 1e-3) == 1.0 and ec_leakage(100, 0.0, 1.16) == 0
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    announce(capsys, 7, "degenerate inputs", ok, f"{len(checks)} cases" + (f", failed: {failed}" if failed else ", all as expected"))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
