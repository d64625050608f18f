"""End-to-end acceptance checks at their stated tolerances.

Each test records a one-line verdict that the terminal summary prints as
``criterion k: PASS|FAIL ...``; the assertion then decides the test outcome.
"""

import math
import time

import numpy as np
import pytest

from uavrelay import (
    CaseTag,
    Policy,
    SimConfig,
    build_cost_matrix,
    heuristic_policy,
    min_delay_trajectory,
    policy_delay,
    replicate,
    report_delay,
    segment_bits,
    simulate,
    solve,
    steady_phase_probs,
)

from conftest import ACCEPTANCE, PAYLOADS, quiet_params
from oracles import brute_force_min_delay, enumerate_restricted_gain, grid_search_turnaround


def record(k, ok, msg):
    ACCEPTANCE[k] = (bool(ok), msg)
    assert ok, f"criterion {k}: {msg}"


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    """Optimal and heuristic results at every default payload, with timings."""
    cache = tmp_path_factory.mktemp("cache")
    out = {}
    for L in PAYLOADS:
        t0 = time.perf_counter()
        p = quiet_params(payload_L=L)
        cm = build_cost_matrix(p, cache)
        res = solve(p, cm)
        elapsed = time.perf_counter() - t0
        heur = heuristic_policy(p, cm)
        out[L] = dict(
            params=p,
            cm=cm,
            result=res,
            seconds=elapsed,
            optimal=report_delay(res, p).avg_delay_from_start,
            heuristic=policy_delay(p, cm, heur).avg_delay_from_start,
            heuristic_policy=heur,
        )
    return out


def test_criterion_1_waiting_policy(sweep):
    bad = []
    for L, pt in sweep.items():
        N = pt["params"].grid_N
        expected = -np.sign(np.arange(-N, N + 1))
        if not np.array_equal(pt["result"].policy.theta, expected):
            bad.append(L)
    slowest = max(pt["seconds"] for pt in sweep.values())
    ok = not bad and slowest < 120.0
    record(1, ok, f"theta moves toward the centre at every L (mismatch at {bad or 'none'}); "
                  f"slowest build+solve {slowest:.2f} s < 120 s")


def test_criterion_2_end_position_asymptote(sweep):
    pt = sweep[15e6]
    p = pt["params"]
    j2 = pt["result"].policy.endpos[:, 1]
    spread = int(j2.max() - j2.min())
    ends_m = j2 * p.grid_step
    centre = float(np.median(ends_m))
    ok = spread <= 2 and np.all(np.abs(ends_m - 336.0) <= 16.0)
    record(2, ok, f"J*(i,2) spread {spread} cells (<= 2), value {centre:g} m "
                  f"(range {ends_m.min():g}..{ends_m.max():g}, target 336 +/- 16 m)")


def test_criterion_3_slope_saturation(sweep):
    p = sweep[20e6]["params"]
    target = 1e6 / p.peak_rate()  # seconds per Mbit
    Ls = [5e6, 10e6, 15e6, 20e6]
    slopes = {}
    for name in ("optimal", "heuristic"):
        d = [sweep[L][name] for L in Ls]
        slopes[name] = [(d[k + 1] - d[k]) / ((Ls[k + 1] - Ls[k]) / 1e6) for k in range(3)]
    # the saturated slope is the increment between the two largest payloads
    ok = all(abs(s[-1] / target - 1) <= 0.05 for s in slopes.values())
    text = "; ".join(f"{n}: " + ", ".join(f"{s:.4f}" for s in v) for n, v in slopes.items())
    record(3, ok, f"increments 5-10-15-20 Mbit [s/Mbit] {text}; last within 5% of {target:.4f}")


def test_criterion_4_heuristic_gap(sweep):
    gap = sweep[20e6]["heuristic"] - sweep[20e6]["optimal"]
    ordered = all(pt["heuristic"] >= pt["optimal"] - 1e-9 for pt in sweep.values())
    ok = abs(gap - 2.0) <= 0.6 and ordered
    record(4, ok, f"gap at 20 Mbit {gap:.3f} s (2 +/- 0.6), heuristic >= optimal at every L: {ordered}")


def test_criterion_5_phase_law(sweep):
    pt = sweep[15e6]
    p, cm = pt["params"], pt["cm"]
    rng = np.random.default_rng(0)
    policies = [Policy.random(p.grid_N, rng) for _ in range(10)] + [pt["result"].policy]
    pi_comm = steady_phase_probs(p)[1]
    worst = 0.0
    for k, pol in enumerate(policies):
        res = simulate(p, pol, cm, SimConfig(seed=0, stages=1_000_000), replication=k)
        worst = max(worst, abs(res.comm_fraction - pi_comm) / res.comm_fraction_se)
    record(5, worst < 3.0, f"max |comm_fraction - pi_comm| / SE over 11 policies = {worst:.2f} (< 3)")


def test_criterion_6_solver_vs_simulator(sweep):
    cfg = SimConfig()  # seed 0, 20 replications of 1e6 stages
    rows, ok = [], True
    for L in (1e6, 15e6):
        pt = sweep[L]
        p, cm = pt["params"], pt["cm"]
        for name, pol, pred in (
            ("optimal", pt["result"].policy, pt["optimal"]),
            ("heuristic", pt["heuristic_policy"], pt["heuristic"]),
        ):
            s = replicate(p, pol, cm, cfg)
            diff = abs(pred - s.mean_delay)
            ok &= diff < s.ci95_halfwidth
            rows.append(f"L={L / 1e6:g}M {name} |diff| {diff:.4f} vs CI {s.ci95_halfwidth:.4f}")
    record(6, ok, "; ".join(rows))


def test_criterion_7_closed_form_vs_brute_force():
    rng = np.random.default_rng(7)
    worst_slack, worst_p = -math.inf, 0.0
    n_turn = 0
    ok = True
    for _ in range(50):
        i, j = (int(x) for x in rng.integers(-8, 9, 2))
        r = int(rng.integers(1, 3))
        L = float(rng.uniform(0.0, 2.5e7))
        p = quiet_params(grid_N=8, payload_L=L)
        plan = min_delay_trajectory(p, i, j, r)
        brute = brute_force_min_delay(p, i, j, r)
        slack = plan.delay - brute
        worst_slack = max(worst_slack, slack)
        ok &= slack <= 2 * p.delta0
        if plan.case_tag is CaseTag.TURNAROUND:
            n_turn += 1
            err = abs(plan.via_p2 - grid_search_turnaround(p, p.position(i), p.position(j), r))
            worst_p = max(worst_p, err)
            ok &= err <= 1e-3
    record(7, ok, f"max(closed form - brute force) {worst_slack:.3f} s (<= 2*Delta0 = 5 s); "
                  f"turnaround point error {worst_p:.2e} m over {n_turn} cases (<= 1e-3)")


def test_criterion_8_quadrature_agreement():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        a = rng.uniform(50, 2000)
        p = quiet_params(
            bandwidth_B=10 ** rng.uniform(5, 8),
            snr_ref_gamma=10 ** rng.uniform(2, 7),
            height_H=rng.uniform(10, 500),
            half_span_a=a,
            speed_V=rng.uniform(1, 50),
        )
        p1, p2 = rng.uniform(-a, a, 2)
        r = int(rng.integers(1, 3))
        quad = segment_bits(p, p1, p2, r, method="quadrature")
        exact = segment_bits(p, p1, p2, r)
        worst = max(worst, abs(exact - quad) / quad)
    record(8, worst <= 1e-9, f"max relative difference {worst:.2e} over 1000 draws (<= 1e-9)")


def test_criterion_9_restricted_enumeration():
    p = quiet_params(grid_N=2)
    cm = build_cost_matrix(p)
    ends = [-2, 0, 2]
    best, _ = enumerate_restricted_gain(p, cm, ends)
    res = solve(p, cm, endpoints=ends)
    diff = abs(res.gain_at(0, 0) - best)
    record(9, diff <= 1e-9, f"policy iteration {res.gain_at(0, 0):.12f} vs enumeration {best:.12f}, "
                            f"|diff| {diff:.1e} (<= 1e-9)")
