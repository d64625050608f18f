import numpy as np
import pytest

from uavrelay import Policy, build_cost_matrix, build_kernel, heuristic_policy, policy_delay, report_delay, solve
from uavrelay.smdp import FiniteMdp, TransitionKernel, policy_actions, state_index, steady_phase_probs, uav_mdp
from uavrelay.solver import (
    SolverError,
    evaluate_policy,
    evaluation_residuals,
    improve_policy,
    optimality_residuals,
    policy_iteration,
    write_solution_csv,
)

from conftest import quiet_params
from oracles import cesaro_limit, enumerate_policy_gains, random_mdp


@pytest.fixture(scope="module")
def small():
    p = quiet_params(grid_N=5, payload_L=6e6)
    return p, build_cost_matrix(p)


def test_hovering_chain_gain_closed_form(small):
    p, cm = small
    g, h = evaluate_policy(build_kernel(p, Policy.constant(5), cm))
    pc = steady_phase_probs(p)[1]
    for i in range(-5, 6):
        # 3-state chain: waiting w.p. 1/(1+p), each node w.p. p/(2(1+p))
        expected = pc * (cm.delay(1, i, i) + cm.delay(2, i, i)) / 2
        for r in (0, 1, 2):
            assert g[state_index(i, r, 5)] == pytest.approx(expected, rel=1e-12)
        assert h[state_index(i, 0, 5)] == 0.0


def test_zero_cost_gives_zero_gain(small):
    p, cm = small
    g, h = evaluate_policy(build_kernel(p, Policy.random(5, np.random.default_rng(1)), cm.scaled(0.0)))
    assert np.all(g == 0) and np.all(np.abs(h) < 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_unichain_gain_is_constant(small, seed):
    p, cm = small
    ends = np.random.default_rng(seed).integers(-5, 6, size=(11, 2))
    k = build_kernel(p, Policy.toward_center(5, ends), cm)
    g, h = evaluate_policy(k)
    assert np.ptp(g) < 1e-12 * g.max()
    assert g[0] == pytest.approx((cesaro_limit(k.P) @ k.cost)[0], rel=1e-10)
    assert max(evaluation_residuals(k, g, h)) < 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_evaluation_matches_cesaro_limit(small, seed):
    p, cm = small
    k = build_kernel(p, Policy.random(5, np.random.default_rng(seed)), cm)
    g, h = evaluate_policy(k)
    np.testing.assert_allclose(g, cesaro_limit(k.P) @ k.cost, rtol=1e-10)
    assert max(evaluation_residuals(k, g, h)) < 1e-9 * max(1.0, np.abs(h).max())


def test_non_finite_cost_is_rejected():
    P = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(SolverError, match="residuals"):
        evaluate_policy(TransitionKernel(P, np.array([1.0, np.nan])))


@pytest.mark.parametrize("seed", range(30))
def test_random_mdp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    P, cost = random_mdp(rng, S, A, density=rng.uniform(0.2, 0.8))
    mdp = FiniteMdp.dense(P, cost)
    sol = policy_iteration(mdp, np.zeros(S, dtype=int))
    best = np.min(np.array(list(enumerate_policy_gains(P, cost).values())), axis=0)
    np.testing.assert_allclose(sol.gain, best, rtol=1e-9, atol=1e-9)
    r1, r2 = optimality_residuals(mdp, sol.gain, sol.bias)
    assert r1 < 1e-9 and r2 < 1e-9 * max(1, np.abs(sol.bias).max())


def test_gain_trace_is_nonincreasing_on_random_mdps():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        S, A = int(rng.integers(3, 9)), int(rng.integers(2, 5))
        P, cost = random_mdp(rng, S, A, density=rng.uniform(0.1, 0.7))
        sol = policy_iteration(FiniteMdp.dense(P, cost), rng.integers(0, A, S))
        for before, after in zip(sol.trace, sol.trace[1:]):
            assert np.all(after <= before + 1e-9)


def test_optimal_incumbent_is_kept(small):
    p, cm = small
    res = solve(p, cm)
    mdp = uav_mdp(p, cm)
    actions = policy_actions(res.policy)
    assert np.array_equal(improve_policy(mdp, res.gain, res.bias, actions), actions)


def test_strict_improvement_lowers_the_objective():
    # two absorbing choices in state 0: cost 2 or cost 1
    P = np.zeros((1, 2, 1))
    P[0, :, 0] = 1.0
    mdp = FiniteMdp.dense(P, np.array([[2.0, 1.0]]))
    g, h = evaluate_policy(mdp.kernel([0]))
    assert list(improve_policy(mdp, g, h, [0])) == [1]
    assert evaluate_policy(mdp.kernel([1]))[0][0] < g[0]


def test_iteration_cap(small):
    p, cm = small
    with pytest.raises(SolverError, match="did not converge"):
        solve(p, cm, initial_policy=Policy.constant(5), max_iter=1)


def test_solution_independent_of_start(small):
    p, cm = small
    a = solve(p, cm)
    b = solve(p, cm, initial_policy=Policy.random(5, np.random.default_rng(7)))
    np.testing.assert_allclose(a.gain, b.gain, rtol=1e-10)


def test_scaling_costs_scales_gain(small):
    p, cm = small
    a = solve(p, cm)
    b = solve(p, cm.scaled(3.0))
    np.testing.assert_allclose(b.gain, 3 * a.gain, rtol=1e-10)
    assert a.policy == b.policy


@pytest.mark.parametrize("L", [1e6, 15e6])
def test_default_optimum_properties(cost_matrices, L):
    p, cm = cost_matrices(L)
    res = solve(p, cm)
    assert res.policy.mirrored() == res.policy
    N = p.grid_N
    for i in range(-N, N + 1):
        assert res.policy.end(-i, 1) == -res.policy.end(i, 2)
    r1, r2 = optimality_residuals(uav_mdp(p, cm), res.gain, res.bias)
    assert r1 < 1e-9 * max(1, np.abs(res.gain).max())
    assert r2 < 1e-9 * max(1, np.abs(res.bias).max())
    rep = report_delay(res, p)
    assert rep.avg_delay_from_start >= L / p.peak_rate()
    assert rep.avg_delay_from_start == pytest.approx(policy_delay(p, cm, res.policy).avg_delay_from_start)
    assert rep.avg_delay_from_start <= policy_delay(p, cm, heuristic_policy(p, cm)).avg_delay_from_start


def test_solution_csv(small, tmp_path):
    p, cm = small
    res = solve(p, cm)
    path = tmp_path / "s.csv"
    write_solution_csv(res, path, "# hello\n")
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# hello", "i,r,gain,bias,action"]
    assert len(lines) == 2 + 33
    i, r, g, _, action = lines[2 + state_index(3, 2, 5)].split(",")
    assert (int(i), int(r), float(g), int(action)) == (3, 2, res.gain_at(3, 2), res.policy.end(3, 2))
