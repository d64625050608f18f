"""Multichain average-cost policy iteration.

Evaluation splits the induced chain into closed communicating classes
(strongly connected components with no exit), computes a stationary gain
per class, pins the bias to zero at the lowest-index state of each class and
propagates both to transient states. Improvement is two-phase: first on the
expected next-state gain, then, only once the gain step is stalled, on the
bias among the gain-minimising actions. The incumbent action wins every tie;
otherwise the lowest action index does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.sparse import csgraph, csr_matrix

from .channel import SystemParams
from .smdp import (
    FiniteMdp,
    Policy,
    TransitionKernel,
    actions_policy,
    build_kernel,
    heuristic_policy,
    index_state,
    policy_actions,
    state_index,
    steady_phase_probs,
    uav_mdp,
)
from .trajectory import DelayCostMatrix

RESIDUAL_TOL = 1e-9
TIE_TOL = 1e-9


class SolverError(RuntimeError):
    pass


def closed_classes(P: np.ndarray) -> list[np.ndarray]:
    """Recurrent classes of a finite chain, ordered by their lowest state."""
    n_comp, labels = csgraph.connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    support = P > 0
    classes = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(P.shape[0], dtype=bool)
        outside[members] = False
        if not support[np.ix_(members, outside)].any():
            classes.append(members)
    classes.sort(key=lambda m: m[0])
    return classes


def _solve(A, b, what, members):
    try:
        with np.errstate(all="raise"):
            x = linalg.solve(A, b, check_finite=True)
    except (linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SolverError(f"{what}: singular system on states {members.tolist()}: {exc}") from exc
    return x


def evaluate_policy(kernel: TransitionKernel) -> tuple[np.ndarray, np.ndarray]:
    """Gain and bias of the chain ``kernel``.

    Solves ``(I - P) g = 0`` and ``g + (I - P) h = c`` with ``h = 0`` at the
    lowest-index state of every closed class.
    """
    P, c = kernel.P, kernel.cost
    n = P.shape[0]
    g = np.zeros(n)
    h = np.zeros(n)
    recurrent = np.zeros(n, dtype=bool)
    for members in closed_classes(P):
        recurrent[members] = True
        Pc = P[np.ix_(members, members)]
        m = len(members)
        if m == 1:
            g[members] = c[members]
            continue
        # stationary distribution: pi (I - Pc) = 0, sum(pi) = 1
        A = (np.eye(m) - Pc).T
        A[0, :] = 1.0
        rhs = np.zeros(m)
        rhs[0] = 1.0
        pi = _solve(A, rhs, "stationary distribution", members)
        gain = float(pi @ c[members])
        g[members] = gain
        # bias with h[first] = 0: drop the first row and column
        sub = np.eye(m - 1) - Pc[1:, 1:]
        h[members[1:]] = _solve(sub, c[members[1:]] - gain, "bias", members)

    T = np.flatnonzero(~recurrent)
    if T.size:
        R = np.flatnonzero(recurrent)
        A = np.eye(T.size) - P[np.ix_(T, T)]
        PTR = P[np.ix_(T, R)]
        g[T] = _solve(A, PTR @ g[R], "transient gain", T)
        h[T] = _solve(A, c[T] - g[T] + PTR @ h[R], "transient bias", T)

    res_g, res_h = evaluation_residuals(kernel, g, h)
    scale = max(1.0, np.abs(c).max(initial=0.0), np.abs(h).max(initial=0.0))
    # written as a negation so NaN residuals are rejected too
    if not (res_g <= RESIDUAL_TOL * scale and res_h <= RESIDUAL_TOL * scale):
        raise SolverError(
            f"ill-conditioned evaluation: residuals {res_g:.3g}, {res_h:.3g} "
            f"(scale {scale:.3g}, {len(closed_classes(P))} closed classes, {T.size} transient states)"
        )
    return g, h


def evaluation_residuals(kernel: TransitionKernel, g, h) -> tuple[float, float]:
    P, c = kernel.P, kernel.cost
    r1 = np.abs(g - P @ g).max()
    r2 = np.abs(g + h - P @ h - c).max()
    return float(r1), float(r2)


def _expect(mdp: FiniteMdp, v: np.ndarray) -> np.ndarray:
    """``E[v(next state)]`` for every (state, action); inadmissible pairs are inf."""
    out = (mdp.prob * v[mdp.succ]).sum(axis=-1)
    return np.where(mdp.valid, out, np.inf)


def _argmin_keep(q: np.ndarray, incumbent: np.ndarray, tol: float) -> np.ndarray:
    s = np.arange(q.shape[0])
    best = q.min(axis=1)
    keep = q[s, incumbent] <= best + tol
    first = np.argmax(q <= best[:, None] + tol, axis=1)
    return np.where(keep, incumbent, first)


def improve_policy(mdp: FiniteMdp, gain, bias, incumbent) -> np.ndarray:
    """One improvement step; returns the new action vector."""
    incumbent = np.asarray(incumbent)
    qg = _expect(mdp, gain)
    tol_g = TIE_TOL * max(1.0, np.abs(gain).max())
    new = _argmin_keep(qg, incumbent, tol_g)
    if not np.array_equal(new, incumbent):
        return new
    tied = qg <= qg.min(axis=1, keepdims=True) + tol_g
    qh = np.where(tied, mdp.cost + _expect(mdp, bias), np.inf)
    tol_h = TIE_TOL * max(1.0, np.abs(bias).max(), np.abs(mdp.cost[mdp.valid]).max(initial=0.0))
    return _argmin_keep(qh, incumbent, tol_h)


def optimality_residuals(mdp: FiniteMdp, gain, bias) -> tuple[float, float]:
    """Violation of the two average-cost optimality equations."""
    qg = _expect(mdp, gain)
    r1 = np.abs(qg.min(axis=1) - gain).max()
    tied = qg <= qg.min(axis=1, keepdims=True) + TIE_TOL * max(1.0, np.abs(gain).max())
    qh = np.where(tied, mdp.cost + _expect(mdp, bias), np.inf)
    r2 = np.abs(qh.min(axis=1) - gain - bias).max()
    return float(r1), float(r2)


@dataclass
class MdpSolution:
    gain: np.ndarray
    bias: np.ndarray
    actions: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)


def policy_iteration(mdp: FiniteMdp, initial, max_iter: int = 1000) -> MdpSolution:
    actions = np.asarray(initial).copy()
    trace = []
    for k in range(max_iter):
        g, h = evaluate_policy(mdp.kernel(actions))
        trace.append(g.copy())
        new = improve_policy(mdp, g, h, actions)
        if np.array_equal(new, actions):
            return MdpSolution(g, h, actions, k + 1, trace)
        actions = new
    raise SolverError(f"policy iteration did not converge in {max_iter} iterations")


@dataclass
class SolveResult:
    gain: np.ndarray
    bias: np.ndarray
    policy: Policy
    iterations: int
    trace: list
    N: int

    def gain_at(self, i: int, r: int) -> float:
        return float(self.gain[state_index(i, r, self.N)])


@dataclass(frozen=True)
class DelayReport:
    avg_delay_from_start: float
    pi_comm: float
    per_state: np.ndarray | None = None


def solve(
    params: SystemParams,
    cost_matrix: DelayCostMatrix,
    initial_policy: Policy | None = None,
    endpoints=None,
    max_iter: int = 1000,
) -> SolveResult:
    """Optimal waiting moves and end positions.

    Starts from :func:`heuristic_policy` unless ``initial_policy`` is given.
    ``endpoints`` restricts the admissible end positions (the initial policy
    must respect the restriction).
    """
    mdp = uav_mdp(params, cost_matrix, endpoints)
    if initial_policy is None:
        if endpoints is None:
            initial_policy = heuristic_policy(params, cost_matrix)
        else:
            j0 = min(endpoints)
            initial_policy = Policy(
                np.zeros(2 * params.grid_N + 1), np.full((2 * params.grid_N + 1, 2), j0)
            )
    sol = policy_iteration(mdp, policy_actions(initial_policy), max_iter)
    return SolveResult(
        sol.gain, sol.bias, actions_policy(sol.actions, params.grid_N), sol.iterations, sol.trace, params.grid_N
    )


def report_delay(result: SolveResult, params: SystemParams) -> DelayReport:
    """Expected delay per request, starting hovering at the origin."""
    _, pi_comm = steady_phase_probs(params)
    return DelayReport(result.gain_at(0, 0) / pi_comm, pi_comm, result.gain / pi_comm)


def policy_delay(params: SystemParams, cost_matrix: DelayCostMatrix, policy: Policy) -> DelayReport:
    """Exact expected delay per request of an arbitrary policy."""
    g, _ = evaluate_policy(build_kernel(params, policy, cost_matrix))
    _, pi_comm = steady_phase_probs(params)
    return DelayReport(float(g[state_index(0, 0, params.grid_N)]) / pi_comm, pi_comm, g / pi_comm)


def write_solution_csv(result: SolveResult, path: str | Path, header: str = "") -> None:
    """Per-state gain, bias and chosen action (move or end index)."""
    N = result.N
    lines = [header.rstrip("\n")] if header else []
    lines.append("i,r,gain,bias,action")
    for s in range(len(result.gain)):
        i, r = index_state(s, N)
        action = result.policy.move(i) if r == 0 else result.policy.end(i, r)
        lines.append(f"{i},{r},{float(result.gain[s])!r},{float(result.bias[s])!r},{action}")
    Path(path).write_text("\n".join(lines) + "\n")
