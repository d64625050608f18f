"""Finite semi-Markov decision process over grid positions and request status.

States are pairs ``(i, r)`` with grid index ``i`` in ``-N..N`` and request
status ``r`` in ``{0, 1, 2}`` (0 = waiting, 1/2 = serving ground node 1/2).
They are enumerated with ``i`` ascending and ``r`` fastest, so state
``(i, r)`` has flat index ``3 * (i + N) + r``.

In a waiting state the UAV moves ``m`` in ``{-1, 0, +1}`` grid steps
(off-grid moves are not offered at the two ends). In a communication state
it picks the grid point ``j`` where the communication phase ends; the
trajectory in between is the minimum-delay one, so the stage cost is the
tabulated minimum delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .channel import SystemParams
from .trajectory import DelayCostMatrix

WAIT_MOVES = (-1, 0, 1)


class SmdpState(NamedTuple):
    i: int
    r: int

    @property
    def waiting(self) -> bool:
        return self.r == 0


def state_index(i: int, r: int, N: int) -> int:
    return 3 * (i + N) + r


def index_state(s: int, N: int) -> SmdpState:
    return SmdpState(s // 3 - N, s % 3)


def n_states(N: int) -> int:
    return 3 * (2 * N + 1)


@dataclass(frozen=True, eq=False)
class Policy:
    """Waiting moves ``theta[i+N]`` and end positions ``endpos[i+N, r-1]``."""

    theta: np.ndarray
    endpos: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.int64).copy()
        endpos = np.asarray(self.endpos, dtype=np.int64).copy()
        n = theta.shape[0]
        if n % 2 != 1 or theta.ndim != 1:
            raise ValueError("theta must have 2N+1 entries")
        N = n // 2
        if endpos.shape != (n, 2):
            raise ValueError(f"endpos must have shape ({n}, 2), got {endpos.shape}")
        if not np.isin(theta, WAIT_MOVES).all():
            raise ValueError("waiting moves must be -1, 0 or +1")
        if theta[0] == -1 or theta[-1] == 1:
            raise ValueError("waiting move leaves the grid at a boundary")
        if endpos.min() < -N or endpos.max() > N:
            raise ValueError("end position outside the grid")
        theta.flags.writeable = False
        endpos.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "endpos", endpos)

    @property
    def N(self) -> int:
        return self.theta.shape[0] // 2

    def move(self, i: int) -> int:
        return int(self.theta[i + self.N])

    def end(self, i: int, r: int) -> int:
        return int(self.endpos[i + self.N, r - 1])

    def mirrored(self) -> "Policy":
        """Relabel ``i -> -i`` and swap the two ground nodes."""
        return Policy(-self.theta[::-1], -self.endpos[::-1, ::-1])

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.theta, other.theta) and np.array_equal(self.endpos, other.endpos)

    def __hash__(self):
        return hash((self.theta.tobytes(), self.endpos.tobytes()))

    @classmethod
    def constant(cls, N: int, move: int = 0) -> "Policy":
        """``theta == move`` (clipped at the ends); end positions stay put."""
        theta = np.full(2 * N + 1, move)
        theta[0] = max(theta[0], 0)
        theta[-1] = min(theta[-1], 0)
        idx = np.arange(-N, N + 1)
        return cls(theta, np.stack([idx, idx], axis=1))

    @classmethod
    def toward_center(cls, N: int, endpos) -> "Policy":
        idx = np.arange(-N, N + 1)
        return cls(-np.sign(idx), endpos)

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "Policy":
        theta = rng.integers(-1, 2, size=2 * N + 1)
        theta[0] = rng.integers(0, 2)
        theta[-1] = rng.integers(-1, 1)
        return cls(theta, rng.integers(-N, N + 1, size=(2 * N + 1, 2)))


def arrival_probability(params: SystemParams) -> float:
    """Probability that a request arrives during one waiting step."""
    return -math.expm1(-params.arrival_rate_lambda * params.delta0)


def waiting_transition(params: SystemParams, i: int, m: int) -> dict[SmdpState, float]:
    N = params.grid_N
    if m not in WAIT_MOVES:
        raise ValueError(f"waiting move must be -1, 0 or +1, got {m!r}")
    if not (-N <= i + m <= N) or not (-N <= i <= N):
        raise ValueError(f"move {m} from {i} leaves the grid [-{N}, {N}]")
    p = arrival_probability(params)
    k = i + m
    return {SmdpState(k, 0): 1.0 - p, SmdpState(k, 1): p / 2, SmdpState(k, 2): p / 2}


def comm_transition(i: int, r: int, j: int) -> dict[SmdpState, float]:
    if r not in (1, 2):
        raise ValueError(f"request status must be 1 or 2, got {r!r}")
    return {SmdpState(j, 0): 1.0}


def steady_phase_probs(params: SystemParams) -> tuple[float, float]:
    """Long-run fractions of waiting and communication stages.

    The request-status process alternates independently of position: a
    waiting stage turns into a communication stage with the arrival
    probability and a communication stage is always followed by waiting.
    """
    p = arrival_probability(params)
    return 1.0 / (1.0 + p), p / (1.0 + p)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Dense transition matrix and stage costs of the chain induced by a policy."""

    P: np.ndarray
    cost: np.ndarray
    N: int | None = None
    fingerprint: str | None = None

    @property
    def n(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with sparse action rows.

    Action ``a`` in state ``s`` moves to ``succ[s, a, k]`` with probability
    ``prob[s, a, k]`` at cost ``cost[s, a]``; only entries with
    ``valid[s, a]`` are admissible.
    """

    succ: np.ndarray
    prob: np.ndarray
    cost: np.ndarray
    valid: np.ndarray

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    def kernel(self, actions) -> TransitionKernel:
        actions = np.asarray(actions)
        s = np.arange(self.n_states)
        if not self.valid[s, actions].all():
            raise ValueError("policy uses an inadmissible action")
        P = np.zeros((self.n_states, self.n_states))
        np.add.at(P, (s[:, None], self.succ[s, actions]), self.prob[s, actions])
        return TransitionKernel(P, self.cost[s, actions].copy())

    @classmethod
    def dense(cls, P: np.ndarray, cost: np.ndarray, valid: np.ndarray | None = None) -> "FiniteMdp":
        """From ``P[s, a, s']`` and ``cost[s, a]``."""
        S, A, _ = P.shape
        succ = np.broadcast_to(np.arange(S), (S, A, S)).copy()
        if valid is None:
            valid = np.ones((S, A), dtype=bool)
        return cls(succ, np.asarray(P, float), np.asarray(cost, float), np.asarray(valid, bool))


def _check_fingerprint(params: SystemParams, cost_matrix: DelayCostMatrix) -> None:
    if cost_matrix.fingerprint != params.trajectory_fingerprint() or cost_matrix.N != params.grid_N:
        raise ValueError("cost matrix was built for different system parameters")


def uav_mdp(
    params: SystemParams, cost_matrix: DelayCostMatrix, endpoints=None
) -> FiniteMdp:
    """Action-level model used by the policy-iteration solver.

    Waiting states use action ``k`` for move ``k - 1``; communication
    states use action ``k`` for end position ``j = k - N``. ``endpoints``
    optionally restricts the admissible end positions.
    """
    _check_fingerprint(params, cost_matrix)
    N = params.grid_N
    S = n_states(N)
    A = max(3, 2 * N + 1)
    succ = np.broadcast_to(np.arange(S)[:, None, None], (S, A, 3)).copy()
    prob = np.zeros((S, A, 3))
    prob[:, :, 0] = 1.0
    cost = np.zeros((S, A))
    valid = np.zeros((S, A), dtype=bool)
    p = arrival_probability(params)
    allowed = np.ones(2 * N + 1, dtype=bool)
    if endpoints is not None:
        allowed[:] = False
        allowed[np.asarray(list(endpoints)) + N] = True

    for i in range(-N, N + 1):
        s = state_index(i, 0, N)
        for k, m in enumerate(WAIT_MOVES):
            if -N <= i + m <= N:
                valid[s, k] = True
                succ[s, k] = [state_index(i + m, r, N) for r in (0, 1, 2)]
                prob[s, k] = [1.0 - p, p / 2, p / 2]
        for r in (1, 2):
            s = state_index(i, r, N)
            succ[s, : 2 * N + 1, 0] = 3 * np.arange(2 * N + 1)
            cost[s, : 2 * N + 1] = cost_matrix.delays[r - 1, i + N]
            valid[s, : 2 * N + 1] = allowed
    return FiniteMdp(succ, prob, cost, valid)


def policy_actions(policy: Policy) -> np.ndarray:
    """Flat action vector (see :func:`uav_mdp`) for ``policy``."""
    N = policy.N
    actions = np.empty(n_states(N), dtype=np.int64)
    actions[0::3] = policy.theta + 1
    actions[1::3] = policy.endpos[:, 0] + N
    actions[2::3] = policy.endpos[:, 1] + N
    return actions


def actions_policy(actions: np.ndarray, N: int) -> Policy:
    actions = np.asarray(actions)
    return Policy(actions[0::3] - 1, np.stack([actions[1::3] - N, actions[2::3] - N], axis=1))


def build_kernel(params: SystemParams, policy: Policy, cost_matrix: DelayCostMatrix) -> TransitionKernel:
    if policy.N != params.grid_N:
        raise ValueError("policy grid does not match parameters")
    mdp = uav_mdp(params, cost_matrix)
    k = mdp.kernel(policy_actions(policy))
    return TransitionKernel(k.P, k.cost, params.grid_N, params.fingerprint())


def heuristic_policy(params: SystemParams, cost_matrix: DelayCostMatrix) -> Policy:
    """Hover while waiting; when serving, end wherever the request finishes fastest.

    Ties between end positions go to the one closest to the served node.
    """
    _check_fingerprint(params, cost_matrix)
    N = params.grid_N
    endpos = np.empty((2 * N + 1, 2), dtype=np.int64)
    for r in (1, 2):
        d = cost_matrix.delays[r - 1]
        tied = d <= d.min(axis=1, keepdims=True) * (1 + 1e-12)
        if r == 2:
            endpos[:, 1] = 2 * N - np.argmax(tied[:, ::-1], axis=1) - N
        else:
            endpos[:, 0] = np.argmax(tied, axis=1) - N
    return Policy(np.zeros(2 * N + 1, dtype=np.int64), endpos)


def write_kernel_csv(kernel: TransitionKernel, path: str | Path) -> None:
    """Nonzero transitions as ``from_i,from_r,to_i,to_r,prob,cost`` rows."""
    N = kernel.N if kernel.N is not None else (kernel.n // 3 - 1) // 2
    rows = ["from_i,from_r,to_i,to_r,prob,cost"]
    for s, t in zip(*np.nonzero(kernel.P)):
        fi, fr = index_state(s, N)
        ti, tr = index_state(t, N)
        rows.append(f"{fi},{fr},{ti},{tr},{float(kernel.P[s, t])!r},{float(kernel.cost[s])!r}")
    Path(path).write_text("\n".join(rows) + "\n")
