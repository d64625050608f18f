"""Seeded Monte Carlo simulation of a policy at SMDP-stage granularity.

Random numbers come from numpy's ``PCG64`` bit generator (one stream per
replication, seeded with ``seed + replication index``); one uniform variate
is consumed per stage whether or not it is used, so runs are bit-for-bit
reproducible for a fixed numpy version.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .channel import SystemParams
from .smdp import Policy, _check_fingerprint, arrival_probability
from .trajectory import DelayCostMatrix

RNG_ALGORITHM = f"numpy PCG64 (numpy {np.__version__})"
N_BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    stages: int = 1_000_000
    replications: int = 20
    warmup_stages: int = 10_000

    def __post_init__(self):
        if not (0 <= self.warmup_stages < self.stages):
            raise ValueError("need 0 <= warmup_stages < stages")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.stages - self.warmup_stages < N_BATCHES:
            raise ValueError(f"need at least {N_BATCHES} measured stages")


@dataclass(frozen=True)
class SimResult:
    """Empirical delay per served request.

    ``mean_delay`` is ``nan`` when no request was served. ``comm_fraction_se``
    is the standard error of ``comm_fraction``.
    """

    mean_delay: float
    comm_fraction: float
    served_requests: int
    ci95_halfwidth: float
    comm_fraction_se: float
    stages: int


@numba.njit(cache=True, nogil=True)
def _run(theta, endpos, delays, N, p_arrival, uniforms, warmup, n_batches):
    n = uniforms.shape[0]
    measured = n - warmup
    delay_sum = np.zeros(n_batches)
    comm = np.zeros(n_batches, dtype=np.int64)
    count = np.zeros(n_batches, dtype=np.int64)
    i = 0
    r = 0
    for t in range(n):
        u = uniforms[t]
        if t >= warmup:
            b = ((t - warmup) * n_batches) // measured
            count[b] += 1
            if r != 0:
                comm[b] += 1
                delay_sum[b] += delays[r - 1, i + N, endpos[i + N, r - 1] + N]
        if r == 0:
            i += theta[i + N]
            if u < p_arrival:
                r = 1 if u < 0.5 * p_arrival else 2
        else:
            i = endpos[i + N, r - 1]
            r = 0
    return delay_sum, comm, count


def _t95(df: int) -> float:
    return float(stats.t.ppf(0.975, df))


def simulate(
    params: SystemParams,
    policy: Policy,
    cost_matrix: DelayCostMatrix,
    sim_config: SimConfig = SimConfig(),
    replication: int = 0,
) -> SimResult:
    """One run from state ``(0, 0)``; confidence bounds from batch means."""
    _check_fingerprint(params, cost_matrix)
    if policy.N != params.grid_N:
        raise ValueError("policy grid does not match parameters")
    rng = np.random.Generator(np.random.PCG64(sim_config.seed + replication))
    uniforms = rng.random(sim_config.stages)
    delay_sum, comm, count = _run(
        policy.theta,
        policy.endpos,
        cost_matrix.delays,
        params.grid_N,
        arrival_probability(params),
        uniforms,
        sim_config.warmup_stages,
        N_BATCHES,
    )
    served = int(comm.sum())
    measured = int(count.sum())
    frac = served / measured
    frac_b = comm / count
    frac_se = float(np.std(frac_b, ddof=1) / math.sqrt(N_BATCHES))
    if served == 0:
        return SimResult(math.nan, frac, 0, math.nan, frac_se, measured)
    mean = math.fsum(delay_sum) / served
    if (comm == 0).any():
        half = math.nan
    else:
        ratios = delay_sum / comm
        half = _t95(N_BATCHES - 1) * float(np.std(ratios, ddof=1)) / math.sqrt(N_BATCHES)
    return SimResult(mean, frac, served, half, frac_se, measured)


def aggregate(results: list[SimResult]) -> SimResult:
    """Combine independent replications; the CI spans replicate means."""
    if len(results) == 1:
        return results[0]
    R = len(results)
    means = [r.mean_delay for r in results]
    fracs = [r.comm_fraction for r in results]
    served = sum(r.served_requests for r in results)
    stages = sum(r.stages for r in results)
    frac = math.fsum(fracs) / R
    frac_se = math.sqrt(math.fsum((f - frac) ** 2 for f in fracs) / (R - 1) / R)
    if any(math.isnan(m) for m in means):
        return SimResult(math.nan, frac, served, math.nan, frac_se, stages)
    mean = math.fsum(means) / R
    sd = math.sqrt(math.fsum((m - mean) ** 2 for m in means) / (R - 1))
    return SimResult(mean, frac, served, _t95(R - 1) * sd / math.sqrt(R), frac_se, stages)


def replicate(
    params: SystemParams,
    policy: Policy,
    cost_matrix: DelayCostMatrix,
    sim_config: SimConfig = SimConfig(),
    workers: int = 1,
) -> SimResult:
    """Independent replications ``seed + k``, merged in replication order."""

    def run(k):
        return simulate(params, policy, cost_matrix, sim_config, k)

    ks = range(sim_config.replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, ks))
    else:
        results = [run(k) for k in ks]
    return aggregate(results)
