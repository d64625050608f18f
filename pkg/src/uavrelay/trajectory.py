"""Minimum-delay trajectories for serving one request between two grid points.

A trajectory ``p1 -> (p2, delta) -> p3`` flies at full speed from ``p1`` to
``p2``, hovers there for ``delta`` seconds and flies on to ``p3``. For a
fixed start and end grid point the fastest feasible trajectory is one of
three shapes:

* ``FLY_THROUGH``: the straight flight already delivers the payload;
* ``HOVER_AT_GN``: go to the ground node, hover until the remainder of the
  payload is sent, then fly to the end point;
* ``TURNAROUND``: fly towards the ground node up to the point where the
  out-and-back path delivers exactly the payload.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import SystemParams, _segment_bits_analytic as _bits, rate, segment_bits

CACHE_FORMAT = "uavrelay delay-cost-matrix v1"


class CaseTag(enum.Enum):
    FLY_THROUGH = "FlyThrough"
    HOVER_AT_GN = "HoverAtGn"
    TURNAROUND = "Turnaround"


_CASE_CODES = (CaseTag.FLY_THROUGH, CaseTag.HOVER_AT_GN, CaseTag.TURNAROUND)


@dataclass(frozen=True)
class TrajectoryPlan:
    start_p1: float
    via_p2: float
    hover_delta: float
    end_p3: float
    case_tag: CaseTag
    delay: float
    gn: int
    speed_V: float

    @property
    def outbound_time(self) -> float:
        return abs(self.via_p2 - self.start_p1) / self.speed_V

    @property
    def return_time(self) -> float:
        return abs(self.end_p3 - self.via_p2) / self.speed_V


def _plan_arrays(params: SystemParams, qi, qj, r: int):
    """Vectorised core of the closed-form solution.

    Returns ``(case_code, via, hover, delay)`` arrays broadcast over
    ``qi`` and ``qj``; case codes index ``_CASE_CODES``.
    """
    qi, qj = np.broadcast_arrays(np.asarray(qi, float), np.asarray(qj, float))
    L = params.payload_L
    V = params.speed_V
    x = params.gn_position(r)
    direct = _bits(params, qi, qj, r)
    via_gn = _bits(params, qi, x, r) + _bits(params, x, qj, r)

    fly = direct >= L
    turn = ~fly & (via_gn >= L)
    hover_case = ~fly & ~turn

    case = np.where(fly, 0, np.where(hover_case, 1, 2))
    via = np.where(fly, qj, x).astype(float)
    hover = np.where(hover_case, (L - via_gn) / params.peak_rate(), 0.0)

    if np.any(turn):
        near = np.maximum(qi, qj) if r == 2 else np.minimum(qi, qj)
        via[turn] = _turnaround_point(params, qi[turn], qj[turn], near[turn], x, r)

    delay = (np.abs(via - qi) + np.abs(qj - via)) / V + hover
    return case, via, hover, delay


def _turnaround_point(params, qi, qj, near, x, r):
    """Bisection for ``p`` in ``[near, x]`` with ``l(qi,p) + l(p,qj) = L``.

    The delivered bits grow monotonically as ``p`` moves from ``near``
    towards the ground node. The returned point always sits on the feasible
    side of the root.
    """
    L = params.payload_L
    width_tol = 1e-9 * params.half_span_a
    bits_tol = max(1e-6 * L, 1.0)

    def excess(p, k=slice(None)):
        return _bits(params, qi[k], p, r) + _bits(params, p, qj[k], r) - L

    lo = near.copy()
    hi = np.full_like(near, x)
    if np.any(excess(lo) >= 0) or np.any(excess(hi) < 0):
        raise ArithmeticError("turnaround bracket does not straddle the payload")
    active = np.flatnonzero(np.abs(hi - lo) >= width_tol)
    while active.size:
        mid = 0.5 * (lo[active] + hi[active])
        f = excess(mid, active)
        ok = f >= 0
        hi[active] = np.where(ok, mid, hi[active])
        lo[active] = np.where(ok & (f < bits_tol), mid, np.where(ok, lo[active], mid))
        active = active[np.abs(hi[active] - lo[active]) >= width_tol]
    return hi


def min_delay_trajectory(params: SystemParams, i: int, j: int, r: int) -> TrajectoryPlan:
    """Fastest trajectory from grid point ``i`` to ``j`` delivering the payload to GN ``r``."""
    N = params.grid_N
    if not (-N <= i <= N and -N <= j <= N):
        raise ValueError(f"grid indices must lie in [-{N}, {N}], got ({i}, {j})")
    qi, qj = params.position(i), params.position(j)
    case, via, hover, delay = _plan_arrays(params, qi, qj, r)
    return TrajectoryPlan(
        start_p1=float(qi),
        via_p2=float(via),
        hover_delta=float(hover),
        end_p3=float(qj),
        case_tag=_CASE_CODES[int(case)],
        delay=float(delay),
        gn=r,
        speed_V=params.speed_V,
    )


def delivered_bits(params: SystemParams, plan: TrajectoryPlan) -> float:
    return (
        segment_bits(params, plan.start_p1, plan.via_p2, plan.gn)
        + plan.hover_delta * rate(params, plan.via_p2, plan.gn)
        + segment_bits(params, plan.via_p2, plan.end_p3, plan.gn)
    )


def sample_trajectory(plan: TrajectoryPlan, t: float) -> float:
    """Position of the UAV ``t`` seconds into ``plan``."""
    if not (0.0 <= t <= plan.delay):
        raise ValueError(f"t={t} outside [0, {plan.delay}]")
    t1 = plan.outbound_time
    if t <= t1:
        if t1 == 0.0:
            return plan.start_p1
        return plan.start_p1 + (t / t1) * (plan.via_p2 - plan.start_p1)
    if t <= t1 + plan.hover_delta:
        return plan.via_p2
    t2 = plan.return_time
    if t2 == 0.0:
        return plan.end_p3
    frac = min((t - t1 - plan.hover_delta) / t2, 1.0)
    return plan.via_p2 + frac * (plan.end_p3 - plan.via_p2)


@dataclass(frozen=True, eq=False)
class DelayCostMatrix:
    """Minimum delays ``delays[r-1, i+N, j+N]`` in seconds."""

    fingerprint: str
    N: int
    delays: np.ndarray
    cases: np.ndarray | None = None

    def delay(self, r: int, i: int, j: int) -> float:
        return float(self.delays[r - 1, i + self.N, j + self.N])

    def scaled(self, k: float) -> "DelayCostMatrix":
        return DelayCostMatrix(self.fingerprint, self.N, self.delays * k, self.cases)


def build_cost_matrix(params: SystemParams, cache_dir: str | Path | None = None) -> DelayCostMatrix:
    """Tabulate the minimum delay for every (gn, start, end) triple.

    With ``cache_dir`` set, the table is read from / written to
    ``<cache_dir>/costs-<fingerprint>.csv``.
    """
    fp = params.trajectory_fingerprint()
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"costs-{fp}.csv"
        if path.exists():
            return load_cost_matrix(path, params)

    N = params.grid_N
    q = params.position(params.indices()).astype(float)
    delays = np.empty((2, 2 * N + 1, 2 * N + 1))
    cases = np.empty((2, 2 * N + 1, 2 * N + 1), dtype=np.int8)
    for r in (1, 2):
        case, _, _, delay = _plan_arrays(params, q[:, None], q[None, :], r)
        delays[r - 1] = delay
        cases[r - 1] = case
    cm = DelayCostMatrix(fp, N, delays, cases)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_cost_matrix(cm, path, params)
    return cm


def save_cost_matrix(cm: DelayCostMatrix, path: str | Path, params: SystemParams | None = None) -> None:
    N = cm.N
    lines = [f"# {CACHE_FORMAT}", f"# fingerprint={cm.fingerprint}", f"# N={N}"]
    if params is not None:
        lines.append("# params=" + ";".join(f"{k}={v!r}" for k, v in params.as_dict().items()))
    lines.append("r,i,j,delay")
    for r in (1, 2):
        for i in range(-N, N + 1):
            row = cm.delays[r - 1, i + N]
            lines.extend(f"{r},{i},{j},{float(row[j + N])!r}" for j in range(-N, N + 1))
    tmp = Path(f"{path}.{os.getpid()}.tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_cost_matrix(path: str | Path, params: SystemParams | None = None) -> DelayCostMatrix:
    header = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {CACHE_FORMAT}":
            raise ValueError(f"{path}: not a cost-matrix file (got {first!r})")
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                header[key] = value
            elif line and not line.startswith("r,"):
                rows.append(line.split(","))
    N = int(header["N"])
    fp = header["fingerprint"]
    if params is not None and fp != params.trajectory_fingerprint():
        raise ValueError(f"{path}: fingerprint {fp} does not match parameters")
    delays = np.full((2, 2 * N + 1, 2 * N + 1), math.nan)
    for r, i, j, d in rows:
        delays[int(r) - 1, int(i) + N, int(j) + N] = float(d)
    if np.isnan(delays).any():
        raise ValueError(f"{path}: incomplete table")
    return DelayCostMatrix(fp, N, delays)
