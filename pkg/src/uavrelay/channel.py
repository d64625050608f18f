"""Line-of-sight rate model for a UAV relay flying between two ground nodes.

Ground node 1 sits at ``x = -a`` and ground node 2 at ``x = +a``. The UAV
moves along the segment ``[-a, a]`` at height ``H``. Every function here is
pure; positions are real-valued meters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

LN2 = math.log(2.0)


class DiscretizationWarning(UserWarning):
    """Too many arrivals expected per grid step for the SMDP approximation."""


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Physical and discretization constants.

    ``snr_ref_gamma`` is linear; use :meth:`with_gamma_db` or
    :func:`db_to_linear` when starting from decibels.
    """

    bandwidth_B: float = 1e6
    snr_ref_gamma: float = 1e4
    height_H: float = 100.0
    half_span_a: float = 400.0
    speed_V: float = 20.0
    arrival_rate_lambda: float = 0.4
    payload_L: float = 15e6
    grid_N: int = 50

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "payload_L" or f.name == "arrival_rate_lambda":
                # zero payload / zero arrivals are legal degenerate models
                if not (value >= 0 and math.isfinite(value)):
                    raise ValueError(f"{f.name} must be finite and >= 0, got {value!r}")
            elif not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{f.name} must be finite and > 0, got {value!r}")
        if int(self.grid_N) != self.grid_N or self.grid_N < 1:
            raise ValueError(f"grid_N must be a positive integer, got {self.grid_N!r}")
        object.__setattr__(self, "grid_N", int(self.grid_N))
        load = self.arrival_rate_lambda * self.delta0
        if load > 0.1:
            warnings.warn(
                f"lambda*Delta0 = {load:.3g} > 0.1: arrivals per grid step are not negligible",
                DiscretizationWarning,
                stacklevel=3,
            )

    @classmethod
    def with_gamma_db(cls, gamma_db: float, **kwargs) -> "SystemParams":
        return cls(snr_ref_gamma=db_to_linear(gamma_db), **kwargs)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def N(self) -> int:
        return self.grid_N

    @property
    def delta0(self) -> float:
        """Time to fly between two adjacent grid positions."""
        return self.half_span_a / (self.grid_N * self.speed_V)

    @property
    def grid_step(self) -> float:
        return self.half_span_a / self.grid_N

    def gn_position(self, r: int) -> float:
        if r == 1:
            return -self.half_span_a
        if r == 2:
            return self.half_span_a
        raise ValueError(f"ground node id must be 1 or 2, got {r!r}")

    def position(self, i):
        """Grid index (or array of indices) to meters."""
        return i * self.grid_step

    def indices(self) -> np.ndarray:
        return np.arange(-self.grid_N, self.grid_N + 1)

    def peak_rate(self) -> float:
        """Rate when hovering directly above a ground node."""
        return self.bandwidth_B * math.log2(1.0 + self.snr_ref_gamma / self.height_H**2)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        return _digest(self.as_dict())

    def trajectory_fingerprint(self) -> str:
        """Digest of the fields that determine minimum-delay trajectories.

        The arrival rate is excluded so cost tables are shared across
        arrival-rate sweeps.
        """
        d = self.as_dict()
        d.pop("arrival_rate_lambda")
        return _digest(d)


def _digest(d: dict) -> str:
    text = ";".join(f"{k}={d[k]!r}" for k in sorted(d))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def _check_position(params: SystemParams, q) -> None:
    a = params.half_span_a
    q = np.asarray(q, dtype=float)
    # tolerate roundoff from i*a/N at the ends of the segment
    slack = 1e-9 * a
    if np.any(~np.isfinite(q)) or np.any(q < -a - slack) or np.any(q > a + slack):
        raise ValueError(f"position outside [-{a}, {a}]: {q}")


def rate(params: SystemParams, q, r: int):
    """Instantaneous rate (bit/s) to ground node ``r`` from position ``q``."""
    _check_position(params, q)
    d2 = params.height_H**2 + (np.asarray(q, dtype=float) - params.gn_position(r)) ** 2
    out = params.bandwidth_B * np.log1p(params.snr_ref_gamma / d2) / LN2
    return float(out) if np.ndim(out) == 0 else out


def travel_time(params: SystemParams, p1, p2):
    _check_position(params, p1)
    _check_position(params, p2)
    out = np.abs(np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)) / params.speed_V
    return float(out) if np.ndim(out) == 0 else out


def _primitive_difference(u1, u2, H: float, K: float):
    """``F(u2) - F(u1)`` for the primitive of ``ln(1 + (K^2 - H^2) / (H^2 + u^2))``,

    ``F(u) = u ln(1 + (K^2 - H^2)/(H^2 + u^2)) + 2K atan(u/K) - 2H atan(u/H)``,
    rearranged so short segments do not cancel catastrophically.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    du = u2 - u1
    H2, K2 = H * H, K * K
    # u2 g(u2) - u1 g(u1) = du g(u2) + u1 (g(u2) - g(u1)), the last factor in closed form
    dg = np.log1p((K2 - H2) * (u1 - u2) * (u1 + u2) / ((H2 + u2 * u2) * (K2 + u1 * u1)))
    log_part = du * np.log1p((K2 - H2) / (H2 + u2 * u2)) + u1 * dg
    # atan(x2) - atan(x1) = atan2(x2 - x1, 1 + x1 x2) for any real x1, x2
    atan_part = K * np.arctan2(K * du, K2 + u1 * u2) - H * np.arctan2(H * du, H2 + u1 * u2)
    return log_part + 2.0 * atan_part


def _segment_bits_analytic(params: SystemParams, p1, p2, r: int):
    H = params.height_H
    K = math.sqrt(H * H + params.snr_ref_gamma)
    x = params.gn_position(r)
    u1 = np.asarray(p1, dtype=float) - x
    u2 = np.asarray(p2, dtype=float) - x
    scale = params.bandwidth_B / (params.speed_V * LN2)
    return scale * np.abs(_primitive_difference(u1, u2, H, K))


def _segment_bits_quad(params: SystemParams, p1: float, p2: float, r: int) -> float:
    lo, hi = sorted((float(p1), float(p2)))
    if lo == hi:
        return 0.0
    tau = (hi - lo) / params.speed_V
    x = params.gn_position(r)
    H2, g, B = params.height_H**2, params.snr_ref_gamma, params.bandwidth_B

    def integrand(q):
        return B * math.log1p(g / (H2 + (q - x) ** 2)) / LN2

    # integrate over position; dt = dq / V
    epsabs = max(1e-12 * B * tau, 1e-6) * params.speed_V
    value, abserr, info = integrate.quad(
        integrand, lo, hi, epsabs=epsabs, epsrel=1e-13, limit=200, full_output=True
    )[:3]
    if abserr > epsabs and abserr > 1e-13 * abs(value):
        raise QuadratureError(
            f"quadrature did not converge on [{lo}, {hi}] for gn {r}: "
            f"estimate={value!r} abserr={abserr!r} evaluations={info['neval']}"
        )
    return value / params.speed_V


def segment_bits(params: SystemParams, p1, p2, r: int, method: str = "analytic"):
    """Bits delivered to ground node ``r`` flying straight from ``p1`` to ``p2``.

    ``method="analytic"`` uses the closed-form primitive of the rate (works
    on arrays); ``method="quadrature"`` integrates numerically with adaptive
    Gauss-Kronrod and is kept as an independent cross-check.
    """
    _check_position(params, p1)
    _check_position(params, p2)
    if method == "analytic":
        out = _segment_bits_analytic(params, p1, p2, r)
        return float(out) if np.ndim(out) == 0 else out
    if method == "quadrature":
        if np.ndim(p1) or np.ndim(p2):
            f = np.vectorize(lambda x, y: _segment_bits_quad(params, x, y, r))
            return f(p1, p2)
        return _segment_bits_quad(params, p1, p2, r)
    raise ValueError(f"unknown method {method!r}")
