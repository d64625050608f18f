"""Command-line front end: ``uavrelay {solve,sweep-payload,sweep-lambda,compare}``.

Every CSV starts with ``#`` comment lines holding the tool version, the
command and the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .channel import DiscretizationWarning, SystemParams
from .config import ConfigError, ExperimentConfig, load_config
from .sim import SimConfig, replicate
from .smdp import build_kernel, heuristic_policy, write_kernel_csv
from .solver import SolveResult, policy_delay, report_delay, solve, write_solution_csv
from .trajectory import build_cost_matrix

log = logging.getLogger("uavrelay")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header: str, columns: list[str], rows: list[list]) -> Path:
    lines = [header.rstrip("\n"), ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    log.info("wrote %s", path)
    return path


def _tag(L: float) -> str:
    return f"L{int(round(L))}"


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _payload_point(job) -> dict:
    """Solve, evaluate the heuristic and optionally simulate both at one payload."""
    params, cache_dir, policies, simulate, sim = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscretizationWarning)
        cm = build_cost_matrix(params, cache_dir)
        out = {"L": params.payload_L, "params": params}
        res = solve(params, cm)
        out["result"] = res
        pols = {"optimal": res.policy, "heuristic": heuristic_policy(params, cm)}
        out["optimal"] = report_delay(res, params).avg_delay_from_start
        out["heuristic"] = policy_delay(params, cm, pols["heuristic"]).avg_delay_from_start
        for name in policies:
            out[f"policy_{name}"] = pols[name]
            if simulate:
                s = replicate(params, pols[name], cm, sim)
                out[f"sim_{name}"] = s.mean_delay
                out[f"sim_{name}_ci"] = s.ci95_halfwidth
        return out


def _payload_jobs(cfg: ExperimentConfig, simulate: bool) -> list:
    return [
        (_quiet_replace(cfg.params, payload_L=L), cfg.cache_dir, cfg.policies, simulate, cfg.sim)
        for L in cfg.payloads
    ]


def _quiet_replace(params: SystemParams, **changes) -> SystemParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscretizationWarning)
        return params.replace(**changes)


def cmd_solve(cfg: ExperimentConfig) -> list[Path]:
    header = cfg.header("solve", __version__)
    written = []
    points = _map(_payload_point, _payload_jobs(cfg, simulate=False), cfg.workers)
    report_rows = []
    curves = {}
    for pt in points:
        res: SolveResult = pt["result"]
        params = pt["params"]
        N, step = params.grid_N, params.grid_step
        pol = res.policy
        rows = [
            [i, i * step, pol.move(i), pol.end(i, 1) * step, pol.end(i, 2) * step]
            for i in range(-N, N + 1)
        ]
        tag = _tag(pt["L"])
        written.append(_write_csv(cfg.out / f"policy_{tag}.csv", header, ["i", "q_m", "theta", "J1_m", "J2_m"], rows))
        path = cfg.out / f"solution_{tag}.csv"
        write_solution_csv(res, path, header)
        written.append(path)
        if cfg.dump_kernel:
            cm = build_cost_matrix(params, cfg.cache_dir)
            path = cfg.out / f"kernel_{tag}.csv"
            write_kernel_csv(build_kernel(params, pol, cm), path)
            written.append(path)
        report_rows.append([pt["L"], pt["optimal"], pt["heuristic"], report_delay(res, params).pi_comm, res.iterations])
        curves[pt["L"]] = (params.indices() * step, pol.endpos[:, 1] * step)
    written.append(
        _write_csv(
            cfg.out / "delay_report.csv",
            header,
            ["L_bits", "optimal_delay_s", "heuristic_delay_s", "pi_comm", "iterations"],
            report_rows,
        )
    )
    if cfg.figures:
        from .plotting import plot_end_positions

        written.append(plot_end_positions(curves, cfg.out / "end_positions.png"))
    return written


def cmd_sweep_payload(cfg: ExperimentConfig) -> list[Path]:
    header = cfg.header("sweep-payload", __version__)
    points = _map(_payload_point, _payload_jobs(cfg, cfg.simulate), cfg.workers)
    cols = ["L_bits", "optimal_delay_s", "heuristic_delay_s"]
    for name in ("optimal", "heuristic"):
        cols += [f"sim_{name}_delay_s", f"sim_{name}_ci95_s"]
    rows = [
        [pt["L"], pt["optimal"], pt["heuristic"]]
        + [pt.get(k) for name in ("optimal", "heuristic") for k in (f"sim_{name}", f"sim_{name}_ci")]
        for pt in points
    ]
    written = [_write_csv(cfg.out / "payload_sweep.csv", header, cols, rows)]
    if cfg.figures:
        from .plotting import plot_delay_vs_payload

        written.append(plot_delay_vs_payload(points, cfg.out / "delay_vs_payload.png"))
    return written


def _lambda_point(job) -> dict:
    params, cache_dir = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscretizationWarning)
        cm = build_cost_matrix(params, cache_dir)
        res = solve(params, cm)
    ends = res.policy.endpos[:, 1] * params.grid_step
    greedy = heuristic_policy(params, cm).endpos[:, 1] * params.grid_step
    return {
        "inv_lambda": 1.0 / params.arrival_rate_lambda,
        "H": params.height_H,
        "min": float(ends.min()),
        "max": float(ends.max()),
        "mean": float(ends.mean()),
        "spread_cells": int(res.policy.endpos[:, 1].max() - res.policy.endpos[:, 1].min()),
        "greedy_mean": float(greedy.mean()),
    }


def cmd_sweep_lambda(cfg: ExperimentConfig) -> list[Path]:
    header = cfg.header("sweep-lambda", __version__)
    jobs = [
        (_quiet_replace(cfg.params, arrival_rate_lambda=1.0 / x, height_H=H), cfg.cache_dir)
        for H in cfg.heights
        for x in cfg.inv_lambdas
    ]
    points = _map(_lambda_point, jobs, cfg.workers)
    cols = ["inv_lambda_s", "H_m", "L_bits", "endpos_min_m", "endpos_max_m", "endpos_mean_m", "spread_cells", "greedy_endpos_mean_m"]
    rows = [
        [pt["inv_lambda"], pt["H"], cfg.params.payload_L, pt["min"], pt["max"], pt["mean"], pt["spread_cells"], pt["greedy_mean"]]
        for pt in points
    ]
    written = [_write_csv(cfg.out / "lambda_sweep.csv", header, cols, rows)]
    if cfg.figures:
        from .plotting import plot_end_position_vs_inv_lambda

        written.append(plot_end_position_vs_inv_lambda(points, cfg.out / "endpos_vs_inv_lambda.png"))
    return written


def cmd_compare(cfg: ExperimentConfig) -> list[Path]:
    header = cfg.header("compare", __version__)
    points = _map(_payload_point, _payload_jobs(cfg, simulate=True), cfg.workers)
    written = []
    cols = ["L_bits", "predicted_delay_s", "simulated_delay_s", "ci95_halfwidth_s", "abs_diff_s", "within_ci"]
    for name in cfg.policies:
        rows = []
        for pt in points:
            pred, simd, ci = pt[name], pt[f"sim_{name}"], pt[f"sim_{name}_ci"]
            diff = abs(pred - simd)
            rows.append([pt["L"], pred, simd, ci, diff, bool(diff < ci)])
        written.append(_write_csv(cfg.out / f"compare_{name}.csv", header, cols, rows))
    return written


COMMANDS = {
    "solve": cmd_solve,
    "sweep-payload": cmd_sweep_payload,
    "sweep-lambda": cmd_sweep_lambda,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavrelay", description="Adaptive UAV relay trajectory optimisation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", help="simulator seed (unsigned 64-bit)")
        p.add_argument("--workers", help="parallel sweep points")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            parser.error(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for key in ("out", "seed", "workers"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.no_figures:
        overrides["figures"] = "false"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DiscretizationWarning)
            cfg = load_config(args.config, overrides)
        load = cfg.params.arrival_rate_lambda * cfg.params.delta0
        if load > 0.1:
            log.warning("warning: lambda*Delta0 = %.3g > 0.1, grid is coarse relative to arrivals", load)
        cfg.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"uavrelay: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"uavrelay: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
