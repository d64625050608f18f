"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Recognised keys (defaults reproduce the reference scenario)::

    B           bandwidth in Hz                      1e6
    gamma_db    SNR at 1 m in dB (or ``gamma``, linear) 40
    H           UAV height in m                      100
    a           half distance between the nodes, m   400
    V           UAV speed in m/s                     20
    lambda      total request rate in 1/s            0.4
    L           payload in bits (single runs)        15e6
    N           grid half size (2N+1 points)         50
    payloads    payload sweep, bits                  1e6,5e6,10e6,15e6,20e6
    inv_lambdas 1/lambda sweep, s                    1,2,2.5,5,10,20,50
    heights     height list for the 1/lambda sweep   100
    policies    subset of optimal,heuristic          optimal,heuristic
    simulate    run the Monte Carlo check (bool)     true
    seed        simulator seed (u64)                 0
    stages      stages per replication               1000000
    replications                                     20
    warmup      warm-up stages discarded             10000
    workers     parallel sweep points                1
    figures     render PNG figures (bool)            true
    dump_kernel write transition kernels (bool)      false
    cache_dir   cost-matrix cache (default <out>/.cache)
    out         output directory                     out
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .channel import SystemParams, db_to_linear
from .sim import SimConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "B": "1e6",
    "gamma_db": "40",
    "H": "100",
    "a": "400",
    "V": "20",
    "lambda": "0.4",
    "L": "15e6",
    "N": "50",
    "payloads": "1e6,5e6,10e6,15e6,20e6",
    "inv_lambdas": "1,2,2.5,5,10,20,50",
    "heights": "100",
    "policies": "optimal,heuristic",
    "simulate": "true",
    "seed": "0",
    "stages": "1000000",
    "replications": "20",
    "warmup": "10000",
    "workers": "1",
    "figures": "true",
    "dump_kernel": "false",
    "cache_dir": "",
    "out": "out",
}
KNOWN = set(DEFAULTS) | {"gamma"}


@dataclass
class ExperimentConfig:
    params: SystemParams
    payloads: list[float]
    inv_lambdas: list[float]
    heights: list[float]
    policies: tuple[str, ...]
    simulate: bool
    sim: SimConfig
    workers: int
    figures: bool
    dump_kernel: bool
    out: Path
    cache_dir: Path
    resolved: dict[str, str] = field(default_factory=dict)

    def header(self, command: str, version: str) -> str:
        lines = [f"# uavrelay {version} {command}"]
        lines += [f"# {k} = {v}" for k, v in sorted(self.resolved.items())]
        return "\n".join(lines) + "\n"


def read_config_file(path: str | Path) -> dict[str, tuple[str, str]]:
    """Map key -> (value, origin) from a config file."""
    entries = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{path}:{lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key not in KNOWN:
            raise ConfigError(f"{where}: unknown key {key!r}")
        entries[key] = (value, where)
    return entries


def _float(entries, key) -> float:
    value, where = entries[key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} must be a number, got {value!r}") from None


def _int(entries, key, lo=None) -> int:
    value, where = entries[key]
    try:
        out = int(float(value)) if "e" in value.lower() else int(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} must be an integer, got {value!r}") from None
    if lo is not None and out < lo:
        raise ConfigError(f"{where}: {key} must be >= {lo}, got {out}")
    return out


def _bool(entries, key) -> bool:
    value, where = entries[key]
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: {key} must be true/false, got {value!r}")


def _floats(entries, key) -> list[float]:
    value, where = entries[key]
    try:
        out = [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{where}: {key} must be a comma-separated list of numbers") from None
    if not out:
        raise ConfigError(f"{where}: {key} must not be empty")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{where}: {key} must be strictly increasing")
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the file, then ``overrides`` (command-line) win."""
    entries = {k: (v, "default") for k, v in DEFAULTS.items()}
    if path is not None:
        file_entries = read_config_file(path)
        if "gamma" in file_entries:
            entries.pop("gamma_db")
        entries.update(file_entries)
    for key, value in (overrides or {}).items():
        if key not in KNOWN:
            raise ConfigError(f"command line: unknown key {key!r}")
        if key == "gamma":
            entries.pop("gamma_db", None)
        if key == "gamma_db":
            entries.pop("gamma", None)
        entries[key] = (str(value), "command line")

    if "gamma" in entries and "gamma_db" in entries:
        where = entries["gamma"][1]
        raise ConfigError(f"{where}: give either gamma or gamma_db, not both")
    gamma = _float(entries, "gamma") if "gamma" in entries else db_to_linear(_float(entries, "gamma_db"))

    try:
        params = SystemParams(
            bandwidth_B=_float(entries, "B"),
            snr_ref_gamma=gamma,
            height_H=_float(entries, "H"),
            half_span_a=_float(entries, "a"),
            speed_V=_float(entries, "V"),
            arrival_rate_lambda=_float(entries, "lambda"),
            payload_L=_float(entries, "L"),
            grid_N=_int(entries, "N", lo=1),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid system parameters: {exc}") from None

    policies = tuple(p.strip() for p in entries["policies"][0].split(",") if p.strip())
    bad = [p for p in policies if p not in ("optimal", "heuristic")]
    if bad or not policies:
        raise ConfigError(f"{entries['policies'][1]}: policies must be a subset of optimal,heuristic")

    try:
        sim = SimConfig(
            seed=_int(entries, "seed", lo=0),
            stages=_int(entries, "stages", lo=1),
            replications=_int(entries, "replications", lo=1),
            warmup_stages=_int(entries, "warmup", lo=0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid simulation settings: {exc}") from None

    out = Path(entries["out"][0])
    cache = entries["cache_dir"][0]
    for key in ("payloads", "inv_lambdas", "heights"):
        if any(x <= 0 for x in _floats(entries, key)):
            raise ConfigError(f"{entries[key][1]}: {key} entries must be positive")
    return ExperimentConfig(
        params=params,
        payloads=_floats(entries, "payloads"),
        inv_lambdas=_floats(entries, "inv_lambdas"),
        heights=_floats(entries, "heights"),
        policies=policies,
        simulate=_bool(entries, "simulate"),
        sim=sim,
        workers=_int(entries, "workers", lo=1),
        figures=_bool(entries, "figures"),
        dump_kernel=_bool(entries, "dump_kernel"),
        out=out,
        cache_dir=Path(cache) if cache else out / ".cache",
        resolved={k: v for k, (v, _) in entries.items()},
    )
