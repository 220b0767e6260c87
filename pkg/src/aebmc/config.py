"""Run configuration: YAML file, environment and command-line flags.

Precedence, lowest to highest: built-in defaults, config file, the
``AEBMC_OUTPUT_DIR`` environment variable (output directory only), flags.

Config file layout::

    scenario:    {dt, t_max, a_brake_cmd, cg_height, wheelbase, tau, g, rho, frontal_area}
    uncertainty: {seed, v0_mean, v0_sd, mu_mean, mu_sd, theta_mean, theta_sd,
                  mass_mean, mass_sd, c_d_mean, c_d_sd, tau_sd}
    execution:   {executor, workers, chunk_size, samples}
    outputs:     {out_dir, formats}

Sampled parameters are drawn in the fixed order v0, mu, theta, mass, c_d,
five stream indices per sample (``5i .. 5i+4``).
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any

import yaml

from .backends import DEFAULT_CHUNK_SIZE
from .dynamics import PhysicalConstants, SimConfig, VehicleGeometry
from .sampling import UncertaintyModel

OUTPUT_DIR_ENV = "AEBMC_OUTPUT_DIR"
FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class Field:
    section: str
    name: str
    type: type
    default: Any
    unit: str
    help: str


def _formats(value) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    out = tuple(str(v) for v in value)
    bad = [v for v in out if v not in FORMATS]
    if bad:
        raise ValueError(f"unknown format(s) {bad}; choose from {list(FORMATS)}")
    return out


def _optional_int(value):
    if value is None or (isinstance(value, str) and value.lower() in ("", "none", "auto")):
        return None
    return int(value)


def _strict_int(value):
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


FIELDS = (
    Field("scenario", "dt", float, 0.001, "s", "fixed RK4 integration step"),
    Field("scenario", "t_max", float, 10.0, "s", "simulation horizon"),
    Field("scenario", "a_brake_cmd", float, -6.0, "m/s^2", "commanded braking deceleration (negative)"),
    Field("scenario", "cg_height", float, 0.5, "m", "center-of-gravity height"),
    Field("scenario", "wheelbase", float, 2.7, "m", "wheelbase"),
    Field("scenario", "tau", float, 0.15, "s", "brake-actuator time constant"),
    Field("scenario", "g", float, 9.81, "m/s^2", "gravitational acceleration"),
    Field("scenario", "rho", float, 1.225, "kg/m^3", "air density"),
    Field("scenario", "frontal_area", float, 2.2, "m^2", "frontal area"),
    Field("uncertainty", "seed", _strict_int, 42, "-", "generator seed (64-bit)"),
    Field("uncertainty", "v0_mean", float, 30.0, "m/s", "initial speed mean"),
    Field("uncertainty", "v0_sd", float, 2.0, "m/s", "initial speed standard deviation"),
    Field("uncertainty", "mu_mean", float, 0.8, "-", "tire-road friction mean"),
    Field("uncertainty", "mu_sd", float, 0.1, "-", "tire-road friction standard deviation"),
    Field("uncertainty", "theta_mean", float, 0.0, "rad", "road grade mean"),
    Field("uncertainty", "theta_sd", float, 0.05, "rad", "road grade standard deviation"),
    Field("uncertainty", "mass_mean", float, 1500.0, "kg", "vehicle mass mean"),
    Field("uncertainty", "mass_sd", float, 100.0, "kg", "vehicle mass standard deviation"),
    Field("uncertainty", "c_d_mean", float, 0.3, "-", "drag coefficient mean"),
    Field("uncertainty", "c_d_sd", float, 0.05, "-", "drag coefficient standard deviation"),
    Field("uncertainty", "tau_sd", float, 0.0, "s", "actuator time-constant spread (0 = fixed tau)"),
    Field("execution", "executor", str, "parallel", "-", "sequential | parallel"),
    Field("execution", "workers", _optional_int, None, "-", "parallel worker threads (default: CPU count)"),
    Field("execution", "chunk_size", _strict_int, DEFAULT_CHUNK_SIZE, "samples", "samples per parallel task"),
    Field("execution", "samples", _strict_int, 12_000, "samples", "Monte Carlo sample count"),
    Field("outputs", "out_dir", str, "aebmc_out", "-", f"output directory (env {OUTPUT_DIR_ENV} overrides the file)"),
    Field("outputs", "formats", _formats, FORMATS, "-", "artifacts to write: csv,json,svg"),
)
SECTIONS = ("scenario", "uncertainty", "execution", "outputs")


@dataclass(frozen=True)
class ExecutionSettings:
    executor: str = "parallel"
    workers: int | None = None
    chunk_size: int = DEFAULT_CHUNK_SIZE
    samples: int = 12_000

    def __post_init__(self):
        if self.executor not in ("sequential", "parallel"):
            raise ValueError(f"executor must be 'sequential' or 'parallel', got {self.executor!r}")
        if self.workers is not None and self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")


@dataclass(frozen=True)
class OutputSettings:
    out_dir: str = "aebmc_out"
    formats: tuple = FORMATS


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    geom: VehicleGeometry
    consts: PhysicalConstants
    uncertainty: UncertaintyModel
    execution: ExecutionSettings
    outputs: OutputSettings

    @classmethod
    def default(cls) -> "RunConfig":
        return build_config()


def default_values() -> dict:
    return {s: {f.name: f.default for f in FIELDS if f.section == s} for s in SECTIONS}


def load_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data


def _merge(values: dict, overrides: dict, source: str) -> None:
    known = {s: {f.name for f in FIELDS if f.section == s} for s in SECTIONS}
    for section, entries in overrides.items():
        if section not in known:
            raise ConfigError(f"{section}: unknown section in {source}")
        if not isinstance(entries, dict):
            raise ConfigError(f"{section}: expected a mapping in {source}")
        for key, value in entries.items():
            if key not in known[section]:
                raise ConfigError(f"{section}.{key}: unknown field in {source}")
            values[section][key] = value


def build_config(file_values: dict | None = None, flag_values: dict | None = None,
                 environ=None) -> RunConfig:
    """Merge the configuration sources and validate every field."""
    environ = os.environ if environ is None else environ
    values = default_values()
    if file_values:
        _merge(values, file_values, "config file")
    if environ.get(OUTPUT_DIR_ENV):
        values["outputs"]["out_dir"] = environ[OUTPUT_DIR_ENV]
    if flag_values:
        _merge(values, flag_values, "flags")

    for f in FIELDS:
        raw = values[f.section][f.name]
        try:
            values[f.section][f.name] = f.type(raw) if raw is not None or f.type is _optional_int else raw
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{f.section}.{f.name}: invalid value {raw!r} ({exc})") from None

    sc, un = values["scenario"], values["uncertainty"]
    return RunConfig(
        sim=_section("scenario", SimConfig, dt=sc["dt"], t_max=sc["t_max"], a_brake_cmd=sc["a_brake_cmd"]),
        geom=_section("scenario", VehicleGeometry, cg_height=sc["cg_height"], wheelbase=sc["wheelbase"],
                      tau=sc["tau"]),
        consts=_section("scenario", PhysicalConstants, g=sc["g"], rho=sc["rho"],
                        frontal_area=sc["frontal_area"]),
        uncertainty=_section("uncertainty", UncertaintyModel, **un),
        execution=_section("execution", ExecutionSettings, **values["execution"]),
        outputs=_section("outputs", OutputSettings, **values["outputs"]),
    )


def _section(name, cls, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # dataclass validation messages begin with the field name
        raise ConfigError(f"{name}.{exc}") from None


def as_dict(cfg: RunConfig) -> dict:
    """Nested plain-data view of ``cfg``, in config-file layout."""
    sources = {
        "scenario": (cfg.sim, cfg.geom, cfg.consts),
        "uncertainty": (cfg.uncertainty,),
        "execution": (cfg.execution,),
        "outputs": (cfg.outputs,),
    }
    out = {}
    for f in FIELDS:
        for obj in sources[f.section]:
            if hasattr(obj, f.name):
                value = getattr(obj, f.name)
                out.setdefault(f.section, {})[f.name] = list(value) if isinstance(value, tuple) else value
                break
    return out
