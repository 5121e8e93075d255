"""Experiment configuration: dataclasses plus an INI reader.

Files use ``[section]`` headers, ``key = value`` lines and ``#`` comments.
Lists are comma separated. The environment variable TVQP_SEED overrides the seed.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class ProblemConfig:
    family: str = "random_cosine"  # random_cosine | tracking | constant
    n_agents: int = 10
    block_size: int = 2
    box_lo: float = -100.0
    box_hi: float = 100.0
    omega: float = 0.1
    amplitude: float = 1.0
    r_amp: float = 100.0
    r_freq: float = 2.0
    q_scale: float = 10.0
    ref_amplitude: tuple[float, ...] = (100.0, 100.0)
    ref_freq: tuple[float, ...] = (0.01, 0.03)
    ref_kinds: tuple[str, ...] = ("cos", "sin")
    xi: float | None = None
    value_offset: float = 0.0


@dataclass
class SamplingConfig:
    t_s: float = 2.0
    horizon: float = 50.0
    p_sample: tuple[float, ...] = (0.5,)


@dataclass
class ScheduleConfig:
    B: int = 10
    kappa: tuple[int, ...] = (500,)
    p_update: tuple[float, ...] = (0.6,)
    p_comm: tuple[float, ...] = (0.6,)
    mask: str = "all"  # all | coupling


@dataclass
class SolverConfig:
    gamma: str = "0.001"  # a number or "auto"
    gradient_mode: str = "paper_literal"
    x0: str = "zero"  # zero | random | comma separated vector
    x0_lo: float | None = None
    x0_hi: float | None = None

    def gamma_policy(self) -> float | str:
        if self.gamma.strip().lower() == "auto":
            return "auto"
        try:
            return float(self.gamma)
        except ValueError:
            raise ConfigError(f"gamma must be a number or 'auto', got {self.gamma!r}") from None


@dataclass
class OracleConfig:
    metrics: bool = True
    multistarts: int = 64
    tol: float = 1e-10
    dedup_radius: float = 1e-6
    lam: float = 1.0
    lambda_samples: int = 200


@dataclass
class BaselineConfig:
    consensus_gamma: float | None = None
    topology: str = "complete"


@dataclass
class OutputConfig:
    dir: str = "out"
    svg: bool = True
    plot_cols: tuple[str, ...] = ("err_opt",)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        for name in ("p_sample",):
            _check_probs(getattr(self.sampling, name), name)
        for name in ("p_update", "p_comm"):
            _check_probs(getattr(self.schedule, name), name, allow_zero=True)
        if self.schedule.B < 1:
            raise ConfigError("B must be >= 1")
        if any(k < 1 for k in self.schedule.kappa):
            raise ConfigError("kappa must be >= 1")
        if self.problem.n_agents < 1 or self.problem.block_size < 1:
            raise ConfigError("n_agents and block_size must be >= 1")
        if self.sampling.t_s <= 0 or self.sampling.horizon < self.sampling.t_s:
            raise ConfigError("need t_s > 0 and horizon >= t_s")
        self.solver.gamma_policy()
        if self.solver.gradient_mode not in ("paper_literal", "symmetrized"):
            raise ConfigError(f"unknown gradient_mode {self.solver.gradient_mode!r}")
        if self.schedule.mask not in ("all", "coupling"):
            raise ConfigError(f"unknown mask {self.schedule.mask!r}")
        return self

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        sub = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: sub})


def _check_probs(values, name, allow_zero: bool = False):
    for p in values:
        if p > 1 or p < 0 or (p == 0 and not allow_zero):
            raise ConfigError(f"{name} must lie in {'[0, 1]' if allow_zero else '(0, 1]'}, got {p}")


def _convert(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        if raw.strip().lower() in ("", "none"):
            return None
        return _convert(raw, inner[0], key)
    if origin is tuple:
        return tuple(_convert(part, args[0], key) for part in raw.split(",") if part.strip())
    try:
        if tp is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _fill(obj, items: dict[str, str], section: str):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    for key, raw in items.items():
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key}")
        setattr(obj, key, _convert(raw, hints[key], f"[{section}] {key}"))


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    cfg = ExperimentConfig()
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "experiment":
            bad = set(items) - {"name", "seed"}
            if bad:
                raise ConfigError(f"unknown key [experiment] {sorted(bad)[0]}")
            _fill(cfg, items, section)
            continue
        if section not in {f.name for f in dataclasses.fields(cfg)} or section in ("name", "seed"):
            raise ConfigError(f"unknown section [{section}]")
        _fill(getattr(cfg, section), items, section)
    env = os.environ.get("TVQP_SEED")
    if env:
        try:
            cfg.seed = int(env)
        except ValueError:
            raise ConfigError(f"TVQP_SEED must be an integer, got {env!r}") from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
