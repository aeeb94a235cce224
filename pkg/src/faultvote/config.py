"""Pipeline configuration: one JSON document, validated before any stage runs.

Every section is a dataclass whose fields carry defaults, so ``{}`` is a valid
config. Unknown keys anywhere are rejected, as are values of the wrong type.
The schema is documented in the README.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .gp import KINDS
from .structure import CHANNELS


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ModelSpec:
    """Either a saved model (``path``), an inline ``definition``, or the default chain."""

    path: str | None = None
    definition: dict | None = None
    n_segments: int = 25
    transducer_segment: int = 10

    def validate(self, where: str):
        if self.path is not None and self.definition is not None:
            raise ConfigError(f"{where}: give at most one of 'path' and 'definition'")
        if self.path is not None and not Path(self.path).is_file():
            raise ConfigError(f"{where}.path: file not found: {self.path}")
        _positive(self.n_segments, f"{where}.n_segments")
        if not 1 <= self.transducer_segment <= self.n_segments:
            raise ConfigError(f"{where}.transducer_segment must lie in 1..{self.n_segments}")


@dataclass
class SweepSpec:
    modes: list[int] = field(default_factory=lambda: [14, 16, 21, 23])
    points_per_band: int = 10
    rel_below: float = 0.004
    rel_above: float = 0.001

    def validate(self, where: str):
        if not self.modes:
            raise ConfigError(f"{where}.modes must not be empty")
        for m in self.modes:
            _positive(m, f"{where}.modes")
        _positive(self.points_per_band, f"{where}.points_per_band")
        if not 0 <= self.rel_below < 1 or self.rel_above < 0 or self.rel_below + self.rel_above <= 0:
            raise ConfigError(f"{where}: band widths must be non-negative, not both zero, "
                              "and rel_below < 1")


@dataclass
class TrainingSpec:
    m_scenarios: int = 270
    noise_level: float = 0.0015
    severity_max: float = 0.1
    channel: str = "magnitude"

    def validate(self, where: str):
        _positive(self.m_scenarios, f"{where}.m_scenarios")
        if self.noise_level < 0:
            raise ConfigError(f"{where}.noise_level must be non-negative")
        if not 0 < self.severity_max < 1:
            raise ConfigError(f"{where}.severity_max must lie in (0, 1)")
        if self.channel not in CHANNELS:
            raise ConfigError(f"{where}.channel must be one of {CHANNELS}")


@dataclass
class CalibrationSpec:
    kernel: str = "product"
    mcmc_samples: int = 2000
    step_size: float = 0.15
    prior_sd: float = 3.0

    def validate(self, where: str):
        if self.kernel not in KINDS:
            raise ConfigError(f"{where}.kernel must be one of {KINDS}")
        _positive(self.mcmc_samples, f"{where}.mcmc_samples")
        if self.step_size < 0:
            raise ConfigError(f"{where}.step_size must be non-negative")
        if self.prior_sd <= 0:
            raise ConfigError(f"{where}.prior_sd must be positive")


@dataclass
class EnsembleSpec:
    m_runs: int = 30
    n_objectives: int = 10
    epsilon: float = 0.05
    t_max: float = 100.0
    t_min: float = 1e-4
    cooling_rate: float = 0.8
    budget: int = 100_000
    p_location: float = 0.3
    sigma_step: float | None = None
    severity_digits: int = 4
    range_digits: int = 3

    def validate(self, where: str):
        _positive(self.m_runs, f"{where}.m_runs")
        _positive(self.n_objectives, f"{where}.n_objectives")
        _positive(self.budget, f"{where}.budget")
        if self.epsilon <= 0:
            raise ConfigError(f"{where}.epsilon must be positive")
        if not self.t_max > self.t_min > 0:
            raise ConfigError(f"{where}: need t_max > t_min > 0")
        if not 0 < self.cooling_rate < 1:
            raise ConfigError(f"{where}.cooling_rate must lie in (0, 1)")
        if not 0 <= self.p_location <= 1:
            raise ConfigError(f"{where}.p_location must lie in [0, 1]")
        if self.sigma_step is not None and self.sigma_step <= 0:
            raise ConfigError(f"{where}.sigma_step must be positive")
        if not 0 <= self.range_digits < self.severity_digits:
            raise ConfigError(f"{where}: need 0 <= range_digits < severity_digits")


@dataclass
class TruthSpec:
    """Injected single-fault scenario for validation mode."""

    segment: int
    severity: float
    noise_level: float | None = None

    def validate(self, where: str):
        _positive(self.segment, f"{where}.segment")
        if not 0 <= self.severity < 1:
            raise ConfigError(f"{where}.severity must lie in [0, 1)")
        if self.noise_level is not None and self.noise_level < 0:
            raise ConfigError(f"{where}.noise_level must be non-negative")


@dataclass
class ReportSpec:
    top_k: int = 5

    def validate(self, where: str):
        _positive(self.top_k, f"{where}.top_k")


@dataclass
class PipelineConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    truth: TruthSpec | None = None
    report: ReportSpec = field(default_factory=ReportSpec)
    seed: int = 0
    output_dir: str = "out"

    def validate(self, where: str = "config"):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "validate"):
                v.validate(f"{where}.{f.name}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"{where}.seed must be an unsigned 64-bit integer")
        if self.truth is not None and self.truth.segment > self.model.n_segments \
                and self.model.path is None and self.model.definition is None:
            raise ConfigError(f"{where}.truth.segment exceeds model.n_segments")
        n_freq = len(self.sweep.modes) * self.sweep.points_per_band
        if self.ensemble.n_objectives > n_freq:
            raise ConfigError(f"{where}.ensemble.n_objectives ({self.ensemble.n_objectives}) "
                              f"exceeds the number of sweep frequencies ({n_freq})")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _positive(v, where):
    if v < 1:
        raise ConfigError(f"{where} must be positive")


def _check_value(value, tp, where):
    """Coerce ``value`` to the annotated type ``tp`` or raise ConfigError."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return [_check_value(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return value
    raise TypeError(f"unsupported config type {tp!r}")  # pragma: no cover


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _check_value(data[f.name], hints[f.name], f"{where}.{f.name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where}: missing required key '{f.name}'")
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir=None) -> PipelineConfig:
    """Build and validate a config. Relative paths resolve against ``base_dir``."""
    cfg = _build(PipelineConfig, data, "config")
    if base_dir is not None and cfg.model.path is not None:
        p = Path(cfg.model.path)
        if not p.is_absolute():
            cfg.model.path = str(Path(base_dir) / p)
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return config_from_dict(data, base_dir=path.parent)
