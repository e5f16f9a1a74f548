"""Experiment configuration: one YAML document drives every command.

Every field has a default, so a config file only states what it changes.
Unknown keys and badly typed values fail with the offending field path.
A persisted config plus the code version reproduces every artifact; all
randomness derives from ``base_seed`` (see seeding module).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .data import NoiseModel, SynthesisConfig
from .diffusion import DiffusionTrainConfig
from .errors import ConfigError
from .heading import HeadingTrainConfig


@dataclass(frozen=True)
class DatasetSection:
    increment_deg: float = 0.5
    duration_s: float = 100.0
    sample_rate_hz: float = 3.0
    latitude_deg: float = 0.0
    split_ratio: tuple[float, float, float] = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class NoiseSection:
    enabled: bool = True
    white_noise_std_rps: tuple[float, float, float] | float = (2.0e-5, 6.0e-5, 4.0e-5)
    constant_bias_std_rps: tuple[float, float, float] | float = (3.0e-7, 1.0e-6, 6.0e-7)


@dataclass(frozen=True)
class ScheduleSection:
    steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 5e-4


@dataclass(frozen=True)
class DiffusionSection:
    batch_size: int = 50
    learning_rate: float = 1e-3
    max_epochs: int = 15
    patience: int = 5
    svd_threshold: float = 0.1


@dataclass(frozen=True)
class HeadingSection:
    variant: str = "enhanced"
    eta_max: float = 0.005
    eta_min: float = 0.0005
    epochs: int = 150
    patience: int = 40
    batch_size: int | None = None
    baseline_learning_rate: float = 0.001
    dropout: float | None = None
    use_denoiser: bool = True


@dataclass(frozen=True)
class PipelineSection:
    t_back: int = 950
    norm_scope: str = "per_sequence"
    stochastic: bool = True


@dataclass(frozen=True)
class SweepSection:
    values: tuple[int, ...] = (100, 300, 500, 700, 900, 950, 980)
    retrain: bool = False


@dataclass(frozen=True)
class IngestSection:
    recordings_dir: str = ""
    source_rate_hz: float = 600.0
    target_rate_hz: float = 3.0
    split_counts: tuple[int, int, int] = (24, 4, 6)
    augment_count: int = 100
    augment_half_range_deg: float = 20.0
    latitude_deg: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    base_seed: int = 0
    out_dir: str = "runs/out"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    diffusion_train: DiffusionSection = field(default_factory=DiffusionSection)
    heading_train: HeadingSection = field(default_factory=HeadingSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    ingest: IngestSection = field(default_factory=IngestSection)

    # -- views onto library-level configs ------------------------------------

    def synthesis_config(self) -> SynthesisConfig:
        import numpy as np

        return SynthesisConfig(
            increment_deg=self.dataset.increment_deg,
            duration_s=self.dataset.duration_s,
            sample_rate_hz=self.dataset.sample_rate_hz,
            latitude_rad=float(np.deg2rad(self.dataset.latitude_deg)),
            split_ratio=tuple(self.dataset.split_ratio),
            seed=self.base_seed,
        )

    def noise_model(self) -> NoiseModel:
        def tup(v):
            return tuple(v) if isinstance(v, (list, tuple)) else v

        return NoiseModel(
            white_noise_std=tup(self.noise.white_noise_std_rps),
            constant_bias_std=tup(self.noise.constant_bias_std_rps),
            seed=self.base_seed,
        )

    def diffusion_train_config(self) -> DiffusionTrainConfig:
        d = self.diffusion_train
        return DiffusionTrainConfig(
            batch_size=d.batch_size,
            learning_rate=d.learning_rate,
            max_epochs=d.max_epochs,
            svd_threshold=d.svd_threshold,
            patience=d.patience,
            base_seed=self.base_seed,
        )

    def heading_train_config(self, variant: str | None = None) -> HeadingTrainConfig:
        h = self.heading_train
        return HeadingTrainConfig(
            eta_max=h.eta_max,
            eta_min=h.eta_min,
            epochs=h.epochs,
            batch_size=h.batch_size,
            variant=variant or h.variant,
            base_seed=self.base_seed,
            patience=h.patience,
            baseline_learning_rate=h.baseline_learning_rate,
            dropout=h.dropout,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


_SECTIONS = {
    "dataset": DatasetSection,
    "noise": NoiseSection,
    "schedule": ScheduleSection,
    "diffusion_train": DiffusionSection,
    "heading_train": HeadingSection,
    "pipeline": PipelineSection,
    "sweep": SweepSection,
    "ingest": IngestSection,
}


def _build_section(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build_section(cls, data.pop(name, None), name)
    for scalar in ("base_seed", "out_dir"):
        if scalar in data:
            kwargs[scalar] = data.pop(scalar)
    if data:
        raise ConfigError(f"unknown top-level fields: {sorted(data)}")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ConfigError(f"malformed YAML in {path}{where}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)
