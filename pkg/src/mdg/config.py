"""Experiment configuration: one JSON document covering world, schedule,
guidance, and run parameters, with stable hashing for provenance."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigInvalid, ConfigParse
from .guidance import GuidanceConfig


@dataclass
class WorldParams:
    concepts: int = 8
    dim: int = 16
    latent_dim: int = 8
    sigma_mod: float = 0.05
    seed: int = 20


@dataclass
class ScheduleParams:
    grid_steps: int = 1000
    ddim_steps: int = 30
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class RunParams:
    num_samples: int = 200
    base_seed: int = 0


@dataclass
class ExperimentConfig:
    world: WorldParams = field(default_factory=WorldParams)
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    cfg_scale: float = 2.5
    run: RunParams = field(default_factory=RunParams)

    def validate(self) -> "ExperimentConfig":
        self.guidance.validate()
        if self.run.num_samples < 1:
            raise ConfigInvalid(f"num_samples must be >= 1, got {self.run.num_samples}")
        if self.schedule.ddim_steps < 1 or self.schedule.ddim_steps > self.schedule.grid_steps:
            raise ConfigInvalid(
                f"ddim_steps must be in [1, grid_steps], got {self.schedule.ddim_steps}"
            )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _build_section(cls, doc: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigParse(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigParse(f"bad '{section}' section: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigParse(f"config document must be an object, got {type(doc).__name__}")
    sections = {"world", "schedule", "guidance", "run", "cfg_scale"}
    unknown = set(doc) - sections
    if unknown:
        raise ConfigParse(f"unknown top-level keys: {sorted(unknown)}")
    cfg = ExperimentConfig(
        world=_build_section(WorldParams, doc.get("world", {}), "world"),
        schedule=_build_section(ScheduleParams, doc.get("schedule", {}), "schedule"),
        guidance=_build_section(GuidanceConfig, doc.get("guidance", {}), "guidance"),
        cfg_scale=float(doc.get("cfg_scale", 2.5)),
        run=_build_section(RunParams, doc.get("run", {}), "run"),
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)
