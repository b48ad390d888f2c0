"""Experiment configuration: one JSON document per run."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .spaces import SCHEMA_VERSION, canonical_json, params_hash

EXPERIMENTS = (
    "build-space", "cone-distance", "classify-function", "smooth-verify",
    "check-map", "homotopy", "equivalence-rn", "tensor-check",
)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "seed": self.seed,
                "schema_version": self.schema_version}

    @property
    def hash(self) -> str:
        return params_hash(self.to_json())

    def get(self, key, default=None):
        return self.params.get(key, default)

    def require(self, key):
        if key not in self.params:
            raise ConfigError(f"{self.experiment}: missing parameter {key!r}")
        return self.params[key]


def parse_config(doc, experiment: str | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"experiment", "params", "seed", "schema_version"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kind = doc.get("experiment", experiment)
    if kind is None:
        raise ConfigError("config names no experiment")
    if experiment is not None and kind != experiment:
        raise ConfigError(f"config is for {kind!r}, not {experiment!r}")
    return ExperimentConfig(kind, doc.get("params", {}), doc.get("seed", 0),
                            doc.get("schema_version", SCHEMA_VERSION))


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc, experiment)


def dump_config(cfg: ExperimentConfig) -> str:
    return canonical_json(cfg.to_json())
