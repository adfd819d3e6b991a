"""Pipeline configuration: dataclasses plus JSON loading over packaged defaults."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .scale import GateThresholds
from .sim import ScenarioConfig

MODES = ("bypass", "ba")
SELECTIONS = ("fused", "first")


@dataclass(frozen=True)
class EstimatorConfig:
    window: int = 200
    stride: int = 20
    order: int = 1
    selection: str = "fused"

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("estimator.order must be 1 or 2")
        if self.window < 2 or self.stride < 1:
            raise ValueError("estimator.window must be >= 2 and stride >= 1")
        if self.selection not in SELECTIONS:
            raise ValueError(f"estimator.selection must be one of {SELECTIONS}")


@dataclass(frozen=True)
class BaConfig:
    window: int = 20
    max_iterations: int = 30
    tolerance: float = 1e-10


@dataclass(frozen=True)
class PipelineConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    gate: GateThresholds = field(default_factory=GateThresholds)
    ba: BaConfig = field(default_factory=BaConfig)
    mode: str = "bypass"
    orthogonalize: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "estimator": dataclasses.asdict(self.estimator),
            "gate": dataclasses.asdict(self.gate),
            "ba": dataclasses.asdict(self.ba),
            "mode": self.mode,
            "orthogonalize": self.orthogonalize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - {"scenario", "estimator", "gate", "ba", "mode", "orthogonalize"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            scenario=ScenarioConfig.from_dict(d.get("scenario", {})),
            estimator=EstimatorConfig(**d.get("estimator", {})),
            gate=GateThresholds(**d.get("gate", {})),
            ba=BaConfig(**d.get("ba", {})),
            mode=d.get("mode", "bypass"),
            orthogonalize=bool(d.get("orthogonalize", False)),
        )


def default_config_dict() -> dict:
    text = resources.files("scalesense").joinpath("default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Packaged defaults, updated by the JSON file at ``path`` and then by ``overrides``."""
    d = default_config_dict()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            d = _merge(d, json.load(fh))
    if overrides:
        d = _merge(d, overrides)
    return PipelineConfig.from_dict(d)
