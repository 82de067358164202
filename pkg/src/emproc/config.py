"""Experiment configuration files (YAML, strict schema)."""
from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .models import ModelSpec, TimeGrid
from .weights import WeightSpec, make_weights


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelBlock(_Strict):
    kind: Literal["ComonotoneDriver", "BrownianMotion", "StationaryOUGaussian", "IndependentField"]
    rho: float = Field(1.0, gt=0)
    marginal: Literal["uniform", "normal"] = "uniform"
    scale_slope: float = 0.0


class WeightsBlock(_Strict):
    q: dict
    c: Optional[dict] = None
    q0: Optional[dict] = None
    z: Optional[dict] = None


class LinspaceBlock(_Strict):
    start: float
    stop: float
    num: int = Field(ge=2)


class GridBlock(_Strict):
    """Either explicit ``points`` or an evenly spaced ``linspace``."""

    T: float = Field(gt=0)
    points: Optional[list[float]] = Field(None, min_length=2)
    linspace: Optional[LinspaceBlock] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.points is None) == (self.linspace is None):
            raise ValueError("grid needs exactly one of 'points' or 'linspace'")
        return self


class RunBlock(_Strict):
    n: int = Field(1000, ge=1)
    R: int = Field(10000, ge=2)
    seed: int = Field(0, ge=0)
    n_ladder: Optional[list[int]] = None

    @field_validator("n_ladder")
    @classmethod
    def _ladder(cls, v):
        if v is not None and (len(v) < 3 or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 1):
            raise ValueError("n_ladder must be strictly increasing positive integers with >= 3 rungs")
        return v


class TightnessBlock(_Strict):
    delta: float = Field(gt=0)
    r: float = 0.0


class CopulaBlock(_Strict):
    kind: Literal["independent", "comonotone", "gaussian"]
    rho: Optional[float] = None

    @model_validator(mode="after")
    def _rho(self):
        if self.kind == "gaussian" and (self.rho is None or not -1 < self.rho < 1):
            raise ValueError("gaussian copula needs rho in (-1, 1)")
        return self


class BridgeBlock(_Strict):
    n: int = Field(2000, ge=100)
    R: int = Field(2000, ge=2)
    grid01: list[float] = Field(min_length=1)
    copulas: list[CopulaBlock] = Field(min_length=1)
    bk_ladder: list[int] = Field(default_factory=lambda: [500, 8000])
    bk_R: int = Field(200, ge=2)

    @field_validator("grid01")
    @classmethod
    def _unit(cls, v):
        if any(not 0 < x < 1 for x in v):
            raise ValueError("grid01 points must lie in (0, 1)")
        return v


class CheckSpec(_Strict):
    name: str
    params: dict[str, Any] = Field(default_factory=dict)


class OutputBlock(_Strict):
    directory: str = "reports"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class ExperimentConfig(_Strict):
    name: str
    model: Optional[ModelBlock] = None
    weights: Optional[WeightsBlock] = None
    weights2: Optional[WeightsBlock] = None
    grid: Optional[GridBlock] = None
    run: RunBlock = Field(default_factory=RunBlock)
    tightness: Optional[TightnessBlock] = None
    bridge: Optional[BridgeBlock] = None
    checks: list[CheckSpec] = Field(default_factory=list)
    output: OutputBlock = Field(default_factory=OutputBlock)

    # -- resolved objects --------------------------------------------------

    def model_spec(self) -> ModelSpec:
        if self.model is None:
            raise ConfigError(f"config {self.name!r} has no model block")
        return ModelSpec(**self.model.model_dump())

    def time_grid(self) -> TimeGrid:
        if self.grid is None:
            raise ConfigError(f"config {self.name!r} has no grid block")
        b = self.grid
        if b.linspace is not None:
            g = TimeGrid.linspace(b.linspace.start, b.linspace.stop, b.linspace.num, b.T)
        else:
            g = TimeGrid(tuple(b.points), b.T)
        self.model_spec().validate_grid(g)
        return g

    def weight_spec(self, second: bool = False) -> WeightSpec:
        block = self.weights2 if second else self.weights
        if block is None:
            raise ConfigError(f"config {self.name!r} has no {'weights2' if second else 'weights'} block")
        return make_weights(block.model_dump(exclude_none=True), model=self.model_spec() if self.model else None)

    def dump(self) -> dict:
        return self.model_dump(exclude_none=True)

    def digest(self) -> str:
        body = {k: v for k, v in self.dump().items() if k != "output"}
        blob = json.dumps(sanitize(body), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sanitize(obj):
    """Replace non-finite floats by strings so the result is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            return sanitize(obj.item())
        except (TypeError, ValueError):
            pass
    return obj


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.dump(), sort_keys=False)


def bundled_paths() -> list[Path]:
    root = resources.files("emproc") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled(name: str) -> Path:
    for p in bundled_paths():
        if p.stem == name:
            return p
    raise ConfigError(f"no bundled config named {name!r}")
