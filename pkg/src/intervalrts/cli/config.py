"""Experiment configuration: TOML files validated into pydantic models."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, SerializeAsAny, ValidationError, field_validator, model_validator

KINDS = ("tower", "rts", "ow", "gibbs", "fluct", "density", "pressure", "kac", "diag", "inducing")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MapSpec(_Strict):
    family: str
    params: dict = Field(default_factory=dict)

    @field_validator("family")
    @classmethod
    def _known(cls, v):
        from ..maps.gallery import GALLERY

        if v not in GALLERY:
            raise ValueError(f"unknown family {v!r}; choose from {sorted(GALLERY)}")
        return v


def _interval(v):
    if len(v) != 2 or not v[0] < v[1]:
        raise ValueError("interval must be [a, b] with a < b")
    return v


class TowerParams(_Strict):
    max_level: int = Field(40, ge=1)
    max_domains: int = Field(100_000, ge=1)
    tol: float = Field(1e-9, gt=0)
    lift_k: int = Field(0, ge=0, description="Cesàro steps for the lifted measure (0 skips it)")
    hist_bins: int = Field(1000, ge=10)
    hist_samples: int = Field(2_000_000, ge=1000)
    expected_domains: Optional[int] = Field(None, ge=1)
    markov_tol: float = Field(1e-9, gt=0)
    min_retained: float = Field(0.9, ge=0, le=1)


class RtsParams(_Strict):
    target: Literal["cylinder", "ball", "both"] = "cylinder"
    center: Optional[float] = None
    n_centers: int = Field(1, ge=1)
    levels: list[int] = Field(default_factory=lambda: [8])
    radius_exponent: int = Field(-1, description="ball radius |Z_n[z]| * 2^j")
    N: int = Field(100_000, ge=100)
    horizon: int = Field(10_000_000, ge=1)
    shards: int = Field(1, ge=1)
    ks: float = Field(0.05, gt=0)
    kac_low: float = 0.9
    kac_high: float = 1.1

    @field_validator("levels")
    @classmethod
    def _levels(cls, v):
        if not v or min(v) < 1:
            raise ValueError("levels must be positive")
        return v


class OwParams(_Strict):
    levels: list[int] = Field(default_factory=lambda: [15])
    N: int = Field(2000, ge=10)
    horizon: int = Field(10_000_000, ge=1)
    shards: int = Field(1, ge=1)
    reference: Optional[float] = None
    rel_tol: float = Field(0.1, gt=0)


class GibbsParams(_Strict):
    points: Optional[list[float]] = None
    n_points: int = Field(5, ge=1)
    n_max: int = Field(25, ge=1)
    gamma: float = 17.0
    gamma_prime: float = 2.5
    exact_tol: float = Field(1e-10, gt=0)


class FluctParams(_Strict):
    n: int = Field(20, ge=1)
    N: int = Field(5000, ge=10)
    h: Optional[float] = None
    sigma: Optional[float] = None
    horizon: int = Field(10_000_000, ge=1)
    shards: int = Field(1, ge=1)
    ks: float = Field(0.05, gt=0)


class DensityParams(_Strict):
    Y: Optional[list[float]] = None
    word: Optional[list[int]] = None
    delta: float = 0.25
    depth: int = Field(30, ge=1)
    n_bins: int = Field(4096, ge=16)
    tol: float = Field(1e-8, gt=0)
    l1_bins: float = Field(10.0, gt=0, description="L1 threshold in units of the bin width")

    @model_validator(mode="after")
    def _target(self):
        if (self.Y is None) == (self.word is None):
            raise ValueError("give exactly one of Y or word")
        if self.Y is not None:
            _interval(self.Y)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        return self


class PressureParams(_Strict):
    deltas: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    n_bins: int = Field(4096, ge=16)
    tol: float = Field(1e-10, gt=0)
    abs_tol: float = Field(1e-6, gt=0)

    @field_validator("deltas")
    @classmethod
    def _range(cls, v):
        if not v or any(not 0.0 <= d <= 1.2 for d in v):
            raise ValueError("deltas must lie in [0, 1.2]")
        return v


class KacParams(_Strict):
    Y: list[float]
    N: int = Field(1_000_000, ge=100)
    low: float = 0.98
    high: float = 1.02

    @field_validator("Y")
    @classmethod
    def _y(cls, v):
        return _interval(v)


class DiagParams(_Strict):
    n_max: int = Field(200, ge=2)
    lyapunov_N: int = Field(1_000_000, ge=100)
    l2_N: int = Field(10_000_000, ge=100)
    l2_rel_tol: float = Field(0.02, gt=0)
    sigma2_N: int = Field(1_000_000, ge=100)
    max_lag: int = Field(200, ge=1)


class InducingParams(_Strict):
    Y: list[float]
    delta: float
    depth: int = Field(30, ge=1)
    n_points: int = Field(1000, ge=1)
    horizon: int = Field(1_000_000, ge=1)
    max_level: int = Field(40, ge=1)
    uncovered: float = Field(1e-3, gt=0)
    compare_tower: bool = True

    @field_validator("Y")
    @classmethod
    def _y(cls, v):
        return _interval(v)

    @field_validator("delta")
    @classmethod
    def _delta(cls, v):
        if not v > 0:
            raise ValueError("delta must be positive")
        return v


PARAMS = {
    "tower": TowerParams,
    "rts": RtsParams,
    "ow": OwParams,
    "gibbs": GibbsParams,
    "fluct": FluctParams,
    "density": DensityParams,
    "pressure": PressureParams,
    "kac": KacParams,
    "diag": DiagParams,
    "inducing": InducingParams,
}


class ExperimentConfig(_Strict):
    kind: Literal["tower", "rts", "ow", "gibbs", "fluct", "density", "pressure", "kac", "diag", "inducing"]
    seed: int = Field(ge=0)
    map: MapSpec
    out: Optional[str] = None
    params: SerializeAsAny[BaseModel]

    def echo(self) -> dict:
        """Resolved config, including defaults, in the file layout."""
        d = self.model_dump(mode="json")
        d[self.kind] = d.pop("params")
        return d


class ConfigError(Exception):
    """Raised with human-readable, field-level diagnostics."""

    def __init__(self, messages: list[str]):
        super().__init__("\n".join(messages))
        self.messages = messages


def _format_validation(exc: ValidationError) -> list[str]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"])
        out.append(f"{loc or '<root>'}: {e['msg']}")
    return out


def parse_config(text: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    if seed_override is not None:
        data["seed"] = seed_override
    kind = data.get("kind")
    if kind not in PARAMS:
        raise ConfigError([f"kind: must be one of {', '.join(KINDS)} (got {kind!r})"])
    errors = []
    section = data.pop(kind, {})
    params = None
    try:
        params = PARAMS[kind].model_validate(section)
    except ValidationError as exc:
        errors += [f"{kind}.{m}" for m in _format_validation(exc)]
    for other in set(PARAMS) & set(data):
        errors.append(f"{other}: section does not belong to kind {kind!r}")
        data.pop(other)
    data["params"] = params if params is not None else TowerParams()
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = _format_validation(exc) + errors
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {p}: {exc}"]) from exc
    return parse_config(text, seed_override)
