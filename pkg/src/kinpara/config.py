"""Experiment configuration schema (JSON, unknown keys rejected)."""
from __future__ import annotations

import hashlib
import json
import math
import re
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .grid import GridSpec
from .noise import SpectralMeasureSpec

COMMANDS = ("besov-analyze", "noise-sample", "enhance", "solve-linear", "solve-mfl", "particles",
            "schauder-bench", "full-suite")

# sections each command reads
REQUIRED = {
    "besov-analyze": ("grid", "besov"),
    "noise-sample": ("grid", "measure", "noise"),
    "enhance": ("measure", "enhance"),
    "solve-linear": ("linear",),
    "solve-mfl": ("mfl",),
    "particles": ("particles",),
    "schauder-bench": ("grid", "schauder"),
}
REQUIRED["full-suite"] = tuple(sorted({s for v in REQUIRED.values() for s in v}))

_PI_RE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def parse_length(x) -> float:
    """Numbers pass through; strings like ``"2pi"``, ``"pi/320"``, ``"20*pi"`` are expanded."""
    if isinstance(x, (int, float)):
        return float(x)
    m = _PI_RE.match(str(x))
    if not m:
        raise ValueError(f"cannot parse length {x!r}")
    num = float(m.group(1)) if m.group(1) not in ("", "+") else 1.0
    den = float(m.group(2)) if m.group(2) else 1.0
    return num * math.pi / den


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    n_x: int
    n_v: int
    L_x: float | str = "2pi"
    L_v: float | str = "2pi"
    dealias: bool = False

    @field_validator("L_x", "L_v")
    @classmethod
    def _len(cls, v):
        val = parse_length(v)
        if val <= 0:
            raise ValueError("must be positive")
        return val

    @model_validator(mode="after")
    def _check(self):
        GridSpec(self.n_x, self.n_v, self.L_x, self.L_v, self.dealias)
        return self

    def build(self) -> GridSpec:
        return GridSpec(self.n_x, self.n_v, self.L_x, self.L_v, self.dealias)


class MeasureConfig(_Strict):
    kind: Literal["product", "x_colored", "v_white_colored"]
    gammas: list[float]
    beta: float = 0.6

    @model_validator(mode="after")
    def _check(self):
        viol = self.build().constraint_violations()
        if viol:
            raise ValueError("; ".join(viol))
        return self

    def build(self) -> SpectralMeasureSpec:
        return SpectralMeasureSpec(self.kind, tuple(self.gammas), self.beta)


class BesovConfig(_Strict):
    sigmas: list[float] = Field(default_factory=lambda: [0.5, 1.0])
    n_fields: int = Field(2, ge=1)
    s: float = 0.0


class NoiseConfig(_Strict):
    epsilon: float = Field(0.0625, ge=0, lt=1)
    n_samples: int = Field(2, ge=1)


class EnhanceConfig(_Strict):
    grid: GridConfig
    levels: list[int] = Field(default_factory=lambda: [3, 5, 7])
    times: list[float] = Field(default_factory=lambda: [0.1, 0.25])
    epsilon: float = 0.0625
    samples: int = Field(100, ge=2)
    batch: int = Field(25, ge=1)
    alpha: float = Field(0.62, gt=0.5, lt=2 / 3)
    ladder: list[float] = Field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    ladder_seeds: int = Field(2, ge=1)
    ladder_t: float = 0.1
    ladder_window: tuple[int, int] = (1, 7)


class LinearConfig(_Strict):
    grid: GridConfig
    T: float = Field(0.2, gt=0)
    dt: float = Field(1e-3, gt=0)
    lam: float = Field(0.0, ge=0)
    alpha: float = 0.6
    drift_amplitude: float = 0.05
    source_sigma: float = -0.6
    drift_sigma: float = -0.6
    save_every: int = Field(50, ge=1)
    gain_window: Optional[tuple[int, int]] = None


class MflConfig(_Strict):
    grid: GridConfig
    T: float = Field(0.5, gt=0)
    dt: float = Field(2e-3, gt=0)
    W_amplitude: float = 0.3
    W_epsilon: float = 0.0625
    W_gamma: float = 0.8
    kernel: Literal["cos", "zero", "abs_power"] = "cos"
    kernel_power: float = 0.1
    save_every: int = Field(25, ge=1)


class ParticlesConfig(_Strict):
    grid: GridConfig
    h: float = Field(1e-2, gt=0)
    T: float = Field(0.2, gt=0)
    N_list: list[int] = Field(default_factory=lambda: [200, 2000])
    seeds: int = Field(3, ge=1)
    moment_N: int = Field(2000, ge=2)
    v_std: float = Field(0.5, gt=0)


class SchauderConfig(_Strict):
    t_max: float = Field(0.25, gt=0)
    beta_probe: float = 0.6
    envelope: bool = True


class ExperimentConfig(_Strict):
    command: Literal[COMMANDS]  # type: ignore[valid-type]
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: Optional[str] = None
    grid: Optional[GridConfig] = None
    measure: Optional[MeasureConfig] = None
    besov: Optional[BesovConfig] = None
    noise: Optional[NoiseConfig] = None
    enhance: Optional[EnhanceConfig] = None
    linear: Optional[LinearConfig] = None
    mfl: Optional[MflConfig] = None
    particles: Optional[ParticlesConfig] = None
    schauder: Optional[SchauderConfig] = None

    @model_validator(mode="after")
    def _sections(self):
        missing = [s for s in REQUIRED[self.command] if getattr(self, s) is None]
        if missing:
            raise ValueError(f"command {self.command!r} needs sections: {', '.join(missing)}")
        return self


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
