from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.psi.field_model import ScheduleKind, WavefrontKind

HALF_PI = math.pi / 2


class StrictModel(BaseModel):
    # Unknown keys are typos, not extensions
    model_config = ConfigDict(extra="forbid")


# Building blocks
class WavefrontConfig(StrictModel):
    kind: WavefrontKind = "defocus"
    amplitude: float = 3.0  # radians peak-to-valley
    width: int = Field(256, ge=2)
    height: int = Field(256, ge=2)
    coefficients: Optional[list[list[float]]] = None  # polynomial: c[i][j] * x^i y^j
    cycles: tuple[int, int] = (1, 1)  # ripple: periods across (x, y)


class ErrorsConfig(StrictModel):
    kind: ScheduleKind = "zero"
    magnitude: float = 0.0  # +-delta, sigma, kappa or per-step detuning
    values: Optional[list[float]] = None  # explicit schedule
    seed: int = 0


class CarrierConfig(StrictModel):
    u0: float  # rad/px along x (columns)
    v0: float = 0.0  # rad/px along y (rows)


class PsaConfig(StrictModel):
    kind: Literal["sh5", "custom", "zeros"] = "sh5"
    coefficients: Optional[list[float]] = None  # custom: real base coefficients c_n
    zeros_pi: Optional[list[float]] = None  # zeros: FTF zeros in units of pi, with multiplicity
    step: float = HALF_PI

    @model_validator(mode="after")
    def _check_kind_inputs(self):
        if self.kind == "custom" and not self.coefficients:
            raise ValueError("psa.kind=custom needs psa.coefficients")
        if self.kind == "zeros" and not self.zeros_pi:
            raise ValueError("psa.kind=zeros needs psa.zeros_pi")
        return self


class MaskConfig(StrictModel):
    cutoff: Optional[float] = Field(None, gt=0)  # rad/px, default half the carrier magnitude
    border_crop: Optional[int] = Field(None, ge=0)  # px, default ceil(2 pi / cutoff)


class StackSourceConfig(StrictModel):
    wavefront: WavefrontConfig = Field(default_factory=WavefrontConfig)
    background: float = 128.0
    contrast: float = Field(100.0, gt=0)
    step: float = HALF_PI
    frames: int = Field(5, ge=3)
    errors: ErrorsConfig = Field(default_factory=ErrorsConfig)
    carrier: Optional[CarrierConfig] = None
    noise_sigma: float = Field(0.0, ge=0)
    seed: int = 0


class ArtifactConfig(StrictModel):
    a1: float = 1.0
    a2: float = 0.1
    a2_phase: float = 0.0  # radians, arg(A2/A1)


# Commands
class SimulateConfig(StackSourceConfig):
    output: str = "out/simulate"
    artifact: Optional[ArtifactConfig] = None  # also write the predicted conjugate error map
    line_row: Optional[int] = Field(None, ge=0)  # default: middle row
    previews: bool = True  # 8-bit PGM renders of frames and maps


class DemodConfig(StrictModel):
    input: Optional[str] = None  # stack directory
    source: Optional[StackSourceConfig] = None  # or synthesize the stack inline
    truth: Optional[str] = None  # truth phase map stem, for error reports
    output: str = "out/demod"
    method: Literal["temporal", "spatial"] = "spatial"
    psa: PsaConfig = Field(default_factory=PsaConfig)
    carrier: Literal["metadata", "auto"] | CarrierConfig = "metadata"
    mask: MaskConfig = Field(default_factory=MaskConfig)
    min_lobe_fraction: float = Field(0.5, ge=0, le=1)
    modulus_floor: float = Field(1e-9, ge=0)
    carrier_exclusion_bins: float = Field(2.0, ge=0)  # auto: DFT bins around DC ignored by the peak search
    carrier_ambiguity_ratio: float = Field(0.99, gt=0, le=1)  # auto: runner-up peak ratio that counts as a tie
    tilt: bool = True
    line_row: Optional[int] = Field(None, ge=0)
    previews: bool = True

    @model_validator(mode="after")
    def _one_input(self):
        if (self.input is None) == (self.source is None):
            raise ValueError("demod needs exactly one of input (stack directory) or source (synthesis)")
        return self


class FtfConfig(StrictModel):
    output: str = "out/ftf"
    psa: PsaConfig = Field(default_factory=PsaConfig)
    samples: int = Field(1024, ge=2)
    tolerance: float = Field(1e-12, gt=0)


class CompareConfig(StrictModel):
    first: str = ""
    second: str = ""
    output: str = "out/compare"
    crop: int = Field(0, ge=0)
    tilt: bool = True
    display_gain: float = Field(10.0, gt=0)

    @model_validator(mode="after")
    def _both_maps(self):
        if not self.first or not self.second:
            raise ValueError("compare needs both first and second phase maps")
        return self


class MonteCarloConfig(StrictModel):
    output: str = "out/montecarlo"
    wavefront: WavefrontConfig = Field(default_factory=WavefrontConfig)
    background: float = 128.0
    contrast: float = Field(100.0, gt=0)
    psa: PsaConfig = Field(default_factory=PsaConfig)
    carrier: Optional[CarrierConfig] = None
    errors: ErrorsConfig = Field(default_factory=lambda: ErrorsConfig(kind="uniform", magnitude=0.3))
    noise_sigma: float = Field(0.0, ge=0)
    mask: MaskConfig = Field(default_factory=MaskConfig)
    method: Literal["temporal", "spatial", "both"] = "both"
    trials: int = Field(50, ge=2)
    seed: int = 0
    tilt: bool = True
    workers: Optional[int] = Field(None, ge=1)


COMMAND_MODELS: dict[str, type[StrictModel]] = {
    "simulate": SimulateConfig,
    "demod": DemodConfig,
    "ftf": FtfConfig,
    "compare": CompareConfig,
    "montecarlo": MonteCarloConfig,
}
