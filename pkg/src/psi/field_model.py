"""Core field types and synthetic interferogram stacks.

Coordinates: x is the column index and y the row index, origin at pixel (0, 0).
Arrays are stored row-major as (height, width); stacks as (frames, height, width).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import AliasChoices, BaseModel, ConfigDict, Field

from src.errors import PreconditionError

logger = logging.getLogger(__name__)

WavefrontKind = Literal["flat", "tilt", "defocus", "astigmatism", "polynomial", "ripple"]
ScheduleKind = Literal["zero", "uniform", "gaussian", "quadratic-pzt", "detuning", "explicit"]

WAVEFRONT_KINDS = ("flat", "tilt", "defocus", "astigmatism", "polynomial", "ripple")
SCHEDULE_KINDS = ("zero", "uniform", "gaussian", "quadratic-pzt", "detuning", "explicit")


def wrap_phase(values):
    out = np.mod(np.asarray(values, dtype=float) + np.pi, 2 * np.pi) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    return np.where(out >= np.pi, out - 2 * np.pi, out)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    # Integer pixel coordinates (x, y) broadcast to (height, width).
    return np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))


@dataclass(frozen=True)
class PhaseMap:
    values: np.ndarray
    wrapped: bool = False

    def __post_init__(self):
        arr = _frozen(self.values, float)
        if arr.ndim != 2 or min(arr.shape) < 2:
            raise PreconditionError(f"Phase map must be 2D and at least 2x2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("Phase map contains non-finite values")
        if self.wrapped and (arr.min() < -np.pi or arr.max() >= np.pi):
            raise PreconditionError(
                f"Wrapped phase outside [-pi, pi): range [{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def wrap(self) -> PhaseMap:
        return PhaseMap(wrap_phase(self.values), wrapped=True)


@dataclass(frozen=True)
class ComplexField:
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, complex)
        if arr.ndim != 2 or min(arr.shape) < 2:
            raise PreconditionError(f"Complex field must be 2D and at least 2x2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("Complex field contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ErrorSchedule:
    deviations: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.deviations, float)
        if arr.ndim != 1:
            raise PreconditionError("Error schedule must be a flat list of per-frame deviations")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("Error schedule contains non-finite values")
        object.__setattr__(self, "deviations", arr)

    def __len__(self) -> int:
        return len(self.deviations)

    @classmethod
    def zeros(cls, frames: int) -> ErrorSchedule:
        return cls(np.zeros(frames))


@dataclass(frozen=True)
class CarrierSpec:
    """Spatial carrier in radians/pixel along x (columns) and y (rows)."""

    u0: float
    v0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.u0) and math.isfinite(self.v0)):
            raise PreconditionError("Carrier components must be finite")
        if not 0 < self.magnitude < math.pi:
            raise PreconditionError(
                f"Carrier magnitude {self.magnitude:.6g} rad/px must lie in (0, pi)"
            )

    @property
    def magnitude(self) -> float:
        return math.hypot(self.u0, self.v0)

    def ramp(self, width: int, height: int) -> np.ndarray:
        """The carrier phase u0*x + v0*y on integer pixel coordinates."""
        x, y = pixel_grid(width, height)
        return self.u0 * x + self.v0 * y

    def max_projected_slope(self, phase: PhaseMap) -> float:
        gy, gx = np.gradient(phase.values)
        ux, uy = self.u0 / self.magnitude, self.v0 / self.magnitude
        return float(np.max(np.abs(gx * ux + gy * uy)))

    def check_against(self, phase: PhaseMap) -> float:
        """Refuse wavefronts whose slope along the carrier reaches the carrier frequency."""
        slope = self.max_projected_slope(phase)
        if slope >= self.magnitude:
            raise PreconditionError(
                f"Spatial carrier {self.magnitude:.6g} rad/px does not exceed the wavefront's "
                f"max slope {slope:.6g} rad/px along the carrier; signal and conjugate "
                f"spectra would overlap"
            )
        return slope


class CarrierRecord(BaseModel):
    u0: float
    v0: float = 0.0


class StackMetadata(BaseModel):
    """Provenance of a stack; this is the JSON sidecar written next to the frames."""

    model_config = ConfigDict(frozen=True)

    width: int
    height: int
    # Hand-written sidecars may use the short names N, omega0, a and b
    frames: int = Field(validation_alias=AliasChoices("frames", "N"))
    step: float = Field(validation_alias=AliasChoices("step", "omega0", "ω0"))
    background: float | None = Field(None, validation_alias=AliasChoices("background", "a"))
    contrast: float | None = Field(None, validation_alias=AliasChoices("contrast", "b"))
    carrier: CarrierRecord | None = None
    errors: list[float] | None = None
    noise_sigma: float | None = None
    seed: int | None = None
    source: Literal["synthetic", "imported"] = "synthetic"

    def carrier_spec(self) -> CarrierSpec | None:
        if self.carrier is None:
            return None
        return CarrierSpec(self.carrier.u0, self.carrier.v0)


@dataclass(frozen=True)
class InterferogramStack:
    frames: np.ndarray
    metadata: StackMetadata = field(compare=False)

    def __post_init__(self):
        arr = _frozen(self.frames, float)
        if arr.ndim != 3:
            raise PreconditionError(f"Stack must be (frames, height, width), got shape {arr.shape}")
        if arr.shape[0] < 3:
            raise PreconditionError(f"Stack needs at least 3 frames, got {arr.shape[0]}")
        if min(arr.shape[1:]) < 2:
            raise PreconditionError(f"Frames must be at least 2x2, got {arr.shape[1:]}")
        if (self.metadata.frames, self.metadata.height, self.metadata.width) != arr.shape:
            raise PreconditionError(
                f"Sidecar describes {self.metadata.frames}x{self.metadata.height}x{self.metadata.width} "
                f"but frames are {arr.shape}"
            )
        object.__setattr__(self, "frames", arr)

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def nominal_step(self) -> float:
        return self.metadata.step

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]


def synthesize_wavefront(
    kind: WavefrontKind,
    amplitude: float,
    width: int,
    height: int,
    coefficients: Sequence[Sequence[float]] | None = None,
    cycles: tuple[int, int] = (1, 1),
) -> PhaseMap:
    """Build an unwrapped truth wavefront with the requested peak-to-valley (radians).

    polynomial takes ``coefficients[i][j]`` for ``x**i * y**j`` on coordinates
    normalized to [-1, 1]; ripple is ``cos(2 pi p x / W) cos(2 pi q y / H)`` with
    ``cycles = (p, q)``, which is exactly periodic on the pixel grid.
    """
    if width < 2 or height < 2:
        raise PreconditionError(f"Wavefront needs at least 2x2 pixels, got {width}x{height}")
    if not math.isfinite(amplitude):
        raise PreconditionError(f"Wavefront amplitude must be finite, got {amplitude}")
    if kind not in WAVEFRONT_KINDS:
        raise PreconditionError(f"Unknown wavefront kind '{kind}', expected one of {WAVEFRONT_KINDS}")

    x, y = pixel_grid(width, height)
    cx, cy = (width - 1) / 2, (height - 1) / 2

    if kind == "flat":
        return PhaseMap(np.zeros((height, width)))
    if kind == "tilt":
        base = x
    elif kind == "defocus":
        base = (x - cx) ** 2 + (y - cy) ** 2
    elif kind == "astigmatism":
        base = (x - cx) ** 2 - (y - cy) ** 2
    elif kind == "polynomial":
        if not coefficients:
            raise PreconditionError("polynomial wavefront needs a coefficient matrix")
        c = np.asarray(coefficients, dtype=float)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise PreconditionError("polynomial coefficients must be a finite 2D matrix")
        base = P.polyval2d((x - cx) / max(cx, 0.5), (y - cy) / max(cy, 0.5), c)
    else:
        p, q = cycles
        base = np.cos(2 * np.pi * p * x / width) * np.cos(2 * np.pi * q * y / height)

    base = base - base.min()
    span = base.max()
    if span == 0:
        return PhaseMap(np.zeros((height, width)))
    return PhaseMap(base * (amplitude / span))


def make_error_schedule(
    kind: ScheduleKind,
    frames: int,
    magnitude: float = 0.0,
    seed=None,
    step: float = math.pi / 2,
    values: Sequence[float] | None = None,
) -> ErrorSchedule:
    """Draw per-frame step deviations.

    ``magnitude`` is the half-width for uniform, sigma for gaussian, kappa for
    quadratic-pzt (eps_n = kappa * (n * step)**2) and the per-step offset for
    detuning (eps_n = delta * n). ``seed`` may be an int or a SeedSequence.
    """
    if frames < 3:
        raise PreconditionError(f"Error schedule needs at least 3 frames, got {frames}")
    if not (math.isfinite(magnitude) and math.isfinite(step)):
        raise PreconditionError("Error schedule parameters must be finite")

    n = np.arange(frames, dtype=float)
    if kind == "zero":
        return ErrorSchedule.zeros(frames)
    if kind == "uniform":
        rng = np.random.default_rng(seed)
        return ErrorSchedule(rng.uniform(-magnitude, magnitude, frames))
    if kind == "gaussian":
        if magnitude < 0:
            raise PreconditionError("gaussian schedule sigma must be non-negative")
        rng = np.random.default_rng(seed)
        return ErrorSchedule(rng.normal(0.0, magnitude, frames))
    if kind == "quadratic-pzt":
        return ErrorSchedule(magnitude * (n * step) ** 2)
    if kind == "detuning":
        return ErrorSchedule(magnitude * n)
    if kind == "explicit":
        if values is None or len(values) != frames:
            raise PreconditionError(
                f"explicit schedule needs {frames} values, got {0 if values is None else len(values)}"
            )
        return ErrorSchedule(np.asarray(values, dtype=float))
    raise PreconditionError(f"Unknown error schedule kind '{kind}', expected one of {SCHEDULE_KINDS}")


def generate_stack(
    phase: PhaseMap,
    background: float,
    contrast: float,
    step: float,
    frames: int,
    errors: ErrorSchedule | None = None,
    carrier: CarrierSpec | None = None,
    noise_sigma: float = 0.0,
    seed: int | None = 0,
) -> InterferogramStack:
    # Sample I(n) = a + b cos(phi + u0 x + v0 y + n w0 + eps_n) plus Gaussian noise.
    if contrast <= 0:
        raise PreconditionError(f"Contrast b must be positive, got {contrast}")
    if background < contrast:
        raise PreconditionError(
            f"Background a={background} below contrast b={contrast} gives negative intensities"
        )
    if frames < 3:
        raise PreconditionError(f"Stack needs at least 3 frames, got {frames}")
    if noise_sigma < 0 or not math.isfinite(noise_sigma):
        raise PreconditionError(f"Noise sigma must be finite and non-negative, got {noise_sigma}")
    if errors is None:
        errors = ErrorSchedule.zeros(frames)
    if len(errors) != frames:
        raise PreconditionError(
            f"Error schedule has {len(errors)} deviations but the stack has {frames} frames"
        )

    argument = phase.values
    if carrier is not None:
        slope = carrier.check_against(phase)
        logger.debug(f"Carrier {carrier.magnitude:.4g} rad/px clears max slope {slope:.4g} rad/px")
        argument = argument + carrier.ramp(phase.width, phase.height)

    shifts = np.arange(frames) * step + errors.deviations
    data = background + contrast * np.cos(argument[None, :, :] + shifts[:, None, None])
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        data = data + rng.normal(0.0, noise_sigma, size=data.shape)

    meta = StackMetadata(
        width=phase.width,
        height=phase.height,
        frames=frames,
        step=step,
        background=background,
        contrast=contrast,
        carrier=None if carrier is None else CarrierRecord(u0=carrier.u0, v0=carrier.v0),
        errors=[float(e) for e in errors.deviations],
        noise_sigma=noise_sigma,
        seed=seed,
    )
    return InterferogramStack(data, meta)
