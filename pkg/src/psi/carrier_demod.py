"""Temporal-spatial demodulation of spatial-carrier stacks.

With a carrier, the temporal PSA output is A1 exp(i(phi + k.r)) + A2 exp(-i(phi + k.r)).
Removing the carrier leaves the signal at the spectral origin and moves the
conjugate to -2k, where an ideal low-pass disc rejects it. The phase of what
remains is phi + arg A1 whatever the step errors were.

Spectral convention: DFT bin k along an axis of length L sits at 2 pi k / L
rad/pixel (signed, scipy.fft.fftfreq order).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import fft

from src.errors import DegeneracyError, PreconditionError
from src.psi.field_model import CarrierSpec, ComplexField, InterferogramStack, PhaseMap
from src.psi.psa_engine import MODULUS_FLOOR, PsaSpec, demodulate_temporal

logger = logging.getLogger(__name__)

AUTO_EXCLUSION_BINS = 2
AMBIGUITY_RATIO = 0.99
MIN_LOBE_FRACTION = 0.5


@dataclass(frozen=True)
class SpectralMask:
    """Ideal disc passband of radius ``cutoff`` rad/pixel around the spectral origin."""

    cutoff: float
    border_crop: int = 0
    shape: Literal["ideal-disc"] = "ideal-disc"

    def __post_init__(self):
        if not (math.isfinite(self.cutoff) and self.cutoff > 0):
            raise PreconditionError(f"Mask cutoff must be positive, got {self.cutoff}")
        if self.border_crop < 0:
            raise PreconditionError(f"Border crop must be non-negative, got {self.border_crop}")

    @classmethod
    def for_carrier(cls, carrier: CarrierSpec, cutoff: float | None = None,
                    border_crop: int | None = None) -> SpectralMask:
        # Default: half the carrier magnitude, cropping ceil(2 pi / cutoff) pixels.
        cutoff = carrier.magnitude / 2 if cutoff is None else cutoff
        if border_crop is None:
            border_crop = math.ceil(2 * math.pi / cutoff)
        return cls(cutoff, border_crop)

    def passband(self, height: int, width: int) -> np.ndarray:
        fy, fx = spatial_frequencies(height, width)
        return np.hypot(fx, fy) <= self.cutoff


@dataclass(frozen=True)
class SpatialDiagnostics:
    carrier: CarrierSpec
    carrier_source: str
    cutoff: float
    border_crop: int
    passband_energy: float
    rejected_energy: float
    valid: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "carrier": {"u0": self.carrier.u0, "v0": self.carrier.v0},
            "carrier_source": self.carrier_source,
            "cutoff": self.cutoff,
            "border_crop": self.border_crop,
            "passband_energy": self.passband_energy,
            "rejected_energy": self.rejected_energy,
            "invalid_pixels": int(self.valid.size - self.valid.sum()),
        }


@dataclass(frozen=True)
class SpatialResult:
    phase: PhaseMap
    filtered: ComplexField
    unfiltered: ComplexField
    diagnostics: SpatialDiagnostics


def spatial_frequencies(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    fy = 2 * np.pi * fft.fftfreq(height)
    fx = 2 * np.pi * fft.fftfreq(width)
    return np.meshgrid(fy, fx, indexing="ij")


def remove_carrier(field: ComplexField, carrier: CarrierSpec) -> ComplexField:
    return ComplexField(field.values * np.exp(-1j * carrier.ramp(field.width, field.height)))


def apply_carrier(field: ComplexField, carrier: CarrierSpec) -> ComplexField:
    return ComplexField(field.values * np.exp(1j * carrier.ramp(field.width, field.height)))


def lowpass(field: ComplexField, mask: SpectralMask) -> ComplexField:
    keep = mask.passband(field.height, field.width)
    if keep.sum() <= 1:
        logger.warning(
            f"Cutoff {mask.cutoff:.4g} rad/px keeps only the DC bin of a "
            f"{field.height}x{field.width} field; the phase becomes constant"
        )
    spectrum = fft.fft2(field.values)
    return ComplexField(fft.ifft2(np.where(keep, spectrum, 0)))


def log_spectrum(field: ComplexField) -> np.ndarray:
    # log10(1 + |F|) centered with fftshift, for display.
    return np.log10(1 + np.abs(fft.fftshift(fft.fft2(field.values))))


def _parabolic_offset(left: float, center: float, right: float) -> float:
    denom = left - 2 * center + right
    if denom == 0 or max(left, right) <= 1e-9 * center:
        return 0.0
    return 0.5 * (left - right) / denom


def estimate_carrier(
    field: ComplexField,
    exclusion_radius: float = AUTO_EXCLUSION_BINS,
    ambiguity_ratio: float = AMBIGUITY_RATIO,
) -> CarrierSpec:
    """Locate the strongest spectral peak outside a disc of ``exclusion_radius`` bins.

    The peak is refined per axis by a parabola through the 3x3 neighborhood;
    bin-aligned tones come back exactly.
    """
    h, w = field.shape
    magnitude = np.abs(fft.fft2(field.values))
    ky, kx = np.meshgrid(fft.fftfreq(h) * h, fft.fftfreq(w) * w, indexing="ij")
    outside = np.hypot(kx, ky) > exclusion_radius
    candidates = np.where(outside, magnitude, 0.0)

    total = np.sqrt(np.sum(magnitude ** 2))
    peak = candidates.max()
    if total == 0 or peak <= 1e-12 * total:
        raise DegeneracyError("Field has no spectral peak outside the origin; no carrier to estimate")

    iy, ix = np.unravel_index(np.argmax(candidates), candidates.shape)
    # A second maximum beyond the peak's 3x3 neighborhood, at least ambiguity_ratio of it, is ambiguous
    near = (np.abs((ky - ky[iy, ix] + h / 2) % h - h / 2) <= 1) & (
        np.abs((kx - kx[iy, ix] + w / 2) % w - w / 2) <= 1
    )
    rivals = np.where(near, 0.0, candidates)
    if rivals.max() >= ambiguity_ratio * peak:
        jy, jx = np.unravel_index(np.argmax(rivals), rivals.shape)
        found = [
            (2 * np.pi * kx[iy, ix] / w, 2 * np.pi * ky[iy, ix] / h),
            (2 * np.pi * kx[jy, jx] / w, 2 * np.pi * ky[jy, jx] / h),
        ]
        raise DegeneracyError(
            f"Ambiguous carrier: peaks at (u0, v0) = {found[0]} and {found[1]} are within {1 - ambiguity_ratio:.3g} of each other",
            candidates=found,
        )

    center = magnitude[iy, ix]
    dx = _parabolic_offset(magnitude[iy, (ix - 1) % w], center, magnitude[iy, (ix + 1) % w])
    dy = _parabolic_offset(magnitude[(iy - 1) % h, ix], center, magnitude[(iy + 1) % h, ix])
    u0 = 2 * np.pi * (kx[iy, ix] + dx) / w
    v0 = 2 * np.pi * (ky[iy, ix] + dy) / h
    logger.debug(f"Estimated carrier (u0, v0) = ({u0:.6g}, {v0:.6g}) rad/px")
    return CarrierSpec(float(u0), float(v0))


def _aliased(u: float) -> float:
    return (u + math.pi) % (2 * math.pi) - math.pi


def check_mask(carrier: CarrierSpec, mask: SpectralMask) -> None:
    if mask.cutoff >= carrier.magnitude:
        raise PreconditionError(
            f"Cutoff {mask.cutoff:.6g} rad/px must be below the carrier magnitude "
            f"{carrier.magnitude:.6g} rad/px"
        )
    conj = math.hypot(_aliased(-2 * carrier.u0), _aliased(-2 * carrier.v0))
    if conj <= mask.cutoff:
        raise PreconditionError(
            f"Conjugate lobe at -2 x carrier aliases to {conj:.6g} rad/px from the origin, inside "
            f"the {mask.cutoff:.6g} rad/px passband; signal and conjugate cannot be separated"
        )


def demodulate_spatial(
    stack: InterferogramStack,
    spec: PsaSpec,
    carrier: CarrierSpec | Literal["auto"] | None = None,
    mask: SpectralMask | None = None,
    *,
    cutoff: float | None = None,
    border_crop: int | None = None,
    min_lobe_fraction: float = MIN_LOBE_FRACTION,
    modulus_floor: float = MODULUS_FLOOR,
    exclusion_radius: float = AUTO_EXCLUSION_BINS,
    ambiguity_ratio: float = AMBIGUITY_RATIO,
) -> SpatialResult:
    """Temporal PSA, carrier removal, low-pass filtering and phase extraction.

    ``carrier=None`` takes the carrier recorded in the stack metadata; ``"auto"``
    estimates it from the temporally demodulated field. Without an explicit
    ``mask`` the default disc is built around the resolved carrier, with
    ``cutoff`` and ``border_crop`` overriding its radius and guard band.
    """
    if mask is not None and (cutoff is not None or border_crop is not None):
        raise PreconditionError("Pass either an explicit mask or cutoff/border_crop, not both")

    recorded = stack.metadata.carrier_spec()
    if carrier is None:
        if recorded is None:
            if stack.metadata.source == "synthetic":
                raise PreconditionError(
                    "Stack was synthesized without a spatial carrier; temporal-spatial "
                    "demodulation needs u0 > max|dphi/dx|"
                )
            carrier = "auto"
        else:
            carrier, source = recorded, "metadata"
    elif carrier != "auto":
        source = "given"

    temporal = demodulate_temporal(stack, spec, modulus_floor)
    if carrier == "auto":
        carrier, source = estimate_carrier(temporal.field, exclusion_radius, ambiguity_ratio), "auto"

    mask = mask or SpectralMask.for_carrier(carrier, cutoff, border_crop)
    check_mask(carrier, mask)

    shifted = remove_carrier(temporal.field, carrier)
    spectrum = fft.fft2(shifted.values)
    power = np.abs(spectrum) ** 2
    total = power.sum()
    keep = mask.passband(*shifted.shape)
    passband = float(power[keep].sum() / total) if total > 0 else 0.0
    if passband < min_lobe_fraction:
        raise PreconditionError(
            f"Only {passband:.3g} of the spectral energy lies around the carrier "
            f"({carrier.u0:.4g}, {carrier.v0:.4g}) rad/px; the stack does not carry a spatial "
            f"carrier steeper than the wavefront slope"
        )

    filtered = lowpass(shifted, mask)
    modulus = np.abs(filtered.values)
    valid = modulus > modulus_floor * modulus.max()
    valid.setflags(write=False)
    phase = PhaseMap(np.where(valid, np.angle(filtered.values), 0.0)).wrap()

    diagnostics = SpatialDiagnostics(
        carrier=carrier,
        carrier_source=source,
        cutoff=mask.cutoff,
        border_crop=mask.border_crop,
        passband_energy=passband,
        rejected_energy=1.0 - passband,
        valid=valid,
    )
    logger.info(
        f"Spatial demodulation: carrier ({carrier.u0:.4g}, {carrier.v0:.4g}) rad/px [{source}], "
        f"cutoff {mask.cutoff:.4g}, passband energy {passband:.4f}"
    )
    return SpatialResult(phase, filtered, shifted, diagnostics)
