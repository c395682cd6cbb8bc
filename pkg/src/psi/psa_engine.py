"""N-step phase-shifting algorithms: taps, frequency transfer functions, temporal demodulation.

Demodulation convention: S = sum_n c_n exp(-i n w0) I(n), and the FTF is
H(w) = sum_n c_n exp(-i n (w0 + w)), so w measures detuning from the passband
at w = -w0. Under this convention the Schwider-Hariharan taps are
{1, -2i, -2, 2i, 1}; the published taps are their complex conjugates and
demodulate the opposite phase sign.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from src.errors import DegeneracyError, PreconditionError
from src.psi.field_model import ComplexField, InterferogramStack

logger = logging.getLogger(__name__)

BACKGROUND_TOLERANCE = 1e-12
# Pixels with |S| below this fraction of max|S| are flagged invalid
MODULUS_FLOOR = 1e-9


@dataclass(frozen=True)
class PsaSpec:
    """Base coefficients c_n plus the nominal step w0 of a temporal quadrature filter."""

    coefficients: np.ndarray
    step: float

    def __post_init__(self):
        c = np.array(self.coefficients, copy=True)
        if c.ndim != 1 or len(c) < 3:
            raise PreconditionError(f"A PSA needs at least 3 coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise PreconditionError("PSA coefficients must be finite")
        if not np.any(c != 0):
            raise PreconditionError("PSA coefficients are all zero")
        if not math.isfinite(self.step):
            raise PreconditionError("PSA nominal step must be finite")
        # Real storage whenever the expansion left no imaginary part
        if np.iscomplexobj(c) and np.all(np.abs(c.imag) <= BACKGROUND_TOLERANCE * np.abs(c).max()):
            c = c.real
        c = c.astype(complex if np.iscomplexobj(c) else float)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def count(self) -> int:
        return len(self.coefficients)

    @property
    def taps(self) -> np.ndarray:
        """Combined complex taps h_n = c_n exp(-i n w0)."""
        return combined_taps(self)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coefficients)


@dataclass(frozen=True)
class FtfSample:
    omega: float
    value: complex


@dataclass(frozen=True)
class TemporalResult:
    field: ComplexField
    valid: np.ndarray

    @property
    def phase(self) -> np.ndarray:
        return np.where(self.valid, np.angle(self.field.values), 0.0)


def combined_taps(spec: PsaSpec) -> np.ndarray:
    n = np.arange(spec.count)
    return spec.coefficients * np.exp(-1j * n * spec.step)


def sh5_spec() -> PsaSpec:
    # The 5-step Schwider-Hariharan algorithm, w0 = pi/2.
    return PsaSpec(np.array([1.0, 2.0, 2.0, 2.0, 1.0]), math.pi / 2)


def ftf_eval(spec: PsaSpec, omega) -> complex | np.ndarray:
    """H(w) = sum_n h_n exp(-i w n); accepts a scalar or an array of w."""
    w = np.asarray(omega, dtype=float)
    n = np.arange(spec.count)
    value = np.exp(-1j * np.multiply.outer(w, n)) @ spec.taps
    return complex(value) if value.ndim == 0 else value


def background_response(spec: PsaSpec) -> float:
    return float(abs(np.sum(spec.taps)))


def is_background_rejecting(spec: PsaSpec, tolerance: float = BACKGROUND_TOLERANCE) -> bool:
    return background_response(spec) < tolerance * max(1.0, float(np.abs(spec.coefficients).sum()))


def ftf_sweep(spec: PsaSpec, samples: int = 1024) -> list[FtfSample]:
    if samples < 2:
        raise PreconditionError(f"FTF sweep needs at least 2 samples, got {samples}")
    omegas = -math.pi + 2 * math.pi * np.arange(samples) / samples
    values = ftf_eval(spec, omegas)
    return [FtfSample(float(w), complex(v)) for w, v in zip(omegas, values)]


def detuning_sensitivity(spec: PsaSpec, delta: float) -> float:
    # |H(w0 + d)| / |H(-w0)|: conjugate leakage for a uniform step error d.
    passband = abs(ftf_eval(spec, -spec.step))
    if passband == 0:
        raise DegeneracyError("PSA has no response at its passband -w0")
    return abs(ftf_eval(spec, spec.step + delta)) / passband


def taps_from_zeros(zeros: Sequence[float], step: float) -> PsaSpec:
    """Design a PSA whose FTF vanishes at each requested frequency.

    Zeros are listed with multiplicity. The combined taps are the coefficients,
    in ascending powers of z = exp(-i w), of prod_k (1 - exp(i z_k) z); the
    base coefficients follow as c_n = h_n exp(i n w0). Coefficients are left
    unnormalized since phase extraction is scale-invariant.
    """
    zeros = [float(z) for z in zeros]
    if not zeros:
        raise PreconditionError("At least one FTF zero is required")
    if not all(math.isfinite(z) for z in zeros):
        raise PreconditionError("FTF zeros must be finite")
    for z in zeros:
        if abs(np.angle(np.exp(1j * (z + step)))) < 1e-9:
            raise PreconditionError(
                f"Zero at {z / math.pi:.6g} pi coincides with the passband -w0; the PSA would "
                f"have no response to the signal"
            )
    roots = np.exp(-1j * np.asarray(zeros))
    # polyfromroots gives prod (z - r_k); rescale so the constant term is 1
    h = P.polyfromroots(roots)
    h = h / h[0]
    n = np.arange(len(h))
    coefficients = h * np.exp(1j * n * step)
    if len(coefficients) < 3:
        # Pad with a zero tap so a single-zero design is still a valid N >= 3 PSA
        coefficients = np.concatenate([coefficients, np.zeros(3 - len(coefficients))])
    spec = PsaSpec(coefficients, step)
    logger.debug(f"Designed {spec.count}-step PSA from zeros {zeros}: c = {spec.coefficients}")
    return spec


def demodulate_temporal(
    stack: InterferogramStack,
    spec: PsaSpec,
    modulus_floor: float = MODULUS_FLOOR,
) -> TemporalResult:
    # S(x, y) = sum_n c_n exp(-i n w0) I(x, y, n).
    if spec.count != stack.count:
        raise PreconditionError(
            f"PSA has {spec.count} coefficients but the stack has {stack.count} frames"
        )
    if not math.isclose(spec.step, stack.nominal_step, rel_tol=0, abs_tol=1e-12):
        raise PreconditionError(
            f"PSA step {spec.step:.12g} differs from the stack's nominal step {stack.nominal_step:.12g}"
        )

    signal = np.tensordot(spec.taps, stack.frames, axes=(0, 0))
    modulus = np.abs(signal)
    peak = modulus.max()
    valid = modulus > modulus_floor * peak if peak > 0 else np.zeros(modulus.shape, dtype=bool)
    flagged = int(valid.size - valid.sum())
    if flagged:
        logger.warning(f"{flagged} pixels have near-zero modulation and were flagged invalid")
    valid.setflags(write=False)
    return TemporalResult(ComplexField(signal), valid)


def tangent_phase(stack: InterferogramStack, spec: PsaSpec) -> np.ndarray:
    # Phase from the arctangent formalism, atan2(-sum c sin(n w0) I, sum c cos(n w0) I).
    if not spec.is_real:
        raise PreconditionError("The arctangent formalism needs real PSA coefficients")
    n = np.arange(spec.count)
    num = np.tensordot(-spec.coefficients * np.sin(n * spec.step), stack.frames, axes=(0, 0))
    den = np.tensordot(spec.coefficients * np.cos(n * spec.step), stack.frames, axes=(0, 0))
    return np.arctan2(num, den)
