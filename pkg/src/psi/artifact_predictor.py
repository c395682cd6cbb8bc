"""Conjugate-artifact model for nonlinear phase steps.

With background rejection, a PSA applied to steps n*w0 + eps_n returns
A1 exp(i phi) + A2 exp(-i phi) where

    A1 = (b/2) sum_n c_n exp(i eps_n)
    A2 = (b/2) sum_n c_n exp(-i (2 n w0 + eps_n))

The A2 term is the spurious conjugate; it shows up as a double-frequency
ripple in the demodulated phase.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from src.errors import DegeneracyError, PreconditionError
from src.psi.field_model import ComplexField, ErrorSchedule, PhaseMap, wrap_phase
from src.psi.psa_engine import PsaSpec

logger = logging.getLogger(__name__)

# Condition number of the two-basis normal equations above which a fit is refused
MAX_LEAK_CONDITION = 100.0


@dataclass(frozen=True)
class ConjugatePair:
    a1: complex
    a2: complex
    contrast: float

    @property
    def well_posed(self) -> bool:
        return abs(self.a1) > 0

    @property
    def leak_ratio(self) -> float:
        if not self.well_posed:
            return math.inf
        return abs(self.a2) / abs(self.a1)

    @property
    def relative_phase(self) -> float:
        if not self.well_posed or self.a2 == 0:
            return 0.0
        return float(np.angle(self.a2 / self.a1))

    @property
    def piston(self) -> float:
        """arg A1, the global offset carried by every demodulated phase."""
        return float(np.angle(self.a1))


@dataclass(frozen=True)
class LeakEstimate:
    alpha: complex
    beta: complex
    condition: float

    @property
    def leak_ratio(self) -> float:
        return abs(self.beta) / abs(self.alpha)

    @property
    def relative_phase(self) -> float:
        return float(np.angle(self.beta / self.alpha))


def conjugate_amplitudes(spec: PsaSpec, errors: ErrorSchedule, contrast: float) -> ConjugatePair:
    if len(errors) != spec.count:
        raise PreconditionError(
            f"Error schedule has {len(errors)} deviations but the PSA has {spec.count} steps"
        )
    if contrast <= 0:
        raise PreconditionError(f"Contrast b must be positive, got {contrast}")

    n = np.arange(spec.count)
    eps = errors.deviations
    c = spec.coefficients
    a1 = complex(contrast / 2 * np.sum(c * np.exp(1j * eps)))
    a2 = complex(contrast / 2 * np.sum(c * np.exp(-1j * (2 * n * spec.step + eps))))
    pair = ConjugatePair(a1, a2, contrast)
    if not pair.well_posed:
        logger.warning("Signal amplitude A1 vanishes for this PSA and schedule; no phase can be recovered")
    return pair


def predicted_error_map(truth: PhaseMap, pair: ConjugatePair) -> PhaseMap:
    # phi - arg[A1 exp(i phi) + A2 exp(-i phi)], wrapped to [-pi, pi).
    if not pair.well_posed:
        raise DegeneracyError("A1 = 0: the demodulated signal carries no phase information")
    if pair.leak_ratio >= 1:
        raise PreconditionError(
            f"Leak ratio |A2|/|A1| = {pair.leak_ratio:.6g} >= 1: the conjugate dominates and "
            f"the demodulated phase follows -phi"
        )
    phi = truth.values
    demodulated = pair.a1 * np.exp(1j * phi) + pair.a2 * np.exp(-1j * phi)
    return PhaseMap(wrap_phase(phi - np.angle(demodulated)), wrapped=True)


def predicted_artifact_pv(pair: ConjugatePair) -> float:
    if pair.leak_ratio >= 1:
        raise PreconditionError(f"Leak ratio {pair.leak_ratio:.6g} >= 1 has no bounded ripple")
    return 2 * math.asin(pair.leak_ratio) / (2 * math.pi)


def measure_leak(
    field: ComplexField,
    truth: PhaseMap,
    max_condition: float = MAX_LEAK_CONDITION,
) -> LeakEstimate:
    """Least-squares fit of field to alpha exp(i phi) + beta exp(-i phi) over all pixels."""
    if field.shape != truth.shape:
        raise PreconditionError(f"Field {field.shape} and truth {truth.shape} differ in size")

    phi = truth.values.ravel()
    basis = np.column_stack([np.exp(1j * phi), np.exp(-1j * phi)])
    # Normalized Gram matrix [[1, m], [conj(m), 1]] with m = mean(exp(-2 i phi))
    m = abs(np.mean(np.exp(-2j * phi)))
    condition = math.inf if m >= 1 else (1 + m) / (1 - m)
    if condition > max_condition:
        raise DegeneracyError(
            f"exp(i phi) and exp(-i phi) are nearly collinear (condition {condition:.3g} > "
            f"{max_condition:.3g}); the truth spans too little of a fringe to separate the conjugate"
        )
    (alpha, beta), *_ = linalg.lstsq(basis, field.values.ravel())
    if alpha == 0:
        raise DegeneracyError("Fitted signal amplitude is zero")
    return LeakEstimate(complex(alpha), complex(beta), condition)
