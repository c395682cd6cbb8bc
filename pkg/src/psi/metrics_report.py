"""Phase-map comparison in waves and Monte-Carlo repeatability studies."""
from __future__ import annotations

import concurrent.futures
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg

from src.errors import NpsiError, PreconditionError
from src.psi.artifact_predictor import conjugate_amplitudes, predicted_error_map
from src.psi.carrier_demod import SpectralMask, demodulate_spatial
from src.psi.field_model import (
    CarrierSpec,
    ErrorSchedule,
    PhaseMap,
    ScheduleKind,
    generate_stack,
    make_error_schedule,
    pixel_grid,
    wrap_phase,
)
from src.psi.psa_engine import PsaSpec, demodulate_temporal

logger = logging.getLogger(__name__)

WAVE = 2 * math.pi
PERCENTILES = (50, 90, 95, 99)


@dataclass(frozen=True)
class PhaseDiffReport:
    pv: float
    rms: float
    piston_removed: float
    tilt_removed: tuple[float, float]
    crop: int

    def as_dict(self) -> dict:
        return asdict(self)


def interior(values: np.ndarray, crop: int) -> np.ndarray:
    if crop < 0:
        raise PreconditionError(f"Crop must be non-negative, got {crop}")
    h, w = values.shape
    if min(h, w) - 2 * crop < 2:
        raise PreconditionError(f"Crop of {crop} px leaves less than 2x2 pixels of a {h}x{w} map")
    return values[crop:h - crop, crop:w - crop] if crop else values


def wrapped_diff(p1: PhaseMap, p2: PhaseMap) -> PhaseMap:
    if p1.shape != p2.shape:
        raise PreconditionError(f"Cannot difference maps of shape {p1.shape} and {p2.shape}")
    return PhaseMap(wrap_phase(p1.values - p2.values), wrapped=True)


def pv_rms(phase: PhaseMap, crop: int = 0) -> tuple[float, float]:
    # Peak-to-valley and RMS over the cropped interior, in waves.
    region = interior(phase.values, crop)
    return float(region.max() - region.min()) / WAVE, float(region.std()) / WAVE


def remove_piston_tilt(diff: PhaseMap, crop: int = 0, tilt: bool = True) -> tuple[PhaseMap, PhaseDiffReport]:
    """Subtract the circular-mean piston and, optionally, a least-squares plane.

    The piston and plane are estimated on the cropped interior only; the
    returned residual covers the whole map.
    """
    region = interior(diff.values, crop)
    piston = float(np.angle(np.mean(np.exp(1j * region))))
    residual = wrap_phase(region - piston)

    jumps = max(np.abs(np.diff(residual, axis=0)).max(), np.abs(np.diff(residual, axis=1)).max())
    if jumps > math.pi:
        raise PreconditionError(
            f"Difference map still wraps after piston removal (jump of {jumps:.3g} rad); "
            f"align the inputs better before comparing"
        )

    x, y = pixel_grid(diff.width, diff.height)
    alpha = beta = 0.0
    if tilt:
        xs, ys = interior(x, crop), interior(y, crop)
        design = np.column_stack([xs.ravel(), ys.ravel(), np.ones(xs.size)])
        (alpha, beta, offset), *_ = linalg.lstsq(design, residual.ravel())
        piston += offset

    piston = float(wrap_phase(piston))
    full = wrap_phase(diff.values - piston - alpha * x - beta * y)
    out = PhaseMap(full, wrapped=True)
    pv, rms = pv_rms(out, crop)
    return out, PhaseDiffReport(pv, rms, piston, (float(alpha), float(beta)), crop)


@dataclass(frozen=True)
class ErrorModel:
    kind: ScheduleKind = "uniform"
    magnitude: float = 0.0
    values: tuple[float, ...] | None = None

    def draw(self, frames: int, step: float, seed) -> ErrorSchedule:
        return make_error_schedule(self.kind, frames, self.magnitude, seed, step, self.values)


@dataclass(frozen=True)
class MonteCarloSummary:
    method: str
    trials: int
    seed: int
    rows: list[dict] = field(repr=False)

    @property
    def succeeded(self) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok"]

    @property
    def failures(self) -> int:
        return len(self.rows) - len(self.succeeded)

    def pv_values(self) -> np.ndarray:
        return np.array([r["pv"] for r in self.succeeded])

    def percentiles(self, key: str = "pv") -> dict[str, float]:
        values = np.array([r[key] for r in self.succeeded if r.get(key) is not None])
        if values.size == 0:
            return {}
        return {f"p{p}": float(np.percentile(values, p)) for p in PERCENTILES}

    def as_dict(self) -> dict:
        pv = self.pv_values()
        return {
            "method": self.method,
            "trials": self.trials,
            "seed": self.seed,
            "failures": self.failures,
            "pv_waves": {
                "mean": float(pv.mean()) if pv.size else None,
                "std": float(pv.std()) if pv.size else None,
                "max": float(pv.max()) if pv.size else None,
                **self.percentiles("pv"),
            },
            "oracle_pv_waves": self.percentiles("oracle_pv"),
            "rows": self.rows,
        }


def _run_trial(
    index: int,
    seeds: np.random.SeedSequence,
    truth: PhaseMap,
    spec: PsaSpec,
    carrier: CarrierSpec | None,
    model: ErrorModel,
    background: float,
    contrast: float,
    noise_sigma: float,
    method: str,
    mask: SpectralMask | None,
    tilt: bool,
) -> dict:
    error_seed, noise_seed = seeds.spawn(2)
    errors = model.draw(spec.count, spec.step, error_seed)
    stack = generate_stack(
        truth, background, contrast, spec.step, spec.count, errors, carrier,
        noise_sigma, int(noise_seed.generate_state(1)[0]),
    )
    pair = conjugate_amplitudes(spec, errors, contrast)

    if method == "spatial":
        result = demodulate_spatial(stack, spec, carrier, mask)
        crop = result.diagnostics.border_crop
        diff = wrapped_diff(result.phase, truth)
        oracle = None
    else:
        reference = truth
        if carrier is not None:
            reference = PhaseMap(truth.values + carrier.ramp(truth.width, truth.height))
        crop = 0
        diff = wrapped_diff(PhaseMap(demodulate_temporal(stack, spec).phase).wrap(), reference)
        _, oracle_report = remove_piston_tilt(predicted_error_map(reference, pair), crop, tilt)
        oracle = oracle_report.pv

    _, report = remove_piston_tilt(diff, crop, tilt)
    return {
        "trial": index,
        "status": "ok",
        "reason": None,
        "pv": report.pv,
        "rms": report.rms,
        "piston": report.piston_removed,
        "leak_ratio": pair.leak_ratio,
        "oracle_pv": oracle,
        "errors": [float(e) for e in errors.deviations],
    }


def montecarlo_repeatability(
    truth: PhaseMap,
    spec: PsaSpec,
    carrier: CarrierSpec | None,
    model: ErrorModel,
    trials: int,
    seed: int,
    method: Literal["temporal", "spatial"] = "temporal",
    background: float = 128.0,
    contrast: float = 100.0,
    noise_sigma: float = 0.0,
    mask: SpectralMask | None = None,
    tilt: bool = True,
    workers: int | None = None,
) -> MonteCarloSummary:
    """Repeat synthesis and demodulation under fresh error schedules.

    Trial seeds are spawned from the master seed, so the summary does not
    depend on how trials are scheduled across workers.
    """
    if trials < 2:
        raise PreconditionError(f"A repeatability study needs at least 2 trials, got {trials}")
    if method == "spatial" and carrier is None:
        raise PreconditionError("Temporal-spatial trials need a spatial carrier")
    if method not in ("temporal", "spatial"):
        raise PreconditionError(f"Unknown demodulation method '{method}'")

    children = np.random.SeedSequence(seed).spawn(trials)
    rows = []

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_trial = {
            executor.submit(
                _run_trial, i, child, truth, spec, carrier, model,
                background, contrast, noise_sigma, method, mask, tilt,
            ): i
            for i, child in enumerate(children)
        }
        for future in concurrent.futures.as_completed(future_to_trial):
            trial = future_to_trial[future]
            try:
                rows.append(future.result())
            except NpsiError as exc:
                logger.warning(f"Trial {trial} failed: {exc}")
                rows.append({
                    "trial": trial,
                    "status": "error",
                    "reason": str(exc),
                    "pv": None,
                    "rms": None,
                    "piston": None,
                    "leak_ratio": None,
                    "oracle_pv": None,
                    "errors": None,
                })

    rows.sort(key=lambda r: r["trial"])
    summary = MonteCarloSummary(method, trials, seed, rows)
    logger.info(
        f"{method} Monte-Carlo: {trials - summary.failures}/{trials} trials ok, "
        f"median P-V {summary.percentiles().get('p50', float('nan')):.5f} waves"
    )
    return summary

