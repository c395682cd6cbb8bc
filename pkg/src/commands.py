"""Command bodies behind the CLI. Each takes a validated RunConfig and writes its outputs."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from src.config.schema import (
    CompareConfig,
    DemodConfig,
    FtfConfig,
    MaskConfig,
    MonteCarloConfig,
    PsaConfig,
    SimulateConfig,
    StackSourceConfig,
    WavefrontConfig,
)
from src.export.files import read_map, read_stack, write_csv, write_json, write_map, write_pgm, write_stack
from src.psi.artifact_predictor import (
    ConjugatePair,
    conjugate_amplitudes,
    predicted_artifact_pv,
    predicted_error_map,
)
from src.psi.carrier_demod import SpectralMask, demodulate_spatial, log_spectrum
from src.psi.field_model import (
    CarrierSpec,
    ErrorSchedule,
    InterferogramStack,
    PhaseMap,
    generate_stack,
    make_error_schedule,
    synthesize_wavefront,
)
from src.psi.metrics_report import (
    ErrorModel,
    montecarlo_repeatability,
    remove_piston_tilt,
    wrapped_diff,
)
from src.psi.psa_engine import (
    PsaSpec,
    background_response,
    demodulate_temporal,
    ftf_eval,
    ftf_sweep,
    is_background_rejecting,
    sh5_spec,
    taps_from_zeros,
)
from src.report.renderer import render_report

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRIAL_COLUMNS = ["trial", "status", "pv", "rms", "piston", "leak_ratio", "oracle_pv", "reason"]


def write_manifest(output: Path, command: str, config, **checks) -> Path:
    # Same shape as a --config file, so a manifest replays the run
    payload = {"command": command, "config": config.model_dump(mode="json")}
    if checks:
        payload["checks"] = checks
    return write_json(Path(output) / MANIFEST, payload)


def build_psa(cfg: PsaConfig) -> PsaSpec:
    if cfg.kind == "sh5":
        return sh5_spec()
    if cfg.kind == "custom":
        return PsaSpec(np.asarray(cfg.coefficients, dtype=float), cfg.step)
    return taps_from_zeros([z * math.pi for z in cfg.zeros_pi], cfg.step)


def build_wavefront(cfg: WavefrontConfig) -> PhaseMap:
    return synthesize_wavefront(cfg.kind, cfg.amplitude, cfg.width, cfg.height, cfg.coefficients, cfg.cycles)


def build_carrier(cfg) -> CarrierSpec | None:
    return None if cfg is None else CarrierSpec(cfg.u0, cfg.v0)


def build_mask(cfg: MaskConfig, carrier: CarrierSpec | None) -> SpectralMask | None:
    if carrier is None:
        return None
    return SpectralMask.for_carrier(carrier, cfg.cutoff, cfg.border_crop)


def synthesize(cfg: StackSourceConfig) -> tuple[PhaseMap, InterferogramStack]:
    truth = build_wavefront(cfg.wavefront)
    errors = make_error_schedule(
        cfg.errors.kind, cfg.frames, cfg.errors.magnitude, cfg.errors.seed, cfg.step, cfg.errors.values
    )
    stack = generate_stack(
        truth, cfg.background, cfg.contrast, cfg.step, cfg.frames, errors,
        build_carrier(cfg.carrier), cfg.noise_sigma, cfg.seed,
    )
    return truth, stack


def _coefficients(spec: PsaSpec, values: np.ndarray) -> list:
    # JSON has no complex type; complex designs are written as Python literals
    return [float(c) if spec.is_real else str(c) for c in values]


def _resolved_psa(spec: PsaSpec) -> dict:
    return {"coefficients": _coefficients(spec, spec.coefficients), "step": spec.step}


def _middle(row: int | None, height: int) -> int:
    return height // 2 if row is None else min(row, height - 1)


def _total_phase(truth: PhaseMap, stack: InterferogramStack) -> PhaseMap:
    carrier = stack.metadata.carrier_spec()
    if carrier is None:
        return truth
    return PhaseMap(truth.values + carrier.ramp(truth.width, truth.height))


def cmd_simulate(cfg: SimulateConfig) -> dict:
    """Synthesize a stack (and optionally a predicted conjugate error map)."""
    output = Path(cfg.output)
    truth, stack = synthesize(cfg)
    write_stack(output / "stack", stack)
    write_map(output / "truth", truth.values, "phase", wrapped=False)

    checks = {}
    carrier = build_carrier(cfg.carrier)
    if carrier is not None:
        checks = {
            "carrier_magnitude": carrier.magnitude,
            "max_slope_along_carrier": carrier.max_projected_slope(truth),
        }

    result = {"frames": stack.count, "shape": list(stack.shape), **checks}

    if cfg.previews:
        for n, frame in enumerate(stack.frames):
            write_pgm(output / "preview" / f"frame_{n:03d}.pgm", frame,
                      cfg.background - cfg.contrast, cfg.background + cfg.contrast)

    if cfg.artifact is not None:
        a = cfg.artifact
        pair = ConjugatePair(complex(a.a1), complex(a.a2 * np.exp(1j * a.a2_phase)), 1.0)
        phase = _total_phase(truth, stack)
        error = predicted_error_map(phase, pair)
        write_map(output / "artifact_error", error.values, "phase-error", wrapped=True,
                  a1=a.a1, a2=a.a2, a2_phase=a.a2_phase)
        row = _middle(cfg.line_row, error.height)
        write_csv(output / "artifact_linecut.csv", ["column", "phase", "error"],
                  [(x, float(phase.values[row, x]), float(error.values[row, x])) for x in range(error.width)],
                  comments=[f"row={row}"])
        if cfg.previews:
            write_pgm(output / "preview" / "interferogram.pgm", np.cos(phase.values), -1.0, 1.0)
            write_pgm(output / "preview" / "artifact_error.pgm", error.values)
        result["artifact"] = {
            "leak_ratio": pair.leak_ratio,
            "max_abs_error": float(np.abs(error.values).max()),
            "arcsin_bound": math.asin(pair.leak_ratio),
        }

    write_manifest(output, "simulate", cfg, **checks)
    logger.info(f"Simulated {stack.count} frames of {stack.shape[1]}x{stack.shape[0]} into {output}")
    return result


def _error_report(phase: PhaseMap, reference: PhaseMap, crop: int, tilt: bool, stem: Path) -> dict:
    residual, report = remove_piston_tilt(wrapped_diff(phase, reference), crop, tilt)
    write_map(stem, residual.values, "phase-error", wrapped=True, crop=crop)
    return report.as_dict()


def cmd_demod(cfg: DemodConfig) -> dict:
    """Demodulate a stack temporally or with the spatial carrier."""
    output = Path(cfg.output)
    truth = None
    if cfg.source is not None:
        truth, stack = synthesize(cfg.source)
    else:
        stack = read_stack(Path(cfg.input))
        if cfg.truth:
            values, _ = read_map(Path(cfg.truth))
            truth = PhaseMap(values.astype(float))
    spec = build_psa(cfg.psa)
    row = _middle(cfg.line_row, stack.shape[0])
    result: dict = {"method": cfg.method}
    resolved: dict = {"psa": _resolved_psa(spec), "line_row": row}

    temporal = demodulate_temporal(stack, spec, cfg.modulus_floor)
    write_map(output / "spectrum_temporal", log_spectrum(temporal.field), "log-spectrum")
    if cfg.previews:
        write_pgm(output / "preview" / "spectrum_temporal.pgm", log_spectrum(temporal.field))

    if cfg.method == "temporal":
        phase = PhaseMap(temporal.phase).wrap()
        write_map(output / "phase", phase.values, "phase", wrapped=True)
        write_map(output / "field", temporal.field.values, "complex-field")
        write_csv(output / "linecut.csv", ["column", "phase"],
                  [(x, float(phase.values[row, x])) for x in range(phase.width)], comments=[f"row={row}"])
        result["invalid_pixels"] = int(temporal.valid.size - temporal.valid.sum())
        meta = stack.metadata
        if meta.errors is not None and meta.contrast and len(meta.errors) == spec.count:
            pair = conjugate_amplitudes(spec, ErrorSchedule(np.asarray(meta.errors)), meta.contrast)
            result["predicted"] = {
                "leak_ratio": pair.leak_ratio,
                "pv_waves": predicted_artifact_pv(pair) if pair.leak_ratio < 1 else None,
            }
        if truth is not None:
            result["error"] = _error_report(phase, _total_phase(truth, stack), 0, cfg.tilt, output / "error")
    else:
        if isinstance(cfg.carrier, str):
            carrier = None if cfg.carrier == "metadata" else "auto"
        else:
            carrier = build_carrier(cfg.carrier)
        spatial = demodulate_spatial(
            stack, spec, carrier,
            cutoff=cfg.mask.cutoff,
            border_crop=cfg.mask.border_crop,
            min_lobe_fraction=cfg.min_lobe_fraction,
            modulus_floor=cfg.modulus_floor,
            exclusion_radius=cfg.carrier_exclusion_bins,
            ambiguity_ratio=cfg.carrier_ambiguity_ratio,
        )
        unfiltered = PhaseMap(np.angle(spatial.unfiltered.values)).wrap()
        write_map(output / "phase", spatial.phase.values, "phase", wrapped=True)
        write_map(output / "phase_unfiltered", unfiltered.values, "phase", wrapped=True)
        write_map(output / "field", spatial.filtered.values, "complex-field")
        write_map(output / "spectrum_shifted", log_spectrum(spatial.unfiltered), "log-spectrum")
        write_csv(output / "linecut.csv", ["column", "filtered", "unfiltered"],
                  [(x, float(spatial.phase.values[row, x]), float(unfiltered.values[row, x]))
                   for x in range(spatial.phase.width)],
                  comments=[f"row={row}"])
        diagnostics = spatial.diagnostics.as_dict()
        write_json(output / "diagnostics.json", diagnostics)
        result["diagnostics"] = diagnostics
        resolved.update(
            carrier=diagnostics["carrier"],
            carrier_source=diagnostics["carrier_source"],
            mask={"cutoff": diagnostics["cutoff"], "border_crop": diagnostics["border_crop"]},
        )
        if cfg.previews:
            write_pgm(output / "preview" / "spectrum_shifted.pgm", log_spectrum(spatial.unfiltered))
            write_pgm(output / "preview" / "phase.pgm", spatial.phase.values, -math.pi, math.pi)
        if truth is not None:
            crop = spatial.diagnostics.border_crop
            result["error"] = _error_report(spatial.phase, truth, crop, cfg.tilt, output / "error")
            result["error_unfiltered"] = _error_report(unfiltered, truth, crop, cfg.tilt,
                                                       output / "error_unfiltered")

    write_json(output / "report.json", result)
    write_manifest(output, "demod", cfg, resolved=resolved)
    return result


def _expected_zeros(cfg: PsaConfig, spec: PsaSpec) -> list[float]:
    if cfg.kind == "zeros":
        return [z * math.pi for z in cfg.zeros_pi]
    if cfg.kind == "sh5":
        return [0.0, spec.step, 2 * spec.step]
    return []


def cmd_ftf(cfg: FtfConfig) -> dict:
    """Sweep a PSA frequency transfer function and check its zeros."""
    output = Path(cfg.output)
    spec = build_psa(cfg.psa)
    sweep = ftf_sweep(spec, cfg.samples)

    zeros = []
    for z in _expected_zeros(cfg.psa, spec):
        magnitude = abs(ftf_eval(spec, z))
        zeros.append({"omega_pi": z / math.pi, "abs_h": magnitude, "ok": magnitude < cfg.tolerance})
    rejecting = is_background_rejecting(spec, cfg.tolerance)
    coefficients = spec.coefficients / spec.coefficients[np.flatnonzero(spec.coefficients)[0]]
    summary = {
        "coefficients": _coefficients(spec, spec.coefficients),
        "normalized_coefficients": _coefficients(spec, coefficients),
        "step": spec.step,
        "passband_abs_h": abs(ftf_eval(spec, -spec.step)),
        "background_response": background_response(spec),
        "background_rejecting": rejecting,
        "zeros": zeros,
    }

    comments = [f"step={spec.step!r}", f"coefficients={summary['coefficients']}",
                f"background_rejecting={rejecting}"]
    comments += [f"zero omega/pi={z['omega_pi']!r} |H|={z['abs_h']:.3e} ok={z['ok']}" for z in zeros]
    write_csv(output / "ftf.csv", ["omega_over_pi", "re_h", "im_h", "abs_h"],
              [(s.omega / math.pi, s.value.real, s.value.imag, abs(s.value)) for s in sweep], comments)
    write_json(output / "ftf_summary.json", summary)
    write_manifest(output, "ftf", cfg, resolved={"psa": _resolved_psa(spec)})
    if not rejecting:
        logger.warning(f"PSA does not reject the background: |sum c_n e^(-i n w0)| = {summary['background_response']:.3e}")
    return summary


def cmd_compare(cfg: CompareConfig) -> dict:
    """Difference two phase maps after piston and tilt removal."""
    output = Path(cfg.output)
    first, _ = read_map(Path(cfg.first))
    second, _ = read_map(Path(cfg.second))
    diff = wrapped_diff(PhaseMap(first.astype(float)), PhaseMap(second.astype(float)))
    residual, report = remove_piston_tilt(diff, cfg.crop, cfg.tilt)

    write_map(output / "difference", residual.values, "phase-difference", wrapped=True, crop=cfg.crop)
    write_pgm(output / f"difference_x{cfg.display_gain:g}.pgm", cfg.display_gain * residual.values,
              -math.pi, math.pi)
    summary = report.as_dict()
    summary["pv_radians"] = report.pv * 2 * math.pi
    write_json(output / "report.json", summary)
    render_report(output / "report.html", "Phase difference", summary)
    write_manifest(output, "compare", cfg)
    return summary


def cmd_montecarlo(cfg: MonteCarloConfig) -> dict:
    """Monte-Carlo repeatability under random phase-step errors."""
    output = Path(cfg.output)
    truth = build_wavefront(cfg.wavefront)
    spec = build_psa(cfg.psa)
    carrier = build_carrier(cfg.carrier)
    mask = build_mask(cfg.mask, carrier)
    model = ErrorModel(cfg.errors.kind, cfg.errors.magnitude,
                       None if cfg.errors.values is None else tuple(cfg.errors.values))
    methods = ["temporal", "spatial"] if cfg.method == "both" else [cfg.method]
    if cfg.method == "both" and carrier is None:
        logger.warning("No spatial carrier configured; running the temporal trials only")
        methods = ["temporal"]

    result = {}
    for method in methods:
        summary = montecarlo_repeatability(
            truth, spec, carrier, model, cfg.trials, cfg.seed, method,
            cfg.background, cfg.contrast, cfg.noise_sigma, mask, cfg.tilt, cfg.workers,
        )
        data = summary.as_dict()
        rows = data.pop("rows")
        write_csv(output / f"trials_{method}.csv", TRIAL_COLUMNS,
                  [[r[c] for c in TRIAL_COLUMNS] for r in rows])
        render_report(output / f"report_{method}.html", f"Monte-Carlo repeatability ({method})",
                      data, rows, TRIAL_COLUMNS)
        data["rows"] = rows
        result[method] = data

    write_json(output / "summary.json", result)
    resolved = {
        "psa": _resolved_psa(spec),
        "methods": methods,
        "mask": None if mask is None else {"cutoff": mask.cutoff, "border_crop": mask.border_crop},
    }
    write_manifest(output, "montecarlo", cfg, resolved=resolved)
    return result


COMMANDS = {
    "simulate": cmd_simulate,
    "demod": cmd_demod,
    "ftf": cmd_ftf,
    "compare": cmd_compare,
    "montecarlo": cmd_montecarlo,
}
