"""On-disk formats.

Maps and frames are raw little-endian float32, row-major, with a JSON sidecar of
the same stem. Complex fields interleave (re, im) per pixel. Stacks are a
directory of ``frame_NNN.f32`` (or 8/16-bit ``frame_NNN.pgm`` for imported
camera data) plus ``stack.json``.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image
from pydantic import ValidationError

from src.errors import StackFormatError
from src.psi.field_model import InterferogramStack, StackMetadata

logger = logging.getLogger(__name__)

RAW_DTYPE = "<f4"
STACK_SIDECAR = "stack.json"


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise StackFormatError(f"Cannot read JSON from {path}: {e}")


def write_map(stem: Path, values: np.ndarray, kind: str, **extra) -> Path:
    """Write a 2D real or complex array as float32 raw plus JSON sidecar."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values)
    if values.ndim != 2:
        raise StackFormatError(f"Only 2D maps can be exported, got shape {values.shape}")
    if np.iscomplexobj(values):
        raw = np.stack([values.real, values.imag], axis=-1)
        channels = 2
    else:
        raw = values
        channels = 1
    raw.astype(RAW_DTYPE).tofile(stem.with_suffix(".f32"))
    sidecar = {
        "kind": kind,
        "width": values.shape[1],
        "height": values.shape[0],
        "channels": channels,
        "dtype": RAW_DTYPE,
        **extra,
    }
    write_json(stem.with_suffix(".json"), sidecar)
    logger.debug(f"Wrote {kind} map {stem.with_suffix('.f32')}")
    return stem.with_suffix(".f32")


def read_map(stem: Path) -> tuple[np.ndarray, dict]:
    # Read a map written by write_map; complex maps come back as complex64.
    stem = Path(stem).with_suffix("")
    meta = read_json(stem.with_suffix(".json"))
    try:
        h, w, channels = meta["height"], meta["width"], meta.get("channels", 1)
    except KeyError as e:
        raise StackFormatError(f"Sidecar {stem.with_suffix('.json')} is missing {e}")
    raw = _read_raw(stem.with_suffix(".f32"), h * w * channels)
    if channels == 2:
        raw = raw.reshape(h, w, 2)
        return (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64), meta
    return raw.reshape(h, w), meta


def _read_raw(path: Path, count: int) -> np.ndarray:
    try:
        raw = np.fromfile(path, dtype=RAW_DTYPE)
    except OSError as e:
        raise StackFormatError(f"Cannot read {path}: {e}")
    if raw.size != count:
        raise StackFormatError(f"{path} holds {raw.size} values, sidecar expects {count}")
    return raw


def write_stack(directory: Path, stack: InterferogramStack) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for n, frame in enumerate(stack.frames):
        frame.astype(RAW_DTYPE).tofile(directory / f"frame_{n:03d}.f32")
    write_json(directory / STACK_SIDECAR, stack.metadata.model_dump(mode="json"))
    logger.info(f"Wrote {stack.count} frames to {directory}")
    return directory


def read_stack(directory: Path) -> InterferogramStack:
    """Load raw float32 frames, or 8/16-bit PGM frames for imported camera data."""
    directory = Path(directory)
    sidecar = read_json(directory / STACK_SIDECAR)
    if not isinstance(sidecar, dict):
        raise StackFormatError(f"Stack sidecar in {directory} must be a JSON object")
    # Our own sidecars always name their source; anything else came from a camera
    sidecar.setdefault("source", "imported")
    try:
        meta = StackMetadata.model_validate(sidecar)
    except ValidationError as e:
        raise StackFormatError(f"Invalid stack sidecar in {directory}: {e}")

    frames = []
    for n in range(meta.frames):
        raw_path = directory / f"frame_{n:03d}.f32"
        pgm_path = directory / f"frame_{n:03d}.pgm"
        if raw_path.exists():
            frames.append(_read_raw(raw_path, meta.width * meta.height).reshape(meta.height, meta.width))
        elif pgm_path.exists():
            frames.append(read_pgm(pgm_path))
        else:
            raise StackFormatError(f"Frame {n} missing from {directory}")
    return InterferogramStack(np.asarray(frames, dtype=float), meta)


def read_pgm(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img).astype(float)
    except OSError as e:
        raise StackFormatError(f"Cannot read PGM {path}: {e}")


def write_pgm(path: Path, values: np.ndarray, low: float | None = None, high: float | None = None) -> Path:
    # Render a real map to 8-bit grayscale, mapping [low, high] onto [0, 255].
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=float)
    low = values.min() if low is None else low
    high = values.max() if high is None else high
    scale = 255.0 / (high - low) if high > low else 0.0
    pixels = np.clip(np.rint((values - low) * scale), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for line in comments:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path

