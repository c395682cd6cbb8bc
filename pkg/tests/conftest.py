import csv
import math

import numpy as np
import pytest

from src.psi.field_model import (
    CarrierSpec,
    InterferogramStack,
    StackMetadata,
    generate_stack,
    make_error_schedule,
    synthesize_wavefront,
)
from src.psi.psa_engine import sh5_spec

QUARTER_PI = math.pi / 4


@pytest.fixture
def sh5():
    return sh5_spec()


@pytest.fixture
def defocus():
    return synthesize_wavefront("defocus", 3.0, 64, 64)


@pytest.fixture
def ripple():
    # Exactly periodic on the grid, so the ideal low-pass has no boundary to ring at
    return synthesize_wavefront("ripple", 2.0, 128, 128, cycles=(1, 1))


@pytest.fixture
def make_stack():
    def _make(phase, errors=None, carrier=None, noise_sigma=0.0, seed=0, background=128.0, contrast=100.0):
        if errors is not None and not hasattr(errors, "deviations"):
            errors = make_error_schedule("explicit", len(errors), values=errors)
        return generate_stack(phase, background, contrast, math.pi / 2, 5, errors, carrier, noise_sigma, seed)
    return _make


@pytest.fixture
def quarter_pi_carrier():
    return CarrierSpec(QUARTER_PI)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    # Header and rows of a CSV written by write_csv, skipping its "# " comment lines
    with open(path, newline="") as f:
        rows = list(csv.reader(line for line in f if not line.startswith("#")))
    return rows[0], rows[1:]


def raw_stack(frames: np.ndarray, step: float = math.pi / 2, **meta) -> InterferogramStack:
    """Wrap hand-built frames with a minimal sidecar."""
    n, h, w = frames.shape
    return InterferogramStack(frames, StackMetadata(width=w, height=h, frames=n, step=step, **meta))
