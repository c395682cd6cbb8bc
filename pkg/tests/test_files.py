import json
import math

import numpy as np
import pytest
from PIL import Image

from src.errors import StackFormatError
from src.export.files import (
    read_json,
    read_map,
    read_pgm,
    read_stack,
    write_csv,
    write_json,
    write_map,
    write_pgm,
    write_stack,
)
from src.psi.carrier_demod import demodulate_spatial
from src.psi.field_model import CarrierSpec, generate_stack, synthesize_wavefront

from tests.conftest import read_csv


def test_real_map_round_trip(tmp_path):
    values = (np.arange(12, dtype=np.float32).reshape(3, 4) / 7).astype(np.float32)
    path = write_map(tmp_path / "maps" / "phase", values, "phase", wrapped=True)
    assert path.suffix == ".f32"
    assert path.stat().st_size == 12 * 4

    loaded, meta = read_map(tmp_path / "maps" / "phase")
    assert np.array_equal(loaded, values)
    assert meta == {"kind": "phase", "width": 4, "height": 3, "channels": 1, "dtype": "<f4", "wrapped": True}


def test_complex_map_round_trip(tmp_path):
    values = (np.arange(6).reshape(2, 3) + 1j * np.arange(6).reshape(2, 3)[::-1] / 4).astype(np.complex64)
    write_map(tmp_path / "field", values, "complex-field")
    loaded, meta = read_map(tmp_path / "field.f32")
    assert meta["channels"] == 2
    assert loaded.dtype == np.complex64
    assert np.array_equal(loaded, values)


def test_map_errors(tmp_path):
    with pytest.raises(StackFormatError):
        write_map(tmp_path / "cube", np.zeros((2, 2, 2)), "phase")
    with pytest.raises(StackFormatError):
        read_map(tmp_path / "missing")

    write_map(tmp_path / "short", np.zeros((4, 4)), "phase")
    np.zeros(3, dtype="<f4").tofile(tmp_path / "short.f32")
    with pytest.raises(StackFormatError, match="sidecar expects 16"):
        read_map(tmp_path / "short")


def test_stack_round_trip(tmp_path):
    phase = synthesize_wavefront("defocus", 3.0, 16, 12)
    stack = generate_stack(phase, 128.0, 100.0, math.pi / 2, 5, noise_sigma=1.0, seed=9)
    write_stack(tmp_path / "stack", stack)

    loaded = read_stack(tmp_path / "stack")
    assert np.array_equal(loaded.frames, stack.frames.astype(np.float32).astype(float))
    assert loaded.metadata == stack.metadata
    assert sorted(p.name for p in (tmp_path / "stack").iterdir())[:2] == ["frame_000.f32", "frame_001.f32"]


def test_stack_from_camera_pgm_frames(tmp_path):
    directory = tmp_path / "camera"
    directory.mkdir()
    for n in range(5):
        pixels = np.full((6, 8), 40 * n, dtype=np.uint8)
        Image.fromarray(pixels).save(directory / f"frame_{n:03d}.pgm", format="PPM")
    write_json(directory / "stack.json",
               {"width": 8, "height": 6, "frames": 5, "step": math.pi / 2, "source": "imported"})

    stack = read_stack(directory)
    assert stack.metadata.source == "imported"
    assert stack.frames[3, 0, 0] == 120.0


def test_camera_sidecar_with_short_names_is_imported(tmp_path, sh5, defocus):
    directory = tmp_path / "camera"
    directory.mkdir()
    carrier = CarrierSpec(math.pi / 4)
    frames = generate_stack(defocus, 128.0, 100.0, math.pi / 2, 5, carrier=carrier).frames
    for n, frame in enumerate(frames):
        Image.fromarray(np.rint(frame).astype(np.uint8)).save(directory / f"frame_{n:03d}.pgm", format="PPM")
    write_json(directory / "stack.json",
               {"width": 64, "height": 64, "N": 5, "omega0": math.pi / 2, "a": None, "b": None})

    stack = read_stack(directory)
    assert stack.metadata.source == "imported"
    assert (stack.metadata.frames, stack.metadata.step) == (5, math.pi / 2)

    # No carrier in the sidecar, so it is found in the spectrum
    result = demodulate_spatial(stack, sh5)
    assert result.diagnostics.carrier_source == "auto"
    assert result.diagnostics.carrier.u0 == pytest.approx(math.pi / 4, abs=1e-2)


def test_stack_errors(tmp_path):
    with pytest.raises(StackFormatError):
        read_stack(tmp_path)

    write_json(tmp_path / "stack.json", {"width": 2, "height": 2, "frames": 3, "step": 1.0})
    with pytest.raises(StackFormatError, match="Frame 0 missing"):
        read_stack(tmp_path)

    write_json(tmp_path / "stack.json", {"width": 2, "height": 2})
    with pytest.raises(StackFormatError, match="Invalid stack sidecar"):
        read_stack(tmp_path)

    write_json(tmp_path / "stack.json", [2, 2, 3])
    with pytest.raises(StackFormatError, match="JSON object"):
        read_stack(tmp_path)


def test_pgm_scaling(tmp_path):
    values = np.array([[-math.pi, math.pi], [1.0, 10.0]])
    write_pgm(tmp_path / "map.pgm", values, -math.pi, math.pi)
    assert (tmp_path / "map.pgm").read_bytes().startswith(b"P5")
    assert read_pgm(tmp_path / "map.pgm").tolist() == [[0.0, 255.0], [168.0, 255.0]]

    write_pgm(tmp_path / "flat.pgm", np.ones((2, 2)))
    assert read_pgm(tmp_path / "flat.pgm").max() == 0.0


def test_csv_with_comments(tmp_path):
    write_csv(tmp_path / "cut.csv", ["column", "phase"], [(0, 0.5), (1, -0.25)], comments=["row=3"])
    text = (tmp_path / "cut.csv").read_text()
    assert text.startswith("# row=3\n")
    header, rows = read_csv(tmp_path / "cut.csv")
    assert header == ["column", "phase"]
    assert rows == [["0", "0.5"], ["1", "-0.25"]]


def test_json_is_stable(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1.5, None]})
    assert (tmp_path / "a.json").read_text() == json.dumps({"a": [1.5, None], "b": 1}, indent=2) + "\n"
    assert read_json(tmp_path / "a.json") == {"a": [1.5, None], "b": 1}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(StackFormatError):
        read_json(tmp_path / "bad.json")
