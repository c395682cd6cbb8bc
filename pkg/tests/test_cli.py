import logging
import math

import numpy as np
import pytest

from src.errors import EXIT_DEGENERATE, EXIT_IO, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE
from src.export.files import read_json, read_map, write_map
from src.main import build_parser, main
from src.psi.field_model import pixel_grid

from tests.conftest import read_csv

QUARTER_PI = str(math.pi / 4)


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    monkeypatch.delenv("NPSI_CONFIG", raising=False)
    monkeypatch.setenv("NPSI_OUTPUT", str(tmp_path / "presets"))
    monkeypatch.chdir(tmp_path)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def snapshot(directory):
    return {p.relative_to(directory): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_flags_mirror_config_fields():
    parser = build_parser()
    args = parser.parse_args(["demod", "--source-wavefront-kind", "ripple", "--carrier", "auto", "--mask-cutoff", "0.4"])
    options = vars(args)
    assert options["source.wavefront.kind"] == "ripple"
    assert options["carrier"] == "auto"
    assert options["mask.cutoff"] == 0.4
    assert "input" not in options

    args = parser.parse_args(["simulate", "--errors-values", "[0, 0.1, -0.15, 0.2, -0.05]", "--previews", "false"])
    assert vars(args)["errors.values"] == [0, 0.1, -0.15, 0.2, -0.05]
    assert vars(args)["previews"] is False


def test_ftf_sh5(tmp_path):
    out = tmp_path / "ftf"
    assert main(["ftf", "--output", str(out)]) == EXIT_OK

    summary = read_json(out / "ftf_summary.json")
    assert summary["background_rejecting"] is True
    assert summary["passband_abs_h"] == pytest.approx(8.0)
    assert [z["omega_pi"] for z in summary["zeros"]] == pytest.approx([0.0, 0.5, 1.0])
    assert all(z["ok"] for z in summary["zeros"])

    header, rows = read_csv(out / "ftf.csv")
    assert header == ["omega_over_pi", "re_h", "im_h", "abs_h"]
    assert len(rows) == 1024
    assert float(rows[0][0]) == pytest.approx(-1.0)
    assert "background_rejecting=True" in (out / "ftf.csv").read_text()
    assert read_json(out / "manifest.json")["command"] == "ftf"


def test_ftf_designed_from_zeros(tmp_path):
    out = tmp_path / "zeros"
    code = main(["ftf", "--output", str(out), "--psa-kind", "zeros", "--psa-zeros-pi", "[0, 0.5, 0.5, 1]"])
    assert code == EXIT_OK
    summary = read_json(out / "ftf_summary.json")
    assert summary["coefficients"] == pytest.approx([1, 2, 2, 2, 1], abs=1e-12)
    assert all(z["ok"] for z in summary["zeros"])


def test_ftf_writes_complex_designs_as_literals(tmp_path):
    out = tmp_path / "complex"
    assert main(["ftf", "--output", str(out), "--psa-kind", "zeros", "--psa-zeros-pi", "[0, 0.5]"]) == EXIT_OK
    coefficients = read_json(out / "ftf_summary.json")["coefficients"]
    assert all(isinstance(c, str) for c in coefficients)
    assert [complex(c) for c in coefficients] == pytest.approx([1, 1 - 1j, -1j], abs=1e-12)
    resolved = read_json(out / "manifest.json")["checks"]["resolved"]
    assert resolved["psa"]["coefficients"] == coefficients


def test_ftf_flags_background_leak(tmp_path):
    out = tmp_path / "naive"
    assert main(["ftf", "--output", str(out), "--psa-kind", "custom", "--psa-coefficients", "[1, 1, 1]"]) == EXIT_OK
    assert read_json(out / "ftf_summary.json")["background_rejecting"] is False


def test_simulate_and_replay_manifest(tmp_path):
    out = tmp_path / "sim"
    args = ["simulate", "--output", str(out), "--wavefront-width", "32", "--wavefront-height", "32",
            "--carrier-u0", QUARTER_PI, "--errors-kind", "uniform", "--errors-magnitude", "0.3",
            "--noise-sigma", "1.0", "--seed", "4"]
    assert main(args) == EXIT_OK

    manifest = read_json(out / "manifest.json")
    assert manifest["config"]["carrier"] == {"u0": math.pi / 4, "v0": 0.0}
    assert manifest["config"]["contrast"] == 100.0
    assert manifest["checks"]["carrier_magnitude"] == pytest.approx(math.pi / 4)
    assert manifest["checks"]["max_slope_along_carrier"] < math.pi / 4
    assert (out / "stack" / "frame_004.f32").exists()
    assert (out / "preview" / "frame_000.pgm").exists()

    before = snapshot(out)
    assert main(["simulate", "--config", str(out / "manifest.json")]) == EXIT_OK
    assert snapshot(out) == before


def test_fig1_preset_writes_the_artifact_map(tmp_path):
    assert main(["simulate", "--preset", "fig1", "--previews", "false"]) == EXIT_OK
    error, meta = read_map(tmp_path / "presets" / "fig1" / "artifact_error")
    assert meta["a2"] == 0.1
    assert 0.09 < np.abs(error).max() <= math.asin(0.1) + 1e-6
    header, rows = read_csv(tmp_path / "presets" / "fig1" / "artifact_linecut.csv")
    assert header == ["column", "phase", "error"]
    assert len(rows) == 256


def test_demod_from_files_temporal_and_spatial(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--output", str(sim), "--wavefront-kind", "ripple", "--wavefront-amplitude", "2.0",
                 "--wavefront-width", "128", "--wavefront-height", "128",
                 "--carrier-u0", QUARTER_PI, "--errors-kind", "explicit",
                 "--errors-values", "[0, 0.1, -0.15, 0.2, -0.05]", "--previews", "false"]) == EXIT_OK

    reports = {}
    for method in ("temporal", "spatial"):
        out = tmp_path / method
        code = main(["demod", "--input", str(sim / "stack"), "--truth", str(sim / "truth"),
                     "--method", method, "--output", str(out), "--previews", "false"])
        assert code == EXIT_OK
        reports[method] = read_json(out / "report.json")
        assert (out / "phase.f32").exists()
        assert (out / "linecut.csv").exists()

    temporal, spatial = reports["temporal"], reports["spatial"]
    assert temporal["error"]["pv"] == pytest.approx(temporal["predicted"]["pv_waves"], rel=0.05)
    assert spatial["error"]["pv"] < 0.005
    assert spatial["error_unfiltered"]["pv"] > 0.02
    assert spatial["diagnostics"]["carrier_source"] == "metadata"
    assert spatial["diagnostics"]["border_crop"] == 16

    header, _ = read_csv(tmp_path / "spatial" / "linecut.csv")
    assert header == ["column", "filtered", "unfiltered"]
    assert read_json(tmp_path / "spatial" / "diagnostics.json") == spatial["diagnostics"]


def test_demod_manifest_records_resolved_defaults(tmp_path):
    out = tmp_path / "resolved"
    code = main(["demod", "--output", str(out), "--carrier", "auto", "--previews", "false",
                 "--source-wavefront-kind", "ripple", "--source-wavefront-amplitude", "2.0",
                 "--source-wavefront-width", "64", "--source-wavefront-height", "64",
                 "--source-carrier-u0", QUARTER_PI])
    assert code == EXIT_OK

    manifest = read_json(out / "manifest.json")
    assert manifest["config"]["mask"] == {"cutoff": None, "border_crop": None}
    assert manifest["config"]["carrier_exclusion_bins"] == 2.0
    assert manifest["config"]["carrier_ambiguity_ratio"] == 0.99

    resolved = manifest["checks"]["resolved"]
    assert resolved["mask"]["cutoff"] == pytest.approx(math.pi / 8, abs=1e-6)
    assert resolved["mask"]["border_crop"] == 16
    assert resolved["carrier_source"] == "auto"
    assert resolved["carrier"]["u0"] == pytest.approx(math.pi / 4, abs=1e-6)
    assert resolved["psa"] == {"coefficients": [1.0, 2.0, 2.0, 2.0, 1.0], "step": pytest.approx(math.pi / 2)}
    assert resolved["line_row"] == 32


def test_montecarlo_manifest_records_the_mask(tmp_path):
    out = tmp_path / "mc"
    assert main(["montecarlo", "--output", str(out), "--wavefront-width", "64", "--wavefront-height", "64",
                 "--carrier-u0", QUARTER_PI, "--method", "spatial", "--trials", "2"]) == EXIT_OK
    resolved = read_json(out / "manifest.json")["checks"]["resolved"]
    assert resolved["methods"] == ["spatial"]
    assert resolved["mask"] == {"cutoff": pytest.approx(math.pi / 8), "border_crop": 16}


def test_compare_reports_zero_for_plane_offsets(tmp_path):
    x, y = pixel_grid(32, 32)
    base = 0.5 * np.sin(x / 5.0) * np.cos(y / 7.0)
    write_map(tmp_path / "a", base, "phase")
    write_map(tmp_path / "b", base + 0.4 + 0.01 * x, "phase")

    out = tmp_path / "cmp"
    assert main(["compare", "--first", str(tmp_path / "a"), "--second", str(tmp_path / "b"),
                 "--output", str(out)]) == EXIT_OK
    report = read_json(out / "report.json")
    assert report["pv"] < 1e-6
    assert report["tilt_removed"][0] == pytest.approx(-0.01, abs=1e-6)
    assert (out / "difference_x10.pgm").exists()
    assert "Phase difference" in (out / "report.html").read_text()


def test_montecarlo_both_methods(tmp_path):
    out = tmp_path / "mc"
    code = main(["montecarlo", "--output", str(out), "--wavefront-width", "64", "--wavefront-height", "64",
                 "--carrier-u0", QUARTER_PI, "--trials", "3", "--seed", "8"])
    assert code == EXIT_OK
    summary = read_json(out / "summary.json")
    assert set(summary) == {"temporal", "spatial"}
    assert [r["errors"] for r in summary["temporal"]["rows"]] == [r["errors"] for r in summary["spatial"]["rows"]]
    _, rows = read_csv(out / "trials_spatial.csv")
    assert len(rows) == 3
    assert "Monte-Carlo repeatability (temporal)" in (out / "report_temporal.html").read_text()


def test_montecarlo_without_carrier_runs_temporal_only(tmp_path):
    out = tmp_path / "mc"
    assert main(["montecarlo", "--output", str(out), "--wavefront-width", "32", "--wavefront-height", "32",
                 "--trials", "2"]) == EXIT_OK
    assert set(read_json(out / "summary.json")) == {"temporal"}


def test_exit_codes(tmp_path):
    out = str(tmp_path / "out")
    assert main(["ftf", "--config", str(tmp_path / "missing.yaml")]) == EXIT_IO
    assert main(["simulate", "--output", out, "--contrast", "-1"]) == EXIT_PRECONDITION
    assert main(["demod", "--input", str(tmp_path / "nowhere"), "--output", out]) == EXIT_IO
    # Spatial demodulation of a stack synthesized without a carrier
    assert main(["demod", "--output", out, "--source-wavefront-width", "32",
                 "--source-wavefront-height", "32"]) == EXIT_PRECONDITION
    # A flat field has no spectral peak to lock onto
    assert main(["demod", "--output", out, "--carrier", "auto", "--source-wavefront-kind", "flat",
                 "--source-wavefront-width", "16", "--source-wavefront-height", "16"]) == EXIT_DEGENERATE
    with pytest.raises(SystemExit) as info:
        main(["calibrate"])
    assert info.value.code == EXIT_USAGE
