import json

import numpy as np
import pytest

from cavitybus import __version__
from cavitybus.dispersive import PumpProbeSignal
from cavitybus.errors import GridFormatError
from cavitybus.fitting import FitResult
from cavitybus.gridio import (
    grid_to_text,
    read_grid,
    write_fit_json,
    write_grid,
    write_signal,
    write_table,
)
from cavitybus.transmission import SpectrumGrid


def sample_grid():
    rng = np.random.default_rng(2)
    probe = np.linspace(2740.0, 2760.0, 11)
    sweep_values = np.array([20.0, 21.0, 22.0])
    amplitudes = rng.uniform(0.001, 1.0, size=(3, 11))
    return SpectrumGrid(probe, sweep_values, amplitudes, "angle")


def test_roundtrip_precision(tmp_path):
    grid = sample_grid()
    path = tmp_path / "grid.csv"
    write_grid(path, grid, config_hash="abc123", extra={"fixed_magnitude_mt": "7.5"})
    back, meta = read_grid(path)
    rel = np.abs(back.magnitudes - grid.magnitudes) / grid.magnitudes
    assert np.max(rel) < 1e-8
    np.testing.assert_allclose(back.probe_frequencies, grid.probe_frequencies, rtol=1e-8)
    np.testing.assert_allclose(back.sweep_values, grid.sweep_values, rtol=1e-8)
    assert back.sweep_kind == "angle"
    assert meta.version == __version__
    assert meta.config_hash == "abc123"
    assert meta.extra["fixed_magnitude_mt"] == "7.5"


def test_header_format(tmp_path):
    grid = sample_grid()
    text = grid_to_text(grid, "deadbeef")
    lines = text.splitlines()
    assert lines[0] == f"# cavitybus {__version__}"
    assert lines[1] == "# config_hash=deadbeef"
    assert lines[2] == "# sweep_kind=angle, rows=3, cols=11"
    assert len(lines) == 3 + 1 + 3


def test_empty_grid_roundtrip(tmp_path):
    grid = SpectrumGrid(np.array([]), np.array([]), np.zeros((0, 0)), "none")
    path = tmp_path / "empty.csv"
    write_grid(path, grid)
    back, meta = read_grid(path)
    assert back.amplitudes.shape == (0, 0)
    assert meta.config_hash == "none"


def test_ragged_row_reports_index(tmp_path):
    grid = sample_grid()
    path = tmp_path / "grid.csv"
    write_grid(path, grid)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GridFormatError, match="data row 1"):
        read_grid(path)


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "bogus.csv"
    path.write_text("# cavitybus 0.0.0\n1,2,3\n")
    with pytest.raises(GridFormatError, match="sweep_kind"):
        read_grid(path)


def test_nonnumeric_value_rejected(tmp_path):
    grid = sample_grid()
    path = tmp_path / "grid.csv"
    write_grid(path, grid)
    text = path.read_text().replace("21,", "oops,", 1)
    path.write_text(text)
    with pytest.raises(GridFormatError, match="non-numeric"):
        read_grid(path)


def test_wrong_row_count_rejected(tmp_path):
    grid = sample_grid()
    path = tmp_path / "grid.csv"
    write_grid(path, grid)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(GridFormatError, match="expected 3 data rows"):
        read_grid(path)


def test_signal_writer(tmp_path):
    signal = PumpProbeSignal(np.array([2700.0, 2701.0]), np.array([-0.5, -0.25]))
    path = tmp_path / "signal.csv"
    write_signal(path, signal, config_hash="cafe")
    lines = path.read_text().splitlines()
    assert lines[1] == "# config_hash=cafe"
    assert lines[2] == "# columns=pump_mhz,shift_mhz"
    assert lines[3] == "2700,-0.5"


def test_table_writer(tmp_path):
    path = tmp_path / "table.csv"
    write_table(path, {"angle": [0.0, 1.0], "value": [2.5, 3.5]})
    lines = path.read_text().splitlines()
    assert lines[2] == "# columns=angle,value"
    assert lines[3] == "0,2.5"
    with pytest.raises(ValueError):
        write_table(path, {"a": [0.0, 1.0], "b": [1.0]})


def test_fit_json(tmp_path):
    result = FitResult(
        parameters={"g": 7.5},
        standard_errors={"g": 0.01},
        residual_norm=0.1,
        iterations=9,
        converged=True,
        provenance={"seed": 3},
    )
    path = tmp_path / "fit.json"
    write_fit_json(path, result, config_hash="beef")
    payload = json.loads(path.read_text())
    assert payload["parameters"]["g"] == 7.5
    assert payload["standard_errors"]["g"] == 0.01
    assert payload["converged"] is True
    assert payload["meta"]["version"] == __version__
    assert payload["meta"]["config_hash"] == "beef"
    assert payload["provenance"]["seed"] == 3


def test_write_is_deterministic(tmp_path):
    grid = sample_grid()
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_grid(a, grid, "x")
    write_grid(b, grid, "x")
    assert a.read_bytes() == b.read_bytes()
