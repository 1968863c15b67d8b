import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from bll.errors import SchemaMismatchError
from bll.model import MeasurementRecord, ModelWeights, build_design_matrix, fit_weights
from bll.props import extract_properties
from dal.export import export_json, export_text
from dal.kernels import kernel_sources
from dal.measurements import read_measurements, write_measurements, write_raw_runs
from dal.schemas import PropertyReportFile
from dal.weights import load_device, load_weights, save_weights

from .conftest import COPY, COPY_TEMPLATE


def test_export_refuses_to_overwrite(tmp_path):
    path = tmp_path / "nested" / "a.txt"
    export_text("uno", path)
    with pytest.raises(FileExistsError):
        export_text("dos", path)
    export_text("dos", path, force=True)
    assert path.read_text() == "dos"
    assert [p.name for p in path.parent.iterdir()] == ["a.txt"]


def test_export_json_converts_arrays(tmp_path):
    path = tmp_path / "a.json"
    export_json({"x": np.arange(3)}, path)
    assert json.loads(path.read_text()) == {"x": [0, 1, 2]}


def test_measurements_round_trip(tmp_path):
    records = [
        MeasurementRecord("copy", {"n": 1024}, (256, 1), 1.5e-5),
        MeasurementRecord("matmul", {"n": 64, "m": 32, "l": 48}, (16, 12), 2.0e-4),
    ]
    path = tmp_path / "m.csv"
    write_measurements(records, path)
    assert path.read_text().splitlines()[0] == "kernel,binding,group_config,time_s"
    assert "l=48;m=32;n=64,16x12" in path.read_text()
    assert read_measurements(path) == records


def test_raw_runs_are_reduced_on_read(tmp_path):
    raw = pd.DataFrame({
        "kernel": ["copy"] * 6,
        "binding": ["n=256"] * 6,
        "group_config": ["256x1"] * 6,
        "run_index": range(1, 7),
        "time_s": [0.5, 3.0, 2.0, 2.0, 1.2, 1.1],
    })
    path = tmp_path / "raw.csv"
    write_raw_runs(raw, path)
    (record,) = read_measurements(path)
    assert record.time_s == 1.1
    assert record.group == (256, 1)


def test_measurements_need_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("kernel,time_s\ncopy,1.0\n")
    with pytest.raises(ValueError, match="faltan columnas"):
        read_measurements(path)


def test_weights_round_trip(tmp_path, copy_kernel):
    cases = [(extract_properties(copy_kernel, {"n": n}), 1e-4 + 1e-11 * n) for n in (256, 1024, 4096)]
    weights, report = fit_weights(build_design_matrix(cases), "copy-dev")
    path = tmp_path / "w.json"
    save_weights(weights, path, report)
    data = json.loads(path.read_text())
    assert data["fit"]["n_cases"] == 3
    loaded = load_weights(path)
    assert loaded.device == "copy-dev"
    assert dict(loaded.weights) == pytest.approx(dict(weights.weights))
    assert dict(loaded.covered) == dict(weights.covered)


def test_weights_without_coverage(tmp_path):
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"device": "x", "weights": {"launch.const": 1e-4}}))
    loaded = load_weights(path)
    assert loaded.covered["launch.const"] and not loaded.covered["launch.groups"]
    assert isinstance(loaded, ModelWeights)


def test_weights_errors(tmp_path):
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"device": "x"}))
    with pytest.raises(ValueError, match="inválido"):
        load_weights(path)
    path.write_text(json.dumps({"schema_version": "9", "device": "x", "weights": {}}))
    with pytest.raises(SchemaMismatchError):
        load_weights(path)


@pytest.mark.parametrize("field", ["weights", "covered"])
def test_weights_file_rejects_unknown_keys(tmp_path, field):
    data = {"device": "x", "weights": {"launch.const": 1e-5}, "covered": {"launch.const": True}}
    data[field]["flop.f16.mul"] = 1.0 if field == "weights" else True
    path = tmp_path / "w.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaMismatchError, match="flop.f16.mul"):
        load_weights(path)


def test_device_spec(tmp_path):
    assert load_device().name == "r9-fury"
    assert load_device(sigma=0.1, seed=4).sigma == 0.1
    path = tmp_path / "dev.json"
    path.write_text(json.dumps({"name": "toy", "sigma": 0.02, "seed": 9, "weights": {"launch.const": 1e-5}}))
    dev = load_device(path)
    assert (dev.name, dev.sigma, dev.seed) == ("toy", 0.02, 9)
    path.write_text(json.dumps({"name": "toy", "weights": {"mem.bogus": 1.0}}))
    with pytest.raises(ValidationError):
        load_device(path)


def test_kernel_sources(tmp_path, tiny_suite):
    (tmp_path / "plain").mkdir()
    (tmp_path / "plain" / "copy.knl").write_text(COPY)
    (tmp_path / "plain" / "notes.txt").write_text("x")
    assert kernel_sources(tmp_path / "plain") == {"copy": COPY}
    suite = kernel_sources(tiny_suite)
    assert suite["copy_t"] == suite["copy_test"] == COPY_TEMPLATE
    with pytest.raises(FileNotFoundError):
        kernel_sources(tmp_path / "missing")


def test_property_report_schema():
    with pytest.raises(ValidationError):
        PropertyReportFile(kernel="k", properties={"flop.f16.mul": 1})
    with pytest.raises(ValidationError):
        PropertyReportFile(kernel="k", properties={}, extra=1)
