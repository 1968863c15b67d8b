import numpy as np
import pandas as pd
import pytest

from bll.device import SimDevice, run_campaign, simulate_time
from bll.errors import EmptyFitError, NonpositiveTimeError, SchemaMismatchError, TooFewRunsError
from bll.model import (
    ModelWeights,
    MeasurementRecord,
    build_design_matrix,
    error_report,
    fit_weights,
    format_binding,
    format_group,
    geometric_mean_error,
    objective,
    parse_binding,
    parse_group,
    predict,
    reduce_raw_runs,
    relative_errors,
)
from bll.props import PROPERTY_SCHEMA, extract_properties, properties_at
from bll.suite import load_suite_kernel, suite_cases, suite_kernel


def test_binding_and_group_text():
    assert format_binding({"n": 1024, "m": 512}) == "m=512;n=1024"
    assert parse_binding("m=512;n=1024") == {"m": 512, "n": 1024}
    assert parse_binding("") == {}
    assert format_group((16, 12)) == "16x12"
    assert parse_group("256x1") == (256, 1)
    with pytest.raises(ValueError):
        parse_binding("n1024")
    with pytest.raises(ValueError):
        parse_group("256")


def test_weights_reject_unknown_keys():
    with pytest.raises(SchemaMismatchError):
        ModelWeights.from_mapping("x", {"flop.f16.mul": 1.0})
    w = ModelWeights.from_mapping("x", {"launch.const": 1e-4})
    assert w.covered["launch.const"] and not w.covered["launch.groups"]
    assert w.vector().shape == (len(PROPERTY_SCHEMA),)


def test_measurement_times_must_be_positive():
    with pytest.raises(NonpositiveTimeError):
        MeasurementRecord("copy", {"n": 256}, (256, 1), 0.0)


def test_predict_empty_kernel(r9_weights):
    k = load_suite_kernel("empty", (16, 16))
    prediction = predict(r9_weights, extract_properties(k), {"n": 512})
    assert prediction.seconds == pytest.approx(1.3284e-4, rel=1e-9)
    assert set(prediction.contributions) == {"launch.groups", "launch.const"}
    assert prediction.contributions["launch.groups"] == pytest.approx(1024 * 3.75e-9)


def test_predict_rejects_other_schema(copy_kernel):
    w = ModelWeights.from_mapping("x", {"launch.const": 1e-4}, schema_version="0")
    with pytest.raises(SchemaMismatchError):
        predict(w, extract_properties(copy_kernel, {"n": 256}))


def test_uncovered_properties_are_logged(copy_kernel, caplog):
    w = ModelWeights.from_mapping("x", {"launch.const": 1e-4})
    with caplog.at_level("WARNING", logger="bll.model"):
        prediction = predict(w, extract_properties(copy_kernel, {"n": 256}))
    assert prediction.seconds == pytest.approx(1e-4)
    assert "mem.global.load.s32.1/1" in caplog.text


def _synthetic_cases(copy_kernel, weights):
    cases = []
    for n in (256, 512, 1024, 4096, 16384, 65536):
        pv = extract_properties(copy_kernel, {"n": n})
        cases.append((pv, float(weights.vector() @ pv.as_array())))
    return cases


def test_fit_recovers_noiseless_weights(copy_kernel):
    true = ModelWeights.from_mapping("true", {
        "mem.global.load.s32.1/1": 8e-12,
        "launch.groups": 4e-9,
        "launch.const": 1.3e-4,
    })
    design = build_design_matrix(_synthetic_cases(copy_kernel, true))
    weights, report = fit_weights(design, "copy-only")
    assert report.objective <= 1e-10
    assert report.n_cases == 6
    assert weights.device == "copy-only"
    # load, store, minls and groups columns are all proportional to n
    assert report.rank == 2
    assert "flop.f32.mul" in report.uncovered
    cases = _synthetic_cases(copy_kernel, true)
    for pv, t in cases:
        assert predict(weights, pv).seconds == pytest.approx(t, rel=1e-6)
    assert weights.weights["launch.const"] == pytest.approx(1.3e-4, rel=1e-6)
    assert objective(weights.vector(), design) == pytest.approx(report.objective, abs=1e-12)


def test_fit_needs_cases():
    with pytest.raises(EmptyFitError):
        build_design_matrix([])


def test_relative_and_geometric_errors():
    assert relative_errors([(1.1, 1.0), (0.9, 1.0)]) == pytest.approx([0.1, 0.1])
    assert geometric_mean_error([(1.1, 1.0), (0.9, 1.0)]) == pytest.approx(0.10)
    assert geometric_mean_error([(1.0, 1.0)]) == pytest.approx(1e-12)
    assert geometric_mean_error([(1.1, 1.0), (1.4, 1.0)]) == pytest.approx(0.2)
    with pytest.raises(NonpositiveTimeError):
        relative_errors([(1.0, 0.0)])
    with pytest.raises(EmptyFitError):
        geometric_mean_error([])


def test_error_report_per_kernel():
    df = pd.DataFrame({
        "kernel": ["a", "a", "b", "b"],
        "predicted_s": [1.1, 0.9, 2.4, 1.6],
        "time_s": [1.0, 1.0, 2.0, 2.0],
    })
    report = error_report(df)
    assert report.per_kernel == pytest.approx({"a": 0.1, "b": 0.2})
    assert report.cross_kernel == pytest.approx(np.sqrt(0.1 * 0.2))
    assert list(report.cases["rel_error"]) == pytest.approx([0.1, 0.1, 0.2, 0.2])


def _raw(times_by_case):
    rows = []
    for (kernel, binding), times in times_by_case.items():
        for i, t in enumerate(times, start=1):
            rows.append({"kernel": kernel, "binding": binding, "group_config": "256x1",
                         "run_index": i, "time_s": t})
    return pd.DataFrame(rows)


def test_reduce_raw_runs_drops_warmup():
    raw = _raw({
        ("copy", "n=256"): [0.1, 5.0, 3.0, 2.0, 4.0, 1.0, 1.5],
        ("copy", "n=512"): [9.0, 9.0, 9.0, 9.0, 2.0],
    })
    reduced = reduce_raw_runs(raw.sample(frac=1, random_state=0))
    times = dict(zip(reduced["binding"], reduced["time_s"]))
    assert times == {"n=256": 1.0, "n=512": 2.0}


def test_reduce_raw_runs_needs_more_than_warmup():
    with pytest.raises(TooFewRunsError):
        reduce_raw_runs(_raw({("copy", "n=256"): [1.0, 1.0, 1.0, 1.0]}))


def test_cross_kernel_geomean_of_four_kernels():
    # per-kernel errors 0.30, 0.08, 0.32 and 0.10 give a cross-kernel value of about 0.166
    pairs = [(1.30, 1.0), (1.08, 1.0), (1.32, 1.0), (1.10, 1.0)]
    assert geometric_mean_error(pairs) == pytest.approx(0.16, abs=0.01)


def test_contributions_sum_to_total(r9_weights):
    k = load_suite_kernel("matmul_tiled_square", (16, 16))
    prediction = predict(r9_weights, extract_properties(k, {"n": 64, "m": 32, "l": 48}))
    assert sum(prediction.contributions.values()) == pytest.approx(prediction.seconds, rel=1e-15)


def test_prediction_matches_the_simulator(copy_kernel):
    weights = {"mem.global.load.s32.1/1": 8e-12, "mem.global.store.s32.1/1": 6e-12,
               "launch.groups": 4e-9, "launch.const": 1.3e-4}
    dev = SimDevice(name="synthetic", weights=weights)
    pv = extract_properties(copy_kernel, {"n": 4096})
    expected = simulate_time(dev, copy_kernel, {"n": 4096})
    assert predict(ModelWeights.from_mapping("synthetic", weights), pv).seconds == pytest.approx(expected, rel=1e-12)


def _noisy_cases(tiny_suite, scale: float = 1.0):
    result = run_campaign(SimDevice(sigma=0.05, seed=2), suite_cases("measurement", tiny_suite))
    return [(properties_at(suite_kernel(r.kernel, tiny_suite).source, r.binding, r.group), scale * r.time_s)
            for r in result.records]


def test_fitted_weights_are_a_minimum(tiny_suite):
    design = build_design_matrix(_noisy_cases(tiny_suite))
    weights, report = fit_weights(design)
    alpha = weights.vector()
    assert report.objective > 0
    for i in np.flatnonzero(design.covered):
        for factor in (0.99, 1.01):
            perturbed = alpha.copy()
            perturbed[i] *= factor
            assert objective(perturbed, design) >= report.objective * (1 - 1e-9), PROPERTY_SCHEMA[i]


def test_fit_is_scale_equivariant(tiny_suite):
    cases = _noisy_cases(tiny_suite)
    weights, _ = fit_weights(build_design_matrix(cases))
    scaled, _ = fit_weights(build_design_matrix(_noisy_cases(tiny_suite, scale=3.5)))
    np.testing.assert_allclose(scaled.vector(), 3.5 * weights.vector(), rtol=1e-9, atol=1e-30)
    for pv, _ in cases:
        assert predict(scaled, pv).seconds == pytest.approx(3.5 * predict(weights, pv).seconds, rel=1e-9)
