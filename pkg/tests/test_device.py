import numpy as np
import pandas as pd
import pytest

from bll.config import R9_FURY_WEIGHTS
from bll import device
from bll.device import CASE_FAILED, SimDevice, enumerate_points, run_campaign, simulate_runs, simulate_time
from bll.errors import CapExceededError
from bll.model import (
    ModelWeights,
    build_design_matrix,
    error_report,
    fit_weights,
    objective,
    predict,
    reduce_raw_runs,
)
from bll.props import PROPERTY_SCHEMA, properties_at
from bll.suite import SuiteCase, load_suite_kernel, suite_cases, suite_kernel

from .conftest import COPY_TEMPLATE


def test_device_validation():
    with pytest.raises(ValueError, match="sigma"):
        SimDevice(sigma=-0.1)
    with pytest.raises(ValueError, match="launch.const"):
        SimDevice(weights={"launch.groups": 1e-9})
    with pytest.raises(ValueError, match="desconocidas"):
        SimDevice(weights={"launch.const": 1e-4, "mem.bogus": 1.0})


def test_noiseless_empty_kernel():
    source = suite_kernel("empty").source
    assert simulate_time(SimDevice(), source, {"n": 512}, (16, 16)) == pytest.approx(1.3284e-4, rel=1e-9)


def test_noise_is_keyed_by_case():
    dev = SimDevice(sigma=0.02, seed=7)
    a = simulate_time(dev, COPY_TEMPLATE, {"n": 1024}, (256, 1))
    assert simulate_time(dev, COPY_TEMPLATE, {"n": 1024}, (256, 1)) == a
    assert simulate_time(SimDevice(sigma=0.02, seed=8), COPY_TEMPLATE, {"n": 1024}, (256, 1)) != a
    assert simulate_time(dev, COPY_TEMPLATE, {"n": 2048}, (256, 1)) != a


def test_small_noise_stays_close():
    dev = SimDevice(sigma=0.02, seed=3)
    base = simulate_time(SimDevice(), COPY_TEMPLATE, {"n": 1024}, (256, 1))
    times = np.array(simulate_runs(dev, COPY_TEMPLATE, {"n": 1024}, runs=1000, group=(256, 1)))
    times[1] /= dev.first_touch
    ratios = times / base
    assert np.mean((ratios >= 0.9) & (ratios <= 1.1)) >= 0.99


def test_second_run_pays_first_touch():
    dev = SimDevice(first_touch=3.0)
    times = simulate_runs(dev, COPY_TEMPLATE, {"n": 768}, runs=6, group=(192, 1))
    assert times[1] == pytest.approx(3.0 * times[0])
    assert times[0] == times[2] == times[5]


def test_enumeration_counts_points(copy_kernel):
    tally = enumerate_points(copy_kernel, {"n": 512})
    assert tally.points == 512
    assert tally.properties["mem.global.store.s32.1/1"] == 512
    with pytest.raises(CapExceededError):
        enumerate_points(copy_kernel, {"n": 512}, cap=100)


def test_campaign_records_and_errors(tiny_suite):
    cases = suite_cases("measurement", tiny_suite)
    bad = SuiteCase("copy_t", {"n": 300}, (256, 1), source=COPY_TEMPLATE)
    progress = []
    result = run_campaign(SimDevice(), [*cases, bad], on_progress=lambda done, total: progress.append(done))
    assert len(result.records) == len(cases) == 7
    assert progress[-1] == len(cases) + 1
    (error,) = result.errors
    assert error.code == "E_ASSUMPTION_VIOLATED"
    assert error.kernel == "copy_t"
    assert all(r.time_s > 0 for r in result.records)


def test_campaign_turns_unexpected_failures_into_rows(tiny_suite, monkeypatch):
    cases = suite_cases("measurement", tiny_suite)
    real = device.simulate_time

    def flaky(dev, source, binding, group=None, cap=None):
        if binding.get("n") == 1152:
            raise ZeroDivisionError("división por cero")
        return real(dev, source, binding, group, cap)

    monkeypatch.setattr(device, "simulate_time", flaky)
    result = run_campaign(SimDevice(), cases)
    (error,) = result.errors
    assert error.code == CASE_FAILED
    assert "ZeroDivisionError" in error.message
    assert len(result.records) == len(cases) - 1


def test_campaign_raw_runs_reduce_to_records(tiny_suite):
    cases = suite_cases("measurement", tiny_suite)
    result = run_campaign(SimDevice(sigma=0.05, seed=1), cases, runs=8)
    raw = result.raw_frame()
    assert len(raw) == 8 * len(cases)
    reduced = reduce_raw_runs(raw)
    assert sorted(reduced["time_s"]) == pytest.approx(sorted(r.time_s for r in result.records))


def test_campaign_is_independent_of_workers(tiny_suite):
    cases = suite_cases("measurement", tiny_suite)
    dev = SimDevice(sigma=0.02, seed=5)
    serial = run_campaign(dev, cases)
    parallel = run_campaign(dev, cases, max_workers=2)
    assert [r.time_s for r in serial.records] == [r.time_s for r in parallel.records]


def _fit_suite(dev: SimDevice):
    result = run_campaign(dev, suite_cases("measurement"))
    assert not result.errors
    cases = [(properties_at(suite_kernel(r.kernel).source, r.binding, r.group), r.time_s)
             for r in result.records]
    design = build_design_matrix(cases)
    return design, fit_weights(design, dev.name)


@pytest.mark.slow
def test_noiseless_suite_recovers_weights():
    design, (weights, report) = _fit_suite(SimDevice())
    assert report.objective <= 1e-10
    assert report.rank == int(design.covered.sum())
    truth = ModelWeights.from_mapping("r9-fury", R9_FURY_WEIGHTS)
    for key in PROPERTY_SCHEMA:
        if weights.covered[key]:
            assert weights.weights[key] == pytest.approx(truth.weights[key], rel=1e-6, abs=1e-18), key


def _cross_kernel_error(seed: int) -> float:
    dev = SimDevice(sigma=0.02, seed=seed)
    _, (weights, _) = _fit_suite(dev)
    rows = []
    for case in suite_cases("test"):
        pv = properties_at(case.source, case.binding, case.group)
        rows.append({
            "kernel": case.kernel_id,
            "predicted_s": predict(weights, pv).seconds,
            "time_s": simulate_time(dev, case.source, case.binding, case.group),
        })
    return error_report(pd.DataFrame(rows)).cross_kernel


@pytest.mark.slow
def test_noisy_fit_predicts_test_kernels():
    errors = [_cross_kernel_error(seed) for seed in range(20)]
    assert sum(e <= 0.05 for e in errors) >= 19, errors


def test_suite_kernel_loads_by_group():
    k = load_suite_kernel("stride1_copy", (224, 1))
    assert k.local_axes()[0].extent.const == 224


@pytest.mark.slow
def test_bundled_noisy_fit_is_a_minimum():
    design, (weights, report) = _fit_suite(SimDevice(sigma=0.02, seed=0))
    alpha = weights.vector()
    for i in np.flatnonzero(design.covered):
        for factor in (0.99, 1.01):
            perturbed = alpha.copy()
            perturbed[i] *= factor
            assert objective(perturbed, design) >= report.objective * (1 - 1e-9), PROPERTY_SCHEMA[i]
