import pandas as pd
import pytest

from bll import errors
from bll.device import enumerate_points
from bll.kernel_ir import infer_types, parse_kernel
from bll.model import MeasurementRecord, ModelWeights, build_design_matrix, reduce_raw_runs
from bll.props import extract_properties
from bll.suite import suite_kernel
from bll.symcount import count_points, stmt_domain

from .conftest import COPY, GUARDED_COPY

NARROWING = """\
kernel narrow
param n
array a : f32[n] global row_major in
array c : i32[n] global row_major out
loop i = 0 .. n
  c[i] = a[i]
end
"""


def _guarded_count():
    k = parse_kernel(GUARDED_COPY)
    count_points(stmt_domain(k, k.body[0].body[0]), k.assumptions)


def _short_runs():
    raw = pd.DataFrame({"kernel": ["copy"] * 3, "binding": ["n=256"] * 3, "group_config": ["256x1"] * 3,
                        "run_index": [1, 2, 3], "time_s": [1.0, 1.0, 1.0]})
    reduce_raw_runs(raw)


TRIGGERS = {
    "E_SYNTAX": lambda: parse_kernel("kernel bad\nparam n\narray a : f32[n] global row_major out\na[0] = = 1\n"),
    "E_NON_AFFINE": lambda: parse_kernel("kernel bad\nparam n\narray a : f32[n] global row_major out\n"
                                         "loop i = 0 .. n\n  a[i*i] = 1.0\nend\n"),
    "E_INVALID_KERNEL": lambda: parse_kernel("kernel bad\nparam n\narray a : f32[n] global row_major in\n"
                                             "a[0] = 1.0\n"),
    "E_TYPE_CONFLICT": lambda: infer_types(parse_kernel(NARROWING)),
    "E_NEEDS_FALLBACK": _guarded_count,
    "E_NEEDS_BINDING": lambda: extract_properties(parse_kernel(GUARDED_COPY)),
    "E_ASSUMPTION_VIOLATED": lambda: extract_properties(parse_kernel(COPY), {"n": 300}),
    "E_UNBOUND_PARAM": lambda: extract_properties(parse_kernel(COPY), {}),
    "E_SCHEMA_MISMATCH": lambda: ModelWeights.from_mapping("x", {"flop.f16.mul": 1.0}),
    "E_NONPOSITIVE_TIME": lambda: MeasurementRecord("copy", {"n": 256}, (256, 1), -1.0),
    "E_EMPTY": lambda: build_design_matrix([]),
    "E_CAP_EXCEEDED": lambda: enumerate_points(parse_kernel(COPY), {"n": 1024}, cap=100),
    "E_TOO_FEW_RUNS": _short_runs,
    "E_UNKNOWN_KERNEL": lambda: suite_kernel("no_such_kernel"),
}


def _error_classes(cls=errors.KernelCostError):
    for sub in cls.__subclasses__():
        yield sub
        yield from _error_classes(sub)


def test_every_error_code_has_a_trigger():
    assert {cls.code for cls in _error_classes()} == set(TRIGGERS)


@pytest.mark.parametrize("code", sorted(TRIGGERS))
def test_error_code_is_raised(code):
    with pytest.raises(errors.KernelCostError) as exc:
        TRIGGERS[code]()
    assert exc.value.code == code
    assert str(exc.value).startswith(code)
