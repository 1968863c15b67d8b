import numpy as np
import pytest
import sympy

from bll.errors import NeedsBindingError, UnboundParameterError
from bll.kernel_ir import parse_kernel
from bll.suite import load_suite_kernel
from bll.symcount import (
    CountExpr,
    access_footprint,
    array_accesses,
    cell_fill,
    count_points,
    enumerate_domain,
    fill_footprint,
    footprint_cells,
    param_facts,
    param_symbol,
    stmt_domain,
)

from .conftest import HALF_FILLED, admissible_samples

TRIANGLE = """\
kernel tri
param n
assume n >= 1
array a : f32[n, n] global row_major out
loop i = 0 .. n
  loop j = 0 .. i + 1
    a[i, j] = 1.0
  end
end
"""

HALVES = """\
kernel halves
param n
assume n >= 1
array a : f32[n] global row_major out
loop i = 0 .. n/2
  a[2*i] = 1.0
end
"""


def test_triangular_loop_matches_enumeration():
    k = parse_kernel(TRIANGLE)
    stmt = k.body[0].body[0].body[0]
    d = stmt_domain(k, stmt)
    count = count_points(d, k.assumptions)
    n = param_symbol("n")
    assert sympy.expand(count.expr - (n**2 + n) / 2) == 0
    for value in (1, 2, 7, 30):
        assert count.evaluate({"n": value}) == enumerate_domain(d, {"n": value}).count


def test_rational_extent_rounds_up():
    k = parse_kernel(HALVES)
    d = stmt_domain(k, k.body[0].body[0])
    count = count_points(d, k.assumptions)
    for value in (1, 2, 3, 10, 11):
        assert count.evaluate({"n": value}) == (value + 1) // 2
        assert count.evaluate({"n": value}) == enumerate_domain(d, {"n": value}).count


def test_copy_counts_follow_assumptions(copy_kernel):
    d = stmt_domain(copy_kernel, copy_kernel.body[0])
    assert count_points(d, copy_kernel.assumptions).to_prefix() == "n"
    for binding in admissible_samples(copy_kernel, np.random.default_rng(3), 5):
        assert enumerate_domain(d, binding).count == binding["n"]


def test_guarded_copy_counts_exactly(guarded_copy_kernel):
    k = guarded_copy_kernel
    d = stmt_domain(k, k.body[0].body[0])
    for n in (1, 255, 256, 257, 1000):
        assert enumerate_domain(d, {"n": n}).count == n


def test_count_expr_prefix_and_evaluation():
    m, n = param_symbol("m"), param_symbol("n")
    count = CountExpr.of(m * n)
    assert count.to_prefix() == "(* m n)"
    assert CountExpr.of(n**2).to_prefix() == "(^ n 2)"
    assert CountExpr.of(3).to_prefix() == "3"
    assert count.evaluate({"m": 3, "n": 4}) == 12
    with pytest.raises(UnboundParameterError):
        count.evaluate({"n": 4})


def test_param_facts_collect_bounds_and_moduli(copy_kernel):
    facts = param_facts(copy_kernel.assumptions)
    assert facts.lower["n"] == 256
    assert facts.moduli["n"] == 256


def test_strided_footprint_and_fill():
    k = load_suite_kernel("axpy_s2", (256, 1))
    f = access_footprint(k, "x")
    assert f.is_symbolic
    assert f.size().to_prefix() == "n"
    assert f.size().evaluate({"n": 1024}) == 1024
    assert fill_footprint(f).evaluate({"n": 1024}) == 2047
    assert f.lane_strides == (2,)


def test_union_footprint_over_rows():
    k = load_suite_kernel("nbody", (256, 1))
    f = access_footprint(k, "pos")
    assert f.is_symbolic
    assert f.size().evaluate({"n": 512}) == 3 * 512
    assert fill_footprint(f).evaluate({"n": 512}) == 3 * 512


def test_union_with_differing_steps_needs_binding():
    k = parse_kernel(HALF_FILLED)
    with pytest.raises(NeedsBindingError):
        access_footprint(k, "a")
    f = access_footprint(k, "a", binding={"n": 8})
    assert not f.is_symbolic
    assert f.size().evaluate({}) == 9
    assert fill_footprint(f).evaluate({}) == 18


def test_symbolic_footprint_agrees_with_enumeration():
    k = load_suite_kernel("transpose_strided_read", (16, 16))
    for array in ("a", "out"):
        symbolic = access_footprint(k, array)
        for binding in admissible_samples(k, np.random.default_rng(11), 3, max_multiple=3):
            cells = footprint_cells(array_accesses(k, array), binding)
            assert symbolic.size().evaluate(binding) == len(cells)
            assert fill_footprint(symbolic).evaluate(binding) == cell_fill(cells, symbolic.layout)
