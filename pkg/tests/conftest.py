from __future__ import annotations
import json

import numpy as np
import pytest

from bll.config import R9_FURY_WEIGHTS
from bll.kernel_ir import parse_kernel
from bll.model import ModelWeights
from bll.symcount import param_facts

COPY = """\
kernel copy
param n
assume n >= 256 and n % 256 == 0
array a : f32[n] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n/256
axis l0 = local(0) extent 256
let i = g0*256 + l0
out[i] = a[i]
"""

# n is not a multiple of the group size, so the guard cannot be folded symbolically;
# a rational group extent counts ceil(n/256) groups
GUARDED_COPY = """\
kernel guarded_copy
param n
assume n >= 1
array a : f32[n] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n/256
axis l0 = local(0) extent 256
let i = g0*256 + l0
guard i < n
  out[i] = a[i]
end
"""

COPY_TEMPLATE = """\
kernel copy_t
param n
assume n >= ${lx} and n % ${lx} == 0
array a : f32[n] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n/${lx}
axis l0 = local(0) extent ${lx}
let i = g0*${lx} + l0
out[i] = a[i]
"""

# a[2*i] alone fills just over half of its stride-2 span; the extra a[2n + 1]
# cell brings utilization to exactly 1/2
HALF_FILLED = """\
kernel half_filled
param n
assume n >= 4 and n % 4 == 0
array a : f32[2*n + 2] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n/4
axis l0 = local(0) extent 4
let i = g0*4 + l0
out[i] = a[2*i] + a[2*n + 1]
"""

JUST_OVER_HALF = """\
kernel just_over_half
param n
assume n >= 4 and n % 4 == 0
array a : f32[2*n] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n/4
axis l0 = local(0) extent 4
let i = g0*4 + l0
out[i] = a[2*i]
"""


@pytest.fixture
def copy_kernel():
    return parse_kernel(COPY)


@pytest.fixture
def guarded_copy_kernel():
    return parse_kernel(GUARDED_COPY)


@pytest.fixture
def r9_weights() -> ModelWeights:
    return ModelWeights.from_mapping("r9-fury", R9_FURY_WEIGHTS)


@pytest.fixture
def write_kernel(tmp_path):
    def write(source: str, name: str = "kernel.knl"):
        path = tmp_path / name
        path.write_text(source, encoding="utf-8")
        return path
    return write


@pytest.fixture
def tiny_suite(tmp_path):
    """A two-kernel suite directory: a templated copy and the bundled empty kernel."""
    root = tmp_path / "suite"
    (root / "measurement").mkdir(parents=True)
    (root / "measurement" / "copy_t.knl").write_text(COPY_TEMPLATE, encoding="utf-8")
    (root / "measurement" / "empty.knl").write_text(
        "kernel empty\nparam n\nassume n >= 1 and n % ${lx} == 0 and n % ${ly} == 0\n"
        "axis g0 = group(0) extent n/${lx}\naxis g1 = group(1) extent n/${ly}\n"
        "axis l0 = local(0) extent ${lx}\naxis l1 = local(1) extent ${ly}\n",
        encoding="utf-8",
    )
    manifest = {
        "version": "1",
        "kernels": {
            "copy_t": {"source": "measurement/copy_t.knl", "role": "measurement", "group_set": "1-D Small",
                       "sizes": {"p": 10, "step": 1, "t": [0, 1, 2, 3]}},
            "empty": {"source": "measurement/empty.knl", "role": "measurement", "group_set": "2-D Small",
                      "sizes": {"p": 6, "step": 1, "t": [0, 1, 2]}},
            "copy_test": {"source": "measurement/copy_t.knl", "role": "test", "group_set": "1-D Med",
                          "sizes": {"p": 11, "step": 1, "t": [0, 1]}},
        },
    }
    (root / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    return root


def admissible_samples(k, rng: np.random.Generator, count: int, max_multiple: int = 4) -> list[dict[str, int]]:
    """Random bindings that satisfy the kernel's lower bounds and divisibility facts."""
    facts = param_facts(k.assumptions)
    samples = []
    for _ in range(count):
        binding = {}
        for name in k.param_names:
            modulus = facts.moduli.get(name, 1)
            low = max(facts.lower.get(name, 0), 1)
            first = -(-low // modulus)
            binding[name] = modulus * int(rng.integers(first, first + max_multiple))
        samples.append(binding)
    return samples
