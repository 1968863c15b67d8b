"""Vectores de propiedades: los conteos por kernel que pondera el modelo de tiempo.

`tally_properties` recorre el kernel una vez y le pregunta a un `CountSource`
cuántas veces corre cada sentencia, cuántos grupos se lanzan y cómo se
clasifica cada acceso global. La fuente simbólica responde con conteos
paramétricos; el oráculo de enumeración de `bll.device` visita cada punto.
"""
from __future__ import annotations
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Mapping, Protocol, Union

import numpy as np
import sympy

from .config import DEFAULT_CAP, SCHEMA_VERSION
from .errors import (
    AssumptionViolatedError,
    NeedsBindingError,
    NeedsFallbackError,
    UnboundParameterError,
)
from .kernel_ir import (
    SPECIAL_FUNCTIONS,
    ArrayAccess,
    Assign,
    Assumption,
    Barrier,
    BinOp,
    Call,
    Expr,
    KernelIR,
    UnaryOp,
    infer_types,
    instantiate,
    iter_statements,
    loads_of,
    parse_kernel,
    walk_expr,
)
from .symcount import (
    BoundProver,
    CountExpr,
    access_footprint,
    array_accesses,
    count_points,
    enumerate_domain,
    fill_footprint,
    group_domain,
    lane_stride,
    param_facts,
    stmt_domain,
)

logger = logging.getLogger(__name__)

SIZES = ("s32", "s64", "s128")
ACCESS_CLASSES = (
    "uniform", "1/1", "1/2", "2/2", "1/3", "2/3", "3/3",
    "1/4", "2/4", "3/4", "4/4", "1/>4", "2/>4", "3/>4", "4/>4",
)
FLOP_KINDS = ("addsub", "mul", "div", "pow", "special")


def _build_schema() -> tuple[str, ...]:
    keys = [f"mem.global.{d}.{s}.{c}" for d in ("load", "store") for s in SIZES for c in ACCESS_CLASSES]
    keys += [f"mem.minls.{s}.{c}" for s in SIZES for c in ACCESS_CLASSES]
    keys.append("mem.local.load")
    keys += [f"flop.{t}.{kind}" for t in ("f32", "f64") for kind in FLOP_KINDS]
    keys += ["sync.barrier", "launch.groups", "launch.const"]
    return tuple(keys)


PROPERTY_SCHEMA: tuple[str, ...] = _build_schema()
N_PROPERTIES = len(PROPERTY_SCHEMA)

Count = Union[CountExpr, int]


@dataclass(frozen=True)
class AccessClass:
    direction: str
    size: str
    stride: object
    label: str

    @property
    def numerator(self) -> int | None:
        return int(self.label.split("/")[0]) if "/" in self.label else None

    @property
    def denominator(self) -> str | None:
        return self.label.split("/")[1] if "/" in self.label else None

    @property
    def key(self) -> str:
        return f"mem.global.{self.direction}.{self.size}.{self.label}"


def quantize(stride: int, utilization: Fraction) -> str:
    """Fracción de stride amortizada: ceil(u*s) acotado a 1..4 sobre s (o '>4')."""
    if stride == 0:
        return "uniform"
    if stride == 1:
        return "1/1"
    q = max(1, min(4, math.ceil(Fraction(utilization) * stride)))
    return f"{q}/{stride if stride <= 4 else '>4'}"


def _symbolic_label(stride, size: CountExpr, fill: CountExpr, prover: BoundProver) -> str:
    if isinstance(stride, int):
        if stride in (0, 1):
            return quantize(stride, Fraction(1))
        denom, top = (str(stride), stride) if stride <= 4 else (">4", 4)
    elif prover.nonneg(stride - 5):
        denom, top = ">4", 4
    else:
        raise NeedsBindingError(f"no se puede acotar el stride {stride}")
    if (fill + size * -1).is_zero:
        return f"{top}/{denom}"
    s, f_, n_ = sympy.sympify(stride), fill.expr, size.expr
    for q in range(1, top + 1):
        below = q == top or prover.nonneg(q * f_ - s * n_)
        above = q == 1 or prover.nonneg(s * n_ - (q - 1) * f_ - 1)
        if below and above:
            return f"{q}/{denom}"
    raise NeedsBindingError(f"utilización {size}/{fill} no se puede clasificar sin valores")


class CountSource(Protocol):
    def statement_count(self, stmt: Assign | Barrier) -> Count: ...

    def group_count(self) -> Count: ...

    def access_class(self, access: ArrayAccess, direction: str) -> str: ...


_BINOP_KINDS = {"+": "addsub", "-": "addsub", "*": "mul", "/": "div", "**": "pow"}


def op_counts(expr: Expr, types: Mapping[Expr, str]) -> Counter:
    """Clave flop.* -> ocurrencias en una evaluación de `expr`."""
    counts: Counter = Counter()
    for node in walk_expr(expr):
        dtype = types[node]
        if dtype == "i32":
            continue
        kind = None
        if isinstance(node, BinOp):
            kind = _BINOP_KINDS[node.op]
        elif isinstance(node, UnaryOp):
            kind = "addsub"
        elif isinstance(node, Call):
            kind = "special" if node.name in SPECIAL_FUNCTIONS else "pow" if node.name == "pow" else None
        if kind:
            counts[f"flop.{dtype}.{kind}"] += 1
    return counts


def _is_zero(value: Count) -> bool:
    return value.is_zero if isinstance(value, CountExpr) else value == 0


def _min(a: Count, b: Count) -> Count:
    if _is_zero(a) or _is_zero(b):
        return 0
    if isinstance(a, int) and isinstance(b, int):
        return min(a, b)
    return CountExpr.of(a).minimum(b)


def tally_properties(k: KernelIR, types: Mapping[Expr, str], source: CountSource) -> dict[str, Count]:
    totals: dict[str, Count] = {key: 0 for key in PROPERTY_SCHEMA}

    def record(access: ArrayAccess, direction: str, n: Count):
        decl = k.array(access.array)
        if decl.space == "local" and direction == "load":
            totals["mem.local.load"] += n
        elif decl.space == "global":
            label = source.access_class(access, direction)
            totals[f"mem.global.{direction}.{decl.size_key}.{label}"] += n

    for stmt, _ in iter_statements(k.body):
        n = source.statement_count(stmt)
        if _is_zero(n):
            continue
        if isinstance(stmt, Barrier):
            totals["sync.barrier"] += n
            continue
        for key, times in op_counts(stmt.rhs, types).items():
            totals[key] += n * times
        for access in loads_of(stmt):
            record(access, "load", n)
        record(stmt.lhs, "store", n)

    totals["launch.groups"] = source.group_count()
    totals["launch.const"] = 1
    for size in SIZES:
        for label in ACCESS_CLASSES:
            totals[f"mem.minls.{size}.{label}"] = _min(totals[f"mem.global.load.{size}.{label}"],
                                                       totals[f"mem.global.store.{size}.{label}"])
    return totals


class SymbolicSource:
    """Conteos en forma cerrada; con binding, enumera donde haga falta."""

    def __init__(self, k: KernelIR, binding: Mapping[str, int] | None = None, cap: int = DEFAULT_CAP):
        self.k = k
        self.binding = dict(binding) if binding is not None else None
        self.cap = cap
        self._utilization: dict[str, tuple[Count, Count]] = {}

    @cached_property
    def prover(self) -> BoundProver:
        return BoundProver(param_facts(self.k.assumptions))

    def _count(self, domain, where: str) -> Count:
        try:
            count = count_points(domain, self.k.assumptions)
        except NeedsFallbackError as e:
            if self.binding is None:
                raise NeedsBindingError(f"{where}: {e.message}") from e
            logger.debug("%s: %s, se enumera", where, e.message)
            return enumerate_domain(domain, self.binding, self.cap).count
        return count if self.binding is None else count.evaluate(self.binding)

    def statement_count(self, stmt: Assign | Barrier) -> Count:
        return self._count(stmt_domain(self.k, stmt), f"línea {stmt.line}")

    def group_count(self) -> Count:
        return self._count(group_domain(self.k), "grilla de grupos")

    def utilization(self, array: str) -> tuple[Count, Count]:
        """(|huella|, huella rellenada) de todos los accesos a `array`."""
        if array not in self._utilization:
            fp = access_footprint(self.k, array, binding=self.binding, cap=self.cap)
            size, fill = fp.size(), fill_footprint(fp)
            if self.binding is not None:
                size, fill = size.evaluate(self.binding), fill.evaluate(self.binding)
            self._utilization[array] = (size, fill)
        return self._utilization[array]

    def access_class(self, access: ArrayAccess, direction: str) -> str:
        stride = lane_stride(self.k, access, self.binding)
        if isinstance(stride, int) and stride <= 1:
            return quantize(stride, Fraction(1))
        size, fill = self.utilization(access.array)
        if self.binding is None:
            return _symbolic_label(stride, size, fill, self.prover)
        return quantize(stride, Fraction(size, fill) if fill else Fraction(1))


def classify_access(k: KernelIR, access: ArrayAccess, binding: Mapping[str, int] | None = None,
                    cap: int = DEFAULT_CAP) -> AccessClass:
    decl = k.array(access.array)
    direction = next((s.direction for s in array_accesses(k, access.array) if s.access is access), "load")
    label = SymbolicSource(k, binding, cap).access_class(access, direction)
    return AccessClass(direction, decl.size_key, lane_stride(k, access, binding), label)


def check_binding(params: tuple[str, ...], assumptions: tuple[Assumption, ...], binding: Mapping[str, int]):
    missing = [p for p in params if p not in binding]
    if missing:
        raise UnboundParameterError(f"faltan valores para {', '.join(missing)}")
    negative = [p for p in params if int(binding[p]) < 0]
    if negative:
        raise AssumptionViolatedError(f"los parámetros {', '.join(negative)} deben ser >= 0")
    broken = [str(a) for a in assumptions if not a.holds(binding)]
    if broken:
        raise AssumptionViolatedError(f"{dict(binding)} no cumple: {'; '.join(broken)}")


@dataclass(frozen=True)
class PropertyVector:
    kernel: str
    values: Mapping[str, Count]
    binding: Mapping[str, int] | None = None
    params: tuple[str, ...] = ()
    assumptions: tuple[Assumption, ...] = field(default=(), repr=False)

    @property
    def is_bound(self) -> bool:
        return self.binding is not None

    def __getitem__(self, key: str) -> Count:
        return self.values[key]

    def as_array(self) -> np.ndarray:
        if not self.is_bound:
            raise NeedsBindingError("el vector es simbólico; evalúelo con un binding primero")
        return np.array([float(self.values[key]) for key in PROPERTY_SCHEMA])

    def nonzero(self) -> dict[str, Count]:
        return {key: v for key, v in self.values.items() if not _is_zero(v)}


def extract_properties(k: KernelIR, binding: Mapping[str, int] | None = None,
                       cap: int = DEFAULT_CAP) -> PropertyVector:
    types = infer_types(k)
    if binding is not None:
        check_binding(k.param_names, k.assumptions, binding)
    totals = tally_properties(k, types, SymbolicSource(k, binding, cap))
    if binding is None:
        values = {key: CountExpr.of(v) for key, v in totals.items()}
    else:
        values = {key: int(v) for key, v in totals.items()}
    return PropertyVector(k.name, values, dict(binding) if binding is not None else None,
                          k.param_names, k.assumptions)


def evaluate_properties(pv: PropertyVector, binding: Mapping[str, int]) -> PropertyVector:
    if pv.is_bound:
        return pv
    check_binding(pv.params, pv.assumptions, binding)
    values = {key: CountExpr.of(v).evaluate(binding) for key, v in pv.values.items()}
    return PropertyVector(pv.kernel, values, dict(binding), pv.params, pv.assumptions)


def property_report(pv: PropertyVector) -> dict:
    report: dict = {"schema_version": SCHEMA_VERSION, "kernel": pv.kernel}
    if pv.binding is not None:
        report["binding"] = {p: int(v) for p, v in pv.binding.items()}
    report["properties"] = {
        key: (int(v) if pv.is_bound else CountExpr.of(v).to_prefix()) for key, v in pv.values.items()
    }
    return report


@lru_cache(maxsize=256)
def _symbolic_properties(source: str) -> PropertyVector | None:
    try:
        return extract_properties(parse_kernel(source))
    except NeedsBindingError as e:
        logger.debug("sin forma cerrada (%s); se extrae por binding", e.message)
        return None


def properties_at(source: str, binding: Mapping[str, int], group: tuple[int, int] | None = None,
                  cap: int = DEFAULT_CAP) -> PropertyVector:
    """Propiedades evaluadas de una plantilla; las formas cerradas se cachean por instancia."""
    text = instantiate(source, group)
    symbolic = _symbolic_properties(text)
    if symbolic is not None:
        return evaluate_properties(symbolic, binding)
    return extract_properties(parse_kernel(text), binding, cap)
