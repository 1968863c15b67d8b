"""Conteo paramétrico de puntos enteros en dominios de sentencias y huellas de arreglos.

Los conteos son expresiones sympy sobre símbolos enteros de parámetros. Los
dominios se resuelven de afuera hacia adentro en una cota inferior y una
superior por variable, y se suman de adentro hacia afuera en forma cerrada.
Si una cota no se puede elegir o una suma no tiene forma cerrada se lanza
NeedsFallbackError y quien llama enumera en un binding concreto.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Mapping, Sequence

import numpy as np
import sympy
from sympy import ceiling, floor

from .config import DEFAULT_CAP
from .errors import (
    CapExceededError,
    NeedsBindingError,
    NeedsFallbackError,
    UnboundParameterError,
)
from .kernel_ir import (
    Affine,
    ArrayAccess,
    Assign,
    Assumption,
    Barrier,
    Congruence,
    Constraint,
    Guard,
    KernelIR,
    Loop,
    iter_statements,
    loads_of,
)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def param_symbol(name: str) -> sympy.Symbol:
    return sympy.Symbol(name, integer=True, nonnegative=True)


@lru_cache(maxsize=None)
def var_symbol(name: str) -> sympy.Symbol:
    return sympy.Symbol(name, integer=True)


def _as_sympy(value) -> sympy.Expr:
    return value.expr if isinstance(value, CountExpr) else sympy.sympify(value)


@dataclass(frozen=True)
class CountExpr:
    """Conteo paramétrico exacto sobre los parámetros del kernel."""

    expr: sympy.Expr = sympy.Integer(0)

    @classmethod
    def of(cls, value) -> CountExpr:
        if isinstance(value, CountExpr):
            return value
        return cls(sympy.expand(sympy.sympify(value)))

    def __add__(self, other) -> CountExpr:
        return CountExpr(sympy.expand(self.expr + _as_sympy(other)))

    __radd__ = __add__

    def __mul__(self, other) -> CountExpr:
        return CountExpr(sympy.expand(self.expr * _as_sympy(other)))

    __rmul__ = __mul__

    def minimum(self, other) -> CountExpr:
        return CountExpr(sympy.Min(self.expr, _as_sympy(other)))

    @property
    def is_zero(self) -> bool:
        return sympy.expand(self.expr) == 0

    @property
    def parameters(self) -> list[str]:
        return sorted(s.name for s in self.expr.free_symbols)

    def evaluate(self, binding: Mapping[str, int]) -> int:
        missing = [p for p in self.parameters if p not in binding]
        if missing:
            raise UnboundParameterError(f"falta el valor de {', '.join(missing)} para evaluar '{self}'")
        value = self.expr.subs({param_symbol(p): sympy.Integer(int(binding[p])) for p in self.parameters})
        if not value.is_Integer:
            raise ArithmeticError(f"'{self}' no es entero en {dict(binding)}: {value}")
        return int(value)

    def to_prefix(self) -> str:
        return _prefix(self.expr)

    def __str__(self) -> str:
        return sympy.sstr(self.expr)


_PREFIX_HEADS = {sympy.Add: "+", sympy.Mul: "*", sympy.Pow: "^", sympy.Min: "min", sympy.Max: "max"}


def _prefix(e: sympy.Expr) -> str:
    if e.is_Integer:
        return str(int(e))
    if e.is_Rational:
        return f"(/ {e.p} {e.q})"
    if e.is_Symbol:
        return e.name
    if e.func in (floor, ceiling):
        num, den = sympy.fraction(sympy.together(e.args[0]))
        head = "floordiv" if e.func is floor else "ceildiv"
        return f"({head} {_prefix(sympy.expand(num))} {_prefix(den)})"
    if e.func not in _PREFIX_HEADS:
        raise ValueError(f"nodo no soportado en una cuenta: {e.func}")
    args = e.args if e.func is sympy.Pow else sorted(e.args, key=sympy.default_sort_key)
    return f"({_PREFIX_HEADS[e.func]} {' '.join(_prefix(a) for a in args)})"


@dataclass(frozen=True)
class DomainVar:
    """ceil(lower) <= name < upper"""

    name: str
    lower: Affine
    upper: Affine


@dataclass(frozen=True)
class StmtDomain:
    variables: tuple[DomainVar, ...] = ()
    guards: tuple[Constraint, ...] = ()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def symbols(self) -> dict[str, sympy.Symbol]:
        names = set(self.names)
        table: dict[str, sympy.Symbol] = {}
        for v in self.variables:
            for aff in (v.lower, v.upper):
                for n in aff.variables:
                    table[n] = var_symbol(n) if n in names else param_symbol(n)
        for g in self.guards:
            for n in g.variables:
                table[n] = var_symbol(n) if n in names else param_symbol(n)
        for n in names:
            table[n] = var_symbol(n)
        return table


def _axis_vars(k: KernelIR) -> list[DomainVar]:
    return [DomainVar(ax.name, Affine.constant(0), ax.extent) for ax in (*k.group_axes(), *k.local_axes())]


def _domain_from(k: KernelIR, enclosing: tuple[Loop | Guard, ...]) -> StmtDomain:
    variables = _axis_vars(k)
    guards: list[Constraint] = []
    for node in enclosing:
        if isinstance(node, Loop):
            variables.append(DomainVar(node.var, node.lower, node.upper))
        else:
            guards.extend(node.conditions)
    return StmtDomain(tuple(variables), tuple(guards))


def stmt_domain(k: KernelIR, stmt: Assign | Barrier) -> StmtDomain:
    for candidate, enclosing in iter_statements(k.body):
        if candidate is stmt:
            return _domain_from(k, enclosing)
    raise ValueError("la instrucción no pertenece al kernel")


def group_domain(k: KernelIR) -> StmtDomain:
    return StmtDomain(tuple(DomainVar(ax.name, Affine.constant(0), ax.extent) for ax in k.group_axes()))


class _Unprovable(Exception):
    pass


@dataclass(frozen=True)
class ParamFacts:
    lower: Mapping[str, int]
    upper: Mapping[str, int]
    moduli: Mapping[str, int]


@lru_cache(maxsize=256)
def param_facts(assumptions: tuple[Assumption, ...]) -> ParamFacts:
    lower: dict[str, int] = {}
    upper: dict[str, int] = {}
    moduli: dict[str, int] = {}
    for a in assumptions:
        if isinstance(a, Congruence):
            if a.residue == 0 and len(a.expr.terms) == 1 and a.expr.const == 0 \
                    and a.expr.terms[0][1] == 1:
                name = a.expr.terms[0][0]
                moduli[name] = math.lcm(moduli.get(name, 1), a.modulus)
            continue
        for g in a.normalized():
            if len(g.terms) != 1:
                continue
            name, c = g.terms[0]
            if c > 0:
                lower[name] = max(lower.get(name, 0), math.ceil(-g.const / c))
            else:
                bound = math.floor(g.const / -c)
                upper[name] = min(upper.get(name, bound), bound)
    return ParamFacts(lower, upper, moduli)


def _is_integral(expr: sympy.Expr, facts: ParamFacts) -> bool:
    """True si `expr` es entero en todo binding que cumple las divisibilidades."""
    expr = sympy.expand(expr)
    subs = {param_symbol(p): m * sympy.Symbol(f"_{p}_k", integer=True) for p, m in facts.moduli.items()}
    e = sympy.expand(expr.subs(subs))
    if not e.free_symbols:
        return bool(e.is_integer)
    try:
        poly = sympy.Poly(e, *sorted(e.free_symbols, key=str))
    except sympy.PolynomialError:
        return False
    return all(c.is_integer for c in poly.coeffs())


def _ceil(expr: sympy.Expr, facts: ParamFacts) -> sympy.Expr:
    expr = sympy.expand(expr)
    return expr if _is_integral(expr, facts) else ceiling(expr)


def _floor(expr: sympy.Expr, facts: ParamFacts) -> sympy.Expr:
    expr = sympy.expand(expr)
    return expr if _is_integral(expr, facts) else floor(expr)


def _rounding_slack(arg: sympy.Expr) -> sympy.Rational:
    """Mayor distancia entre `arg` y su floor (o ceiling); 1 si no se conoce."""
    num, den = sympy.fraction(sympy.together(arg))
    if not den.is_Integer:
        return sympy.Integer(1)
    try:
        poly = sympy.Poly(sympy.expand(num), *sorted(num.free_symbols, key=str)) if num.free_symbols else None
    except sympy.PolynomialError:
        return sympy.Integer(1)
    coeffs = poly.coeffs() if poly else [num]
    if not all(c.is_integer for c in coeffs):
        return sympy.Integer(1)
    return 1 - sympy.Rational(1, den)


class BoundProver:
    """Cotas inferiores de expresiones afines sobre un dominio resuelto en parte."""

    def __init__(self, facts: ParamFacts):
        self.facts = facts
        self.order: list[sympy.Symbol] = []
        self.lower: dict[sympy.Symbol, sympy.Expr] = {}
        self.upper: dict[sympy.Symbol, sympy.Expr] = {}

    def bind(self, sym: sympy.Symbol, lo: sympy.Expr, hi: sympy.Expr):
        self.order.append(sym)
        self.lower[sym] = lo
        self.upper[sym] = hi

    def _drop_rounding(self, e: sympy.Expr) -> sympy.Expr:
        e = sympy.expand(e)
        while True:
            atoms = e.atoms(floor, ceiling)
            if not atoms:
                return e
            top = next(a for a in atoms if not any(b != a and b.has(a) for b in atoms))
            c = e.coeff(top)
            rest = sympy.expand(e - c * top)
            if c == 0 or c.free_symbols or rest.has(top):
                raise _Unprovable
            arg = top.args[0]
            slack = _rounding_slack(arg)
            if top.func is floor:
                replacement = arg - slack if c > 0 else arg
            else:
                replacement = arg if c > 0 else arg + slack
            e = sympy.expand(rest + c * replacement)

    def _param_lower(self, e: sympy.Expr) -> sympy.Rational:
        if any(not s.is_nonnegative for s in e.free_symbols):
            raise _Unprovable
        if not e.free_symbols:
            return e
        params = sorted(e.free_symbols, key=str)
        shifts = [sympy.Dummy(nonnegative=True) for _ in params]
        lows = [self.facts.lower.get(p.name, 0) for p in params]
        shifted = sympy.expand(e.subs({p: lo + t for p, lo, t in zip(params, lows, shifts)}))
        try:
            poly = sympy.Poly(shifted, *shifts)
        except sympy.PolynomialError:
            raise _Unprovable
        bound = poly.coeff_monomial(1)
        for monom, coeff in poly.terms():
            if not any(monom) or coeff >= 0:
                continue
            if sum(monom) != 1:
                raise _Unprovable
            j = monom.index(1)
            hi = self.facts.upper.get(params[j].name)
            if hi is None:
                raise _Unprovable
            bound += coeff * (hi - lows[j])
        return bound

    def lower_bound(self, expr: sympy.Expr) -> sympy.Rational | None:
        try:
            e = self._drop_rounding(expr)
            for sym in reversed(self.order):
                c = e.coeff(sym)
                if c == 0:
                    continue
                if c.free_symbols or sympy.expand(e - c * sym).has(sym):
                    raise _Unprovable
                e = self._drop_rounding(e.subs(sym, self.lower[sym] if c > 0 else self.upper[sym]))
            return self._param_lower(e)
        except _Unprovable:
            return None

    def nonneg(self, expr: sympy.Expr) -> bool:
        bound = self.lower_bound(expr)
        return bound is not None and bound >= 0

    def pick(self, candidates: list[sympy.Expr], largest: bool, name: str) -> sympy.Expr:
        best = candidates[0]
        for cand in candidates[1:]:
            diff = sympy.expand(cand - best)
            if diff == 0:
                continue
            if self.nonneg(diff if largest else -diff):
                best = cand
            elif not self.nonneg(-diff if largest else diff):
                kind = "inferior" if largest else "superior"
                raise NeedsFallbackError(f"no se puede elegir la cota {kind} de '{name}' entre {best} y {cand}")
        return best


@dataclass(frozen=True)
class ResolvedDomain:
    """Un rango entero inclusivo por variable del dominio, de afuera hacia adentro."""

    symbols: tuple[sympy.Symbol, ...]
    lower: tuple[sympy.Expr, ...]
    upper: tuple[sympy.Expr, ...]
    facts: ParamFacts

    def bounds(self) -> dict[str, tuple[sympy.Expr, sympy.Expr]]:
        return {s.name: (lo, hi) for s, lo, hi in zip(self.symbols, self.lower, self.upper)}

    def prover(self) -> BoundProver:
        prover = BoundProver(self.facts)
        for s, lo, hi in zip(self.symbols, self.lower, self.upper):
            prover.bind(s, lo, hi)
        return prover


@lru_cache(maxsize=1024)
def resolve_domain(d: StmtDomain, assumptions: tuple[Assumption, ...] = ()) -> ResolvedDomain:
    facts = param_facts(tuple(assumptions))
    table = d.symbols()
    index = {v.name: i for i, v in enumerate(d.variables)}
    lowers = [[_ceil(v.lower.to_sympy(table), facts)] for v in d.variables]
    uppers = [[_ceil(v.upper.to_sympy(table), facts) - 1] for v in d.variables]

    prover = BoundProver(facts)
    for cond in d.guards:
        for g in cond.normalized():
            involved = [index[n] for n in g.variables if n in index]
            if not involved:
                if not prover.nonneg(g.to_sympy(table)):
                    raise NeedsFallbackError(f"la condición '{cond}' no se cumple siempre")
                continue
            i = max(involved)
            name = d.variables[i].name
            a = g.coeff(name)
            rest = (g - Affine.of({name: a})).to_sympy(table)
            if a > 0:
                lowers[i].append(_ceil(-rest / int(a), facts))
            else:
                uppers[i].append(_floor(rest / int(-a), facts))

    chosen_lo, chosen_hi = [], []
    for i, v in enumerate(d.variables):
        lo = prover.pick(lowers[i], largest=True, name=v.name)
        hi = prover.pick(uppers[i], largest=False, name=v.name)
        if not prover.nonneg(hi - lo + 1):
            raise NeedsFallbackError(f"no se puede probar que el rango de '{v.name}' es no vacío")
        prover.bind(table[v.name], lo, hi)
        chosen_lo.append(lo)
        chosen_hi.append(hi)
    return ResolvedDomain(tuple(table[v.name] for v in d.variables), tuple(chosen_lo), tuple(chosen_hi), facts)


def faulhaber_sum(expr: sympy.Expr, var: sympy.Symbol, lo: sympy.Expr, hi: sympy.Expr) -> sympy.Expr:
    """Forma cerrada de sum(expr, var = lo..hi), hi inclusivo y hi >= lo - 1."""
    if not expr.has(var):
        return sympy.expand(expr * (hi - lo + 1))
    result = sympy.summation(expr, (var, lo, hi))
    if result.has(sympy.Sum) or result.has(sympy.Piecewise):
        raise NeedsFallbackError(f"la suma sobre '{var}' no tiene forma cerrada")
    return sympy.expand(result)


def count_points(d: StmtDomain, assumptions: Sequence[Assumption] = ()) -> CountExpr:
    resolved = resolve_domain(d, tuple(assumptions))
    total = sympy.Integer(1)
    for sym, lo, hi in reversed(list(zip(resolved.symbols, resolved.lower, resolved.upper))):
        total = faulhaber_sum(total, sym, lo, hi)
    if any(not s.is_nonnegative for s in total.free_symbols):
        raise NeedsFallbackError(f"la cuenta depende de variables del dominio: {total}")
    return CountExpr.of(total)


@dataclass(frozen=True, eq=False)
class DomainPoints:
    columns: dict[str, np.ndarray]
    count: int


def affine_values(aff: Affine, binding: Mapping[str, int], columns: Mapping[str, np.ndarray],
                  size: int) -> tuple[np.ndarray, int]:
    """Numeradores exactos y denominador común de `aff` en cada punto."""
    den = aff.denominator
    num = np.full(size, int(aff.const * den), dtype=np.int64)
    for name, c in aff.terms:
        k = int(c * den)
        if name in columns:
            num = num + k * columns[name]
        elif name in binding:
            num = num + k * int(binding[name])
        else:
            raise UnboundParameterError(f"falta el valor de '{name}'")
    return num, den


def _ceil_values(aff, binding, columns, size) -> np.ndarray:
    num, den = affine_values(aff, binding, columns, size)
    return -((-num) // den)


def enumerate_domain(d: StmtDomain, binding: Mapping[str, int], cap: int = DEFAULT_CAP) -> DomainPoints:
    """Todos los puntos enteros de `d` en `binding`; `cap` limita los puntos antes de las guardas."""
    columns: dict[str, np.ndarray] = {}
    size = 1
    for var in d.variables:
        lo = _ceil_values(var.lower, binding, columns, size)
        hi = _ceil_values(var.upper, binding, columns, size)
        cnt = np.maximum(hi - lo, 0)
        total = int(cnt.sum())
        if total > cap:
            raise CapExceededError(f"el dominio de '{var.name}' tiene {total} puntos (límite {cap})")
        starts = np.cumsum(cnt) - cnt
        values = np.repeat(lo, cnt) + np.arange(total, dtype=np.int64) - np.repeat(starts, cnt)
        columns = {name: np.repeat(col, cnt) for name, col in columns.items()}
        columns[var.name] = values
        size = total
    mask = np.ones(size, dtype=bool)
    for cond in d.guards:
        for g in cond.normalized():
            num, _ = affine_values(g, binding, columns, size)
            mask &= num >= 0
    return DomainPoints({name: col[mask] for name, col in columns.items()}, int(mask.sum()))


@dataclass(frozen=True, eq=False)
class AccessSite:
    access: ArrayAccess
    stmt: Assign
    domain: StmtDomain
    direction: str


def array_accesses(k: KernelIR, array: str | None = None) -> list[AccessSite]:
    """Cada acceso (a `array` o a cualquier arreglo) con el dominio de su sentencia, en orden."""
    sites: list[AccessSite] = []
    for stmt, enclosing in iter_statements(k.body):
        if not isinstance(stmt, Assign):
            continue
        domain = _domain_from(k, enclosing)
        for access in loads_of(stmt):
            if array is None or access.array == array:
                sites.append(AccessSite(access, stmt, domain, "load"))
        if array is None or stmt.lhs.array == array:
            sites.append(AccessSite(stmt.lhs, stmt, domain, "store"))
    return sites


def _abs_expr(e: sympy.Expr) -> sympy.Expr:
    if e.is_nonnegative:
        return e
    if (-e).is_nonnegative:
        return -e
    return sympy.Abs(e)


def dim_strides(k: KernelIR, array: str) -> list[sympy.Expr]:
    decl = k.array(array)
    shape = [s.to_sympy({n: param_symbol(n) for n in s.variables}) for s in decl.shape]
    dims = range(len(shape)) if decl.layout == "column_major" else reversed(range(len(shape)))
    strides = [sympy.Integer(0)] * len(shape)
    acc = sympy.Integer(1)
    for d in dims:
        strides[d] = acc
        acc = sympy.expand(acc * shape[d])
    return strides


def lane_stride(k: KernelIR, access: ArrayAccess, binding: Mapping[str, int] | None = None):
    """|d dirección / d lane| en elementos: int si se conoce, si no una expresión en parámetros."""
    lane = k.lane_axis()
    if lane is None:
        return 0
    strides = dim_strides(k, access.array)
    coeff = sympy.expand(sum((int(idx.coeff(lane.name)) * s for idx, s in zip(access.index, strides)),
                             sympy.Integer(0)))
    value = _abs_expr(coeff)
    if binding is not None and not value.is_Integer:
        value = sympy.Integer(abs(CountExpr(coeff).evaluate(binding)))
    return int(value) if value.is_Integer else value


@dataclass(frozen=True)
class AxisImage:
    """{start + step*j + o : 0 <= j < count, o en offsets}"""

    start: sympy.Expr
    step: int
    count: sympy.Expr
    offsets: tuple[int, ...] = (0,)

    def size(self) -> sympy.Expr:
        if self.step == 0:
            return sympy.Integer(len(set(self.offsets)))
        total = sympy.Integer(0)
        classes: dict[int, list[int]] = {}
        for o in sorted(set(self.offsets)):
            classes.setdefault(o % self.step, []).append(o)
        for members in classes.values():
            total += self.count
            for a, b in zip(members, members[1:]):
                total += sympy.Min(self.count, (b - a) // self.step)
        return total

    def span(self) -> sympy.Expr:
        spread = max(self.offsets) - min(self.offsets)
        if self.step == 0:
            return sympy.Integer(spread + 1)
        return sympy.expand((self.count - 1) * self.step + spread + 1)

    def same_as(self, other: AxisImage) -> bool:
        return (self.step == other.step and self.offsets == other.offsets
                and sympy.expand(self.start - other.start) == 0
                and sympy.expand(self.count - other.count) == 0)


@dataclass(frozen=True, eq=False)
class Footprint:
    """Celdas distintas de un arreglo tocadas por un conjunto de accesos.

    Las huellas simbólicas son un producto de imágenes por dimensión; las
    concretas guardan las celdas distintas halladas en un binding.
    """

    array: str
    layout: str
    axes: tuple[AxisImage, ...] | None = None
    cells: np.ndarray | None = None
    lane_strides: tuple = ()

    @property
    def is_symbolic(self) -> bool:
        return self.axes is not None

    def size(self) -> CountExpr:
        if self.axes is None:
            return CountExpr.of(len(self.cells))
        return CountExpr.of(reduce(lambda a, b: a * b, (ax.size() for ax in self.axes), sympy.Integer(1)))


def _rat(value) -> sympy.Rational:
    return sympy.Rational(value.numerator, value.denominator)


def _access_image(k: KernelIR, site: AccessSite) -> tuple[AxisImage, ...]:
    resolved = resolve_domain(site.domain, k.assumptions)
    bounds = resolved.bounds()
    prover = resolved.prover()
    domain_syms = set(resolved.symbols)
    used: dict[str, int] = {}
    for d, idx in enumerate(site.access.index):
        for name in idx.variables & set(bounds):
            if used.setdefault(name, d) != d:
                raise NeedsBindingError(f"'{name}' aparece en más de una dimensión de '{site.access.array}'")
    for name, (lo, hi) in bounds.items():
        if name in used:
            if (lo.free_symbols | hi.free_symbols) & domain_syms:
                raise NeedsBindingError(f"el rango de '{name}' depende de otras variables")
        elif (lo.free_symbols | hi.free_symbols) & domain_syms and not prover.nonneg(hi - lo):
            raise NeedsBindingError(f"la proyección sobre los índices de '{site.access.array}' no es rectangular")

    images = []
    for idx in site.access.index:
        start = _rat(idx.const)
        terms: list[tuple[int, sympy.Expr]] = []
        for name, c in idx.terms:
            if name not in bounds:
                start += _rat(c) * param_symbol(name)
                continue
            lo, hi = bounds[name]
            if sympy.expand(hi - lo) == 0:
                start += _rat(c) * lo
                continue
            start += _rat(c) * (lo if c > 0 else hi)
            terms.append((abs(int(c)), sympy.expand(hi - lo + 1)))
        terms.sort(key=lambda t: t[0])
        if not terms:
            images.append(AxisImage(sympy.expand(start), 0, sympy.Integer(1)))
            continue
        step, count = terms[0]
        for c, extent in terms[1:]:
            ratio = c // step
            if c % step or not prover.nonneg(count - ratio):
                raise NeedsBindingError(f"la imagen de '{site.access.array}' tiene huecos")
            count = sympy.expand(count + ratio * (extent - 1))
        images.append(AxisImage(sympy.expand(start), step, count))
    return tuple(images)


def _symbolic_images(k: KernelIR, sites: Sequence[AccessSite]) -> tuple[AxisImage, ...]:
    unique: list[tuple[AxisImage, ...]] = []
    for site in sites:
        image = _access_image(k, site)
        if not any(all(a.same_as(b) for a, b in zip(image, u)) for u in unique):
            unique.append(image)
    if len(unique) == 1:
        return unique[0]
    base = unique[0]
    differing = [d for d in range(len(base)) if any(not img[d].same_as(base[d]) for img in unique)]
    if len(differing) != 1:
        raise NeedsBindingError("la unión de accesos difiere en más de una dimensión")
    d = differing[0]
    shifts = []
    for img in unique:
        ax = img[d]
        delta = sympy.expand(ax.start - base[d].start)
        if ax.step != base[d].step or sympy.expand(ax.count - base[d].count) != 0 or not delta.is_Integer:
            raise NeedsBindingError("la unión de accesos no es una traslación constante")
        shifts.append(int(delta))
    low = min(shifts)
    merged = AxisImage(sympy.expand(base[d].start + low), base[d].step, base[d].count,
                       tuple(sorted({s - low for s in shifts})))
    return base[:d] + (merged,) + base[d + 1:]


def footprint_cells(sites: Sequence[AccessSite], binding: Mapping[str, int], cap: int = DEFAULT_CAP) -> np.ndarray:
    """Celdas distintas (filas) tocadas por `sites` en `binding`."""
    rank = len(sites[0].access.index) if sites else 0
    blocks = [np.empty((0, rank), dtype=np.int64)]
    for site in sites:
        points = enumerate_domain(site.domain, binding, cap)
        cols = [affine_values(idx, binding, points.columns, points.count)[0] for idx in site.access.index]
        blocks.append(np.stack(cols, axis=1) if cols else np.empty((points.count, 0), dtype=np.int64))
    return np.unique(np.concatenate(blocks), axis=0)


def cell_fill(cells: np.ndarray, layout: str) -> int:
    """Celdas con los huecos de la dimensión más rápida rellenados."""
    if len(cells) == 0:
        return 0
    if cells.shape[1] == 0:
        return 1
    fast = cells.shape[1] - 1 if layout == "row_major" else 0
    others = np.delete(cells, fast, axis=1)
    n_other = len(np.unique(others, axis=0)) if others.shape[1] else 1
    span = int(cells[:, fast].max() - cells[:, fast].min()) + 1
    return n_other * span


def access_footprint(k: KernelIR, array: str, accesses: Sequence[AccessSite] | None = None,
                     binding: Mapping[str, int] | None = None, cap: int = DEFAULT_CAP) -> Footprint:
    sites = list(accesses) if accesses is not None else array_accesses(k, array)
    decl = k.array(array)
    strides = tuple(lane_stride(k, s.access) for s in sites)
    try:
        return Footprint(array, decl.layout, axes=_symbolic_images(k, sites), lane_strides=strides)
    except (NeedsBindingError, NeedsFallbackError) as e:
        if binding is None:
            raise NeedsBindingError(f"huella de '{array}': {e.message}") from e
        logger.debug("huella de %s por enumeración: %s", array, e.message)
        return Footprint(array, decl.layout, cells=footprint_cells(sites, binding, cap), lane_strides=strides)


def fill_footprint(f: Footprint) -> CountExpr:
    if f.axes is None:
        return CountExpr.of(cell_fill(f.cells, f.layout))
    fast = len(f.axes) - 1 if f.layout == "row_major" else 0
    total = f.axes[fast].span()
    for d, ax in enumerate(f.axes):
        if d != fast:
            total = total * ax.size()
    return CountExpr.of(total)

