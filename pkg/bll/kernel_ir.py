"""Representación intermedia de kernels: tipos, gramática de texto, parser,
impresión, validación estructural e inferencia de tipos.

Un kernel se escribe con una construcción por línea::

    kernel copy
    param n
    assume n >= 256 and n % 256 == 0
    array a : f32[n] global row_major in
    array out : f32[n] global row_major out
    axis g0 = group(0) extent n/256
    axis l0 = local(0) extent 256
    let i = g0*256 + l0
    guard i < n
      out[i] = a[i]
    end

Las extensiones de grupo y las cotas de loops son afines con coeficientes
racionales; una variable entera ``v`` declarada sobre ``lo .. hi`` toma los
valores ``ceil(lo) <= v < hi``.
"""
from __future__ import annotations
import ast
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from string import Template
from typing import Iterator, Mapping, Union

from .errors import (
    Diagnostic,
    KernelSyntaxError,
    KernelValidationError,
    NonAffineError,
    TypeConflictError,
)

DTYPES = ("f32", "f64", "i32")
DTYPE_BYTES = {"f32": 4, "f64": 8, "i32": 4}
SPACES = ("global", "local", "private")
LAYOUTS = ("row_major", "column_major")
INTENTS = ("in", "out", "inout", "temp")
SPECIAL_FUNCTIONS = frozenset({"rsqrt", "sqrt", "exp", "sin", "cos"})
CAST_FUNCTIONS = frozenset(DTYPES)
KNOWN_CALLS = SPECIAL_FUNCTIONS | CAST_FUNCTIONS | {"pow"}
COMPARISONS = ("<", "<=", ">", ">=", "==")
MAX_AXES_PER_ROLE = 3


@dataclass(frozen=True)
class Affine:
    """sum(coef * nombre) + const, coeficientes racionales, sin términos nulos."""

    terms: tuple[tuple[str, Fraction], ...] = ()
    const: Fraction = Fraction(0)

    @classmethod
    def of(cls, coeffs: Mapping[str, Fraction | int] | None = None, const: Fraction | int = 0) -> Affine:
        items = tuple(sorted((k, Fraction(v)) for k, v in (coeffs or {}).items() if v != 0))
        return cls(items, Fraction(const))

    @classmethod
    def var(cls, name: str) -> Affine:
        return cls.of({name: 1})

    @classmethod
    def constant(cls, value: Fraction | int) -> Affine:
        return cls.of({}, value)

    @property
    def coeffs(self) -> dict[str, Fraction]:
        return dict(self.terms)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.terms)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    @property
    def denominator(self) -> int:
        den = self.const.denominator
        for _, c in self.terms:
            den = math.lcm(den, c.denominator)
        return den

    def coeff(self, name: str) -> Fraction:
        return self.coeffs.get(name, Fraction(0))

    def __add__(self, other: Affine) -> Affine:
        merged = self.coeffs
        for k, v in other.terms:
            merged[k] = merged.get(k, Fraction(0)) + v
        return Affine.of(merged, self.const + other.const)

    def __neg__(self) -> Affine:
        return self.scale(-1)

    def __sub__(self, other: Affine) -> Affine:
        return self + (-other)

    def scale(self, factor: Fraction | int) -> Affine:
        f = Fraction(factor)
        return Affine.of({k: v * f for k, v in self.terms}, self.const * f)

    def substitute(self, mapping: Mapping[str, Affine]) -> Affine:
        result = Affine.constant(self.const)
        for name, c in self.terms:
            result = result + (mapping[name].scale(c) if name in mapping else Affine.of({name: c}))
        return result

    def evaluate(self, env: Mapping[str, int]) -> Fraction:
        return self.const + sum((c * env[name] for name, c in self.terms), Fraction(0))

    def to_sympy(self, symbols: Mapping[str, object]):
        import sympy

        expr = sympy.Rational(self.const.numerator, self.const.denominator)
        for name, c in self.terms:
            expr += sympy.Rational(c.numerator, c.denominator) * symbols[name]
        return expr

    def __str__(self) -> str:
        parts: list[str] = []
        for name, c in self.terms:
            parts.append(_term_text(name, c))
        if self.const != 0 or not parts:
            parts.append(_const_text(self.const))
        text = parts[0]
        for p in parts[1:]:
            text += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
        return text


def _const_text(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _term_text(name: str, c: Fraction) -> str:
    num, den = c.numerator, c.denominator
    head = name if num == 1 else f"-{name}" if num == -1 else f"{num}*{name}"
    return head if den == 1 else f"{head}/{den}"


@dataclass(frozen=True)
class Constraint:
    lhs: Affine
    op: str
    rhs: Affine

    def holds(self, env: Mapping[str, int]) -> bool:
        a, b = self.lhs.evaluate(env), self.rhs.evaluate(env)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b}[self.op]

    @property
    def variables(self) -> frozenset[str]:
        return self.lhs.variables | self.rhs.variables

    def normalized(self) -> list[Affine]:
        """Lista equivalente de afines G de coeficientes enteros con G >= 0."""
        diff = self.rhs - self.lhs
        diff = diff.scale(diff.denominator)
        one = Affine.constant(1)
        return {
            "<": [diff - one],
            "<=": [diff],
            ">": [-diff - one],
            ">=": [-diff],
            "==": [diff, -diff],
        }[self.op]

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class Congruence:
    """expr % modulus == residue"""

    expr: Affine
    modulus: int
    residue: int = 0

    def holds(self, env: Mapping[str, int]) -> bool:
        value = self.expr.evaluate(env)
        return value.denominator == 1 and value.numerator % self.modulus == self.residue

    @property
    def variables(self) -> frozenset[str]:
        return self.expr.variables

    def __str__(self) -> str:
        inner = str(self.expr)
        if len(self.expr.terms) != 1 or self.expr.const != 0 or self.expr.terms[0][1] != 1:
            inner = f"({inner})"
        return f"{inner} % {self.modulus} == {self.residue}"


Assumption = Union[Constraint, Congruence]


@dataclass(frozen=True, eq=False)
class Literal:
    value: float
    text: str
    is_float: bool


@dataclass(frozen=True, eq=False)
class VarRef:
    name: str


@dataclass(frozen=True, eq=False)
class AffineValue:
    """Valor entero de una expresión afín con alias usada a la derecha."""

    affine: Affine


@dataclass(frozen=True, eq=False)
class UnaryOp:
    op: str
    operand: "Expr"


@dataclass(frozen=True, eq=False)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, eq=False)
class Call:
    name: str
    args: tuple["Expr", ...]


@dataclass(frozen=True, eq=False)
class ArrayAccess:
    array: str
    index: tuple[Affine, ...]


Expr = Union[Literal, VarRef, AffineValue, UnaryOp, BinOp, Call, ArrayAccess]


@dataclass(frozen=True, eq=False)
class Loop:
    var: str
    lower: Affine
    upper: Affine
    body: tuple["Stmt", ...]
    line: int | None = None


@dataclass(frozen=True, eq=False)
class Guard:
    conditions: tuple[Constraint, ...]
    body: tuple["Stmt", ...]
    line: int | None = None


@dataclass(frozen=True, eq=False)
class Assign:
    lhs: ArrayAccess
    rhs: Expr
    line: int | None = None


@dataclass(frozen=True, eq=False)
class Barrier:
    line: int | None = None


Stmt = Union[Loop, Guard, Assign, Barrier]


@dataclass(frozen=True)
class ParamDecl:
    name: str
    line: int | None = None


@dataclass(frozen=True)
class ArrayDecl:
    name: str
    dtype: str
    shape: tuple[Affine, ...]
    space: str = "global"
    layout: str = "row_major"
    intent: str = "in"
    line: int | None = None

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def size_key(self) -> str:
        return f"s{DTYPE_BYTES[self.dtype] * 8}"


@dataclass(frozen=True)
class AxisDecl:
    name: str
    role: str
    index: int
    extent: Affine
    line: int | None = None


@dataclass(frozen=True)
class KernelIR:
    name: str
    params: tuple[ParamDecl, ...] = ()
    assumptions: tuple[Assumption, ...] = ()
    arrays: tuple[ArrayDecl, ...] = ()
    axes: tuple[AxisDecl, ...] = ()
    body: tuple[Stmt, ...] = ()

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def array(self, name: str) -> ArrayDecl:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    def group_axes(self) -> list[AxisDecl]:
        return sorted((a for a in self.axes if a.role == "group"), key=lambda a: a.index)

    def local_axes(self) -> list[AxisDecl]:
        return sorted((a for a in self.axes if a.role == "local"), key=lambda a: a.index)

    def lane_axis(self) -> AxisDecl | None:
        return next((a for a in self.axes if a.role == "local" and a.index == 0), None)

    def divisibility(self) -> dict[str, int]:
        """param -> módulo del que se sabe que es múltiplo."""
        result: dict[str, int] = {}
        for a in self.assumptions:
            if isinstance(a, Congruence) and a.residue == 0 and len(a.expr.terms) == 1 \
                    and a.expr.const == 0 and a.expr.terms[0][1] == 1:
                name = a.expr.terms[0][0]
                result[name] = math.lcm(result.get(name, 1), a.modulus)
        return result


def iter_statements(body: tuple[Stmt, ...], enclosing: tuple[Loop | Guard, ...] = ()
                    ) -> Iterator[tuple[Assign | Barrier, tuple[Loop | Guard, ...]]]:
    """Asignaciones y barreras en orden de programa, con sus loops y guardas."""
    for stmt in body:
        if isinstance(stmt, (Loop, Guard)):
            yield from iter_statements(stmt.body, enclosing + (stmt,))
        else:
            yield stmt, enclosing


def walk_expr(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, UnaryOp):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, BinOp):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from walk_expr(arg)


def loads_of(stmt: Assign) -> list[ArrayAccess]:
    return [e for e in walk_expr(stmt.rhs) if isinstance(e, ArrayAccess)]


_ARRAY_RE = re.compile(
    r"^array\s+(\w+)\s*:\s*(\w+)\s*\[(.*)\]\s+(\w+)\s+(\w+)\s+(\w+)$")
_AXIS_RE = re.compile(r"^axis\s+(\w+)\s*=\s*(group|local)\s*\(\s*(\d+)\s*\)\s+extent\s+(.+)$")
_LOOP_RE = re.compile(r"^loop\s+(\w+)\s*=\s*(.+?)\s*\.\.\s*(.+)$")
_LET_RE = re.compile(r"^let\s+(\w+)\s*=\s*(.+)$")
_IDENT_RE = re.compile(r"^[A-Za-z_]\w*$")

_AST_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/", ast.Pow: "**"}
_AST_CMPOPS = {ast.Lt: "<", ast.LtE: "<=", ast.Gt: ">", ast.GtE: ">=", ast.Eq: "=="}


def instantiate(source: str, group: tuple[int, int] | None = None) -> str:
    """Completa los marcadores ${lx}/${ly} de grupo de trabajo de una plantilla."""
    if group is None:
        return source
    lx, ly = group
    return Template(source).safe_substitute(lx=lx, ly=ly)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.lineno = 0
        self.aliases: list[dict[str, Affine]] = [{}]

    # -- auxiliares --
    def fail(self, message: str, column: int | None = None, cls=KernelSyntaxError):
        raise cls(message, line=self.lineno, column=column)

    def alias(self, name: str) -> Affine | None:
        for scope in reversed(self.aliases):
            if name in scope:
                return scope[name]
        return None

    def parse_ast(self, text: str, mode: str = "eval") -> ast.AST:
        try:
            tree = ast.parse(text.strip(), mode=mode)
        except SyntaxError as e:
            self.fail(f"no se pudo interpretar '{text.strip()}': {e.msg}", column=e.offset)
        return tree.body if mode == "eval" else tree

    def affine(self, node: ast.AST) -> Affine:
        if isinstance(node, ast.Name):
            aliased = self.alias(node.id)
            return aliased if aliased is not None else Affine.var(node.id)
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return Affine.constant(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self.affine(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, (ast.Add, ast.Sub)):
                left, right = self.affine(node.left), self.affine(node.right)
                return left + right if isinstance(node.op, ast.Add) else left - right
            if isinstance(node.op, ast.Mult):
                left, right = self.affine(node.left), self.affine(node.right)
                if left.is_constant:
                    return right.scale(left.const)
                if right.is_constant:
                    return left.scale(right.const)
            if isinstance(node.op, ast.Div):
                left, right = self.affine(node.left), self.affine(node.right)
                if right.is_constant and right.const != 0:
                    return left.scale(1 / right.const)
        self.fail(f"expresión no afín: '{ast.unparse(node)}'",
                  column=getattr(node, "col_offset", None), cls=NonAffineError)

    def affine_text(self, text: str) -> Affine:
        return self.affine(self.parse_ast(text))

    def conditions(self, text: str, allow_congruence: bool) -> list[Assumption]:
        result: list[Assumption] = []
        for part in re.split(r"\band\b", text):
            node = self.parse_ast(part)
            if not isinstance(node, ast.Compare):
                self.fail(f"se esperaba una comparación: '{part.strip()}'")
            operands = [node.left, *node.comparators]
            for op, left, right in zip(node.ops, operands, operands[1:]):
                if type(op) not in _AST_CMPOPS:
                    self.fail(f"comparador no soportado en '{part.strip()}'")
                cmp = _AST_CMPOPS[type(op)]
                if isinstance(left, ast.BinOp) and isinstance(left.op, ast.Mod):
                    if not allow_congruence or cmp != "==":
                        self.fail("'%' solo se permite en 'assume <expr> % <int> == <int>'")
                    modulus = self.affine(left.right)
                    residue = self.affine(right)
                    if not (modulus.is_constant and residue.is_constant and modulus.const > 0):
                        self.fail("módulo y residuo deben ser enteros constantes")
                    result.append(Congruence(self.affine(left.left), int(modulus.const), int(residue.const)))
                else:
                    result.append(Constraint(self.affine(left), cmp, self.affine(right)))
        return result

    def expr(self, node: ast.AST) -> Expr:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return Literal(float(node.value), ast.unparse(node), isinstance(node.value, float))
        if isinstance(node, ast.Name):
            aliased = self.alias(node.id)
            return AffineValue(aliased) if aliased is not None else VarRef(node.id)
        if isinstance(node, ast.Subscript):
            return self.access(node)
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.UAdd):
                return self.expr(node.operand)
            if isinstance(node.op, ast.USub):
                return UnaryOp("-", self.expr(node.operand))
        if isinstance(node, ast.BinOp) and type(node.op) in _AST_BINOPS:
            return BinOp(_AST_BINOPS[type(node.op)], self.expr(node.left), self.expr(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            return Call(node.func.id, tuple(self.expr(a) for a in node.args))
        self.fail(f"expresión no soportada: '{ast.unparse(node)}'",
                  column=getattr(node, "col_offset", None))

    def access(self, node: ast.Subscript) -> ArrayAccess:
        if not isinstance(node.value, ast.Name):
            self.fail("solo se puede indexar un arreglo por nombre")
        items = node.slice.elts if isinstance(node.slice, ast.Tuple) else [node.slice]
        index = tuple(self.affine(i) for i in items)
        if any(idx.denominator != 1 for idx in index):
            self.fail(f"índice con coeficientes fraccionarios en '{ast.unparse(node)}'",
                      column=node.col_offset, cls=NonAffineError)
        return ArrayAccess(node.value.id, index)

    # -- recorrido --
    def parse(self) -> KernelIR:
        name: str | None = None
        params: list[ParamDecl] = []
        assumptions: list[Assumption] = []
        arrays: list[ArrayDecl] = []
        axes: list[AxisDecl] = []
        # pila de (tipo, cabecera, cuerpo)
        stack: list[tuple[str, object, list]] = [("kernel", None, [])]

        for self.lineno, raw in enumerate(self.source.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            keyword = line.split(None, 1)[0]
            rest = line[len(keyword):].strip()
            if name is None:
                if keyword != "kernel" or not _IDENT_RE.match(rest):
                    self.fail("el kernel debe comenzar con 'kernel <nombre>'")
                name = rest
                continue
            if keyword == "param":
                for p in rest.split(","):
                    if not _IDENT_RE.match(p.strip()):
                        self.fail(f"nombre de parámetro inválido: '{p.strip()}'")
                    params.append(ParamDecl(p.strip(), self.lineno))
            elif keyword == "assume":
                assumptions.extend(self.conditions(rest, allow_congruence=True))
            elif keyword == "array":
                arrays.append(self.array_decl(line))
            elif keyword == "axis":
                axes.append(self.axis_decl(line))
            elif keyword == "let":
                m = _LET_RE.match(line)
                if not m:
                    self.fail("se esperaba 'let <id> = <afín>'")
                self.aliases[-1][m.group(1)] = self.affine_text(m.group(2))
            elif keyword == "loop":
                m = _LOOP_RE.match(line)
                if not m:
                    self.fail("se esperaba 'loop <id> = <afín> .. <afín>'")
                header = (m.group(1), self.affine_text(m.group(2)), self.affine_text(m.group(3)), self.lineno)
                stack.append(("loop", header, []))
                self.aliases.append({})
            elif keyword == "guard":
                conds = self.conditions(rest, allow_congruence=False)
                stack.append(("guard", (tuple(conds), self.lineno), []))
                self.aliases.append({})
            elif keyword == "barrier" and not rest:
                stack[-1][2].append(Barrier(self.lineno))
            elif keyword == "end" and not rest:
                if len(stack) == 1:
                    self.fail("'end' sin 'loop' o 'guard' abierto")
                kind, header, body = stack.pop()
                self.aliases.pop()
                if kind == "loop":
                    var, lo, hi, lineno = header
                    stack[-1][2].append(Loop(var, lo, hi, tuple(body), lineno))
                else:
                    conds, lineno = header
                    stack[-1][2].append(Guard(conds, tuple(body), lineno))
            else:
                stack[-1][2].append(self.assignment(line))

        if name is None:
            raise KernelSyntaxError("fuente vacía: falta 'kernel <nombre>'", line=1)
        if len(stack) != 1:
            self.lineno += 1
            self.fail(f"falta 'end' para el '{stack[-1][0]}' abierto")
        return KernelIR(name, tuple(params), tuple(assumptions), tuple(arrays), tuple(axes),
                        tuple(stack[0][2]))

    def array_decl(self, line: str) -> ArrayDecl:
        m = _ARRAY_RE.match(line)
        if not m:
            self.fail("se esperaba 'array <id> : <dtype>[<afín>,...] <espacio> <layout> <intent>'")
        name, dtype, shape, space, layout, intent = m.groups()
        for value, allowed in ((dtype, DTYPES), (space, SPACES), (layout, LAYOUTS), (intent, INTENTS)):
            if value not in allowed:
                self.fail(f"'{value}' no es uno de {', '.join(allowed)}")
        if not shape.strip():
            self.fail("los arreglos necesitan al menos una dimensión")
        dims = tuple(self.affine_text(s) for s in shape.split(","))
        return ArrayDecl(name, dtype, dims, space, layout, intent, self.lineno)

    def axis_decl(self, line: str) -> AxisDecl:
        m = _AXIS_RE.match(line)
        if not m:
            self.fail("se esperaba 'axis <id> = group(<k>)|local(<k>) extent <afín>'")
        name, role, index, extent = m.groups()
        return AxisDecl(name, role, int(index), self.affine_text(extent), self.lineno)

    def assignment(self, line: str) -> Assign:
        tree = self.parse_ast(line, mode="exec")
        if len(tree.body) != 1 or not isinstance(tree.body[0], ast.Assign) \
                or len(tree.body[0].targets) != 1 or not isinstance(tree.body[0].targets[0], ast.Subscript):
            self.fail(f"instrucción desconocida: '{line}'")
        stmt = tree.body[0]
        return Assign(self.access(stmt.targets[0]), self.expr(stmt.value), self.lineno)


def parse_kernel(source: str, *, check: bool = True) -> KernelIR:
    """Lee el texto de un kernel. Con `check`, los diagnósticos lanzan KernelValidationError."""
    kernel = _Parser(source).parse()
    if check:
        diagnostics = validate(kernel)
        if diagnostics:
            raise KernelValidationError(diagnostics)
    return kernel


def _expr_text(expr: Expr) -> str:
    if isinstance(expr, Literal):
        return expr.text
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, AffineValue):
        return f"({expr.affine})"
    if isinstance(expr, ArrayAccess):
        return f"{expr.array}[{', '.join(str(i) for i in expr.index)}]"
    if isinstance(expr, UnaryOp):
        return f"(-{_expr_text(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({_expr_text(expr.left)} {expr.op} {_expr_text(expr.right)})"
    return f"{expr.name}({', '.join(_expr_text(a) for a in expr.args)})"


def print_kernel(k: KernelIR) -> str:
    lines = [f"kernel {k.name}"]
    if k.params:
        lines.append(f"param {', '.join(k.param_names)}")
    if k.assumptions:
        lines.append(f"assume {' and '.join(str(a) for a in k.assumptions)}")
    for a in k.arrays:
        shape = ", ".join(str(s) for s in a.shape)
        lines.append(f"array {a.name} : {a.dtype}[{shape}] {a.space} {a.layout} {a.intent}")
    for ax in k.axes:
        lines.append(f"axis {ax.name} = {ax.role}({ax.index}) extent {ax.extent}")

    def emit(body: tuple[Stmt, ...], depth: int):
        pad = "  " * depth
        for stmt in body:
            if isinstance(stmt, Loop):
                lines.append(f"{pad}loop {stmt.var} = {stmt.lower} .. {stmt.upper}")
                emit(stmt.body, depth + 1)
                lines.append(f"{pad}end")
            elif isinstance(stmt, Guard):
                lines.append(f"{pad}guard {' and '.join(str(c) for c in stmt.conditions)}")
                emit(stmt.body, depth + 1)
                lines.append(f"{pad}end")
            elif isinstance(stmt, Barrier):
                lines.append(f"{pad}barrier")
            else:
                lines.append(f"{pad}{_expr_text(stmt.lhs)} = {_expr_text(stmt.rhs)}")

    emit(k.body, 0)
    return "\n".join(lines) + "\n"


@dataclass
class _Checker:
    kernel: KernelIR
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def report(self, code: str, message: str, line: int | None):
        self.diagnostics.append(Diagnostic(code, message, line))

    def check_names(self, names: frozenset[str], scope: set[str], what: str, line: int | None):
        for name in sorted(names - scope):
            self.report("E_UNDECLARED", f"'{name}' no está declarado ({what})", line)

    def run(self) -> list[Diagnostic]:
        k = self.kernel
        params = set(k.param_names)
        declared: dict[str, int | None] = {}
        for decl in (*k.params, *k.arrays, *k.axes):
            if decl.name in declared:
                self.report("E_DUPLICATE", f"identificador '{decl.name}' repetido", decl.line)
            declared[decl.name] = decl.line

        for a in k.assumptions:
            if a.variables - params:
                self.report("E_BAD_BOUND", f"'assume {a}' solo puede usar parámetros", None)

        for arr in k.arrays:
            for dim in arr.shape:
                if arr.space == "global":
                    if dim.variables - params:
                        self.report("E_BAD_BOUND", f"la forma de '{arr.name}' solo puede usar parámetros", arr.line)
                elif not dim.is_constant:
                    self.report("E_LOCAL_SHAPE_PARAM",
                                f"el arreglo {arr.space} '{arr.name}' necesita forma constante", arr.line)

        for role in ("group", "local"):
            axes = [ax for ax in k.axes if ax.role == role]
            indices = [ax.index for ax in axes]
            if len(axes) > MAX_AXES_PER_ROLE or len(set(indices)) != len(indices) \
                    or any(i >= MAX_AXES_PER_ROLE for i in indices):
                self.report("E_AXIS_LIMIT", f"ejes {role} inválidos: índices {sorted(indices)}", None)
        for ax in k.axes:
            if ax.role == "local":
                if not ax.extent.is_constant or ax.extent.const.denominator != 1 or ax.extent.const < 1:
                    self.report("E_LOCAL_EXTENT", f"el eje local '{ax.name}' necesita extensión entera", ax.line)
            elif ax.extent.variables - params:
                self.report("E_BAD_BOUND", f"la extensión de '{ax.name}' solo puede usar parámetros", ax.line)

        scope = params | {ax.name for ax in k.axes}
        self.check_body(k.body, scope, set(declared))
        return self.diagnostics

    def check_body(self, body: tuple[Stmt, ...], scope: set[str], declared: set[str]):
        for stmt in body:
            if isinstance(stmt, Loop):
                self.check_names(stmt.lower.variables | stmt.upper.variables, scope, "cota de loop", stmt.line)
                if stmt.var in declared or stmt.var in scope:
                    self.report("E_DUPLICATE", f"variable de loop '{stmt.var}' repetida", stmt.line)
                self.check_body(stmt.body, scope | {stmt.var}, declared)
            elif isinstance(stmt, Guard):
                for cond in stmt.conditions:
                    self.check_names(cond.variables, scope, "guard", stmt.line)
                self.check_body(stmt.body, scope, declared)
            elif isinstance(stmt, Assign):
                self.check_access(stmt.lhs, scope, stmt.line)
                if stmt.lhs.array in {a.name for a in self.kernel.arrays} \
                        and self.kernel.array(stmt.lhs.array).intent == "in":
                    self.report("E_WRITE_READONLY", f"'{stmt.lhs.array}' es de solo lectura", stmt.line)
                self.check_expr(stmt.rhs, scope, stmt.line)

    def check_access(self, access: ArrayAccess, scope: set[str], line: int | None):
        names = {a.name: a for a in self.kernel.arrays}
        if access.array not in names:
            self.report("E_UNDECLARED", f"arreglo '{access.array}' no declarado", line)
        elif names[access.array].rank != len(access.index):
            self.report("E_RANK_MISMATCH",
                        f"'{access.array}' tiene rango {names[access.array].rank}, "
                        f"se usaron {len(access.index)} índices", line)
        for idx in access.index:
            self.check_names(idx.variables, scope, f"índice de '{access.array}'", line)

    def check_expr(self, expr: Expr, scope: set[str], line: int | None):
        for node in walk_expr(expr):
            if isinstance(node, ArrayAccess):
                self.check_access(node, scope, line)
            elif isinstance(node, VarRef):
                self.check_names(frozenset({node.name}), scope, "expresión", line)
            elif isinstance(node, AffineValue):
                self.check_names(node.affine.variables, scope, "expresión", line)
            elif isinstance(node, Call):
                arity = 2 if node.name == "pow" else 1
                if node.name not in KNOWN_CALLS or len(node.args) != arity:
                    self.report("E_UNKNOWN_CALL", f"llamada desconocida '{node.name}/{len(node.args)}'", line)


def validate(k: KernelIR) -> list[Diagnostic]:
    """Problemas estructurales de `k`; vacío si el kernel está bien formado."""
    return _Checker(k).run()


_RANK = {"i32": 0, "f32": 1, "f64": 2}


def _widest(dtypes: list[str]) -> str:
    return max(dtypes, key=_RANK.__getitem__) if dtypes else "i32"


def _widest_float(dtypes: list[str]) -> str:
    floats = [d for d in dtypes if d != "i32"]
    return _widest(floats) if floats else "f32"


def infer_types(k: KernelIR) -> dict[Expr, str]:
    """dtype de cada nodo de expresión (por identidad)."""
    arrays = {a.name: a for a in k.arrays}
    types: dict[Expr, str] = {}

    def literal_type(lit: Literal, siblings: list[str]) -> str:
        if not lit.is_float and all(s == "i32" for s in siblings):
            return "i32"
        return _widest_float(siblings)

    def visit(expr: Expr) -> str:
        if isinstance(expr, ArrayAccess):
            t = arrays[expr.array].dtype
        elif isinstance(expr, (VarRef, AffineValue)):
            t = "i32"
        elif isinstance(expr, Literal):
            t = literal_type(expr, [])
        elif isinstance(expr, UnaryOp):
            t = visit(expr.operand)
        elif isinstance(expr, BinOp):
            t = _widest(visit_operands([expr.left, expr.right]))
        else:
            arg_types = visit_operands(list(expr.args))
            t = expr.name if expr.name in CAST_FUNCTIONS else _widest_float(arg_types)
        types[expr] = t
        return t

    def visit_operands(operands: list[Expr]) -> list[str]:
        known = {id(op): visit(op) for op in operands if not isinstance(op, Literal)}
        result = []
        for op in operands:
            if isinstance(op, Literal):
                types[op] = literal_type(op, list(known.values()))
                result.append(types[op])
            else:
                result.append(known[id(op)])
        return result

    for stmt, _ in iter_statements(k.body):
        if not isinstance(stmt, Assign):
            continue
        lhs_type = visit(stmt.lhs)
        rhs_type = visit(stmt.rhs)
        if _RANK[rhs_type] > _RANK[lhs_type]:
            raise TypeConflictError(
                f"asignar {rhs_type} a '{stmt.lhs.array}' ({lhs_type}) requiere conversión explícita",
                line=stmt.line)
    return types

