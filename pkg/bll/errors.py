from __future__ import annotations
from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.code}: {where}{self.message}"


class KernelCostError(ValueError):
    """Error base. `code` es estable y aparece en la salida de la CLI y en los reportes."""

    code = "E_KERNELCOST"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(f"{self.code}: {message}{where}")


class KernelSyntaxError(KernelCostError):
    code = "E_SYNTAX"


class NonAffineError(KernelSyntaxError):
    code = "E_NON_AFFINE"


class KernelValidationError(KernelCostError):
    code = "E_INVALID_KERNEL"

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class TypeConflictError(KernelCostError):
    code = "E_TYPE_CONFLICT"


class NeedsFallbackError(KernelCostError):
    code = "E_NEEDS_FALLBACK"


class NeedsBindingError(KernelCostError):
    code = "E_NEEDS_BINDING"


class AssumptionViolatedError(KernelCostError):
    code = "E_ASSUMPTION_VIOLATED"


class UnboundParameterError(KernelCostError):
    code = "E_UNBOUND_PARAM"


class SchemaMismatchError(KernelCostError):
    code = "E_SCHEMA_MISMATCH"


class NonpositiveTimeError(KernelCostError):
    code = "E_NONPOSITIVE_TIME"


class EmptyFitError(KernelCostError):
    code = "E_EMPTY"


class CapExceededError(KernelCostError):
    code = "E_CAP_EXCEEDED"


class TooFewRunsError(KernelCostError):
    code = "E_TOO_FEW_RUNS"


class UnknownKernelError(KernelCostError):
    code = "E_UNKNOWN_KERNEL"
