"""Kernels de medición y de prueba incluidos y los casos en que se corren.

Los tamaños siguen n = 2**(p + step*t); cada parámetro es `shape` por esa
base, redondeado hacia arriba a la cota inferior y la divisibilidad que
supone el kernel instanciado. Las configuraciones de grupo rotan.
"""
from __future__ import annotations
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Literal, Mapping

from pydantic import BaseModel, field_validator

from .config import GROUP_SIZE_SETS, SCHEMA_VERSION, get_settings
from .errors import KernelCostError, UnknownKernelError
from .kernel_ir import KernelIR, instantiate, parse_kernel
from .props import check_binding
from .symcount import param_facts

logger = logging.getLogger(__name__)

ROLES = ("measurement", "test")
MANIFEST_NAME = "manifest.json"


class SizeSchedule(BaseModel):
    p: int
    step: int = 1
    t: list[int]

    def bases(self) -> list[int]:
        return [2 ** (self.p + self.step * t) for t in self.t]


class ManifestEntry(BaseModel):
    source: str
    role: Literal["measurement", "test"]
    group_set: str
    sizes: SizeSchedule
    shape: dict[str, str] = {"n": "1"}
    sweep: dict[str, list[int]] = {}

    @field_validator("group_set")
    @classmethod
    def _known_group_set(cls, value: str) -> str:
        if value not in GROUP_SIZE_SETS:
            raise ValueError(f"conjunto de grupos desconocido: '{value}'")
        return value

    @field_validator("shape")
    @classmethod
    def _positive_factors(cls, value: dict[str, str]) -> dict[str, str]:
        for name, factor in value.items():
            if Fraction(factor) <= 0:
                raise ValueError(f"factor de forma de '{name}' debe ser > 0")
        return value


class SuiteManifest(BaseModel):
    version: str
    kernels: dict[str, ManifestEntry]


@dataclass(frozen=True)
class SuiteCase:
    kernel_id: str
    binding: Mapping[str, int]
    group: tuple[int, int]
    role: str = "measurement"
    source: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        errors = []

        if self.role not in ROLES:
            errors.append(f"rol desconocido '{self.role}'")
        if len(self.group) != 2 or any(g < 1 for g in self.group):
            errors.append(f"configuración de grupo inválida {self.group}")
        negative = [p for p, v in self.binding.items() if int(v) < 0]
        if negative:
            errors.append(f"parámetros negativos: {', '.join(negative)}")

        if errors:
            raise ValueError(f"Caso inválido ({self.kernel_id}): {'; '.join(errors)}")

    def kernel(self) -> KernelIR:
        return _parse_instance(self.source, self.group)


@dataclass(frozen=True)
class SuiteKernel:
    kernel_id: str
    source: str = field(repr=False)
    entry: ManifestEntry

    @property
    def role(self) -> str:
        return self.entry.role

    @property
    def groups(self) -> tuple[tuple[int, int], ...]:
        return GROUP_SIZE_SETS[self.entry.group_set]

    def kernel(self, group: tuple[int, int] | None = None) -> KernelIR:
        return _parse_instance(self.source, group or self.groups[0])

    def bindings(self) -> list[dict[str, int]]:
        """Bindings sin redondear: cada base de tamaño cruzada con cada valor barrido."""
        swept = sorted(self.entry.sweep.items())
        result = []
        for base in self.entry.sizes.bases():
            sized = {p: math.ceil(Fraction(f) * base) for p, f in self.entry.shape.items()}
            for values in itertools.product(*(v for _, v in swept)):
                result.append({**sized, **{name: v for (name, _), v in zip(swept, values)}})
        return result

    def cases(self, all_groups: bool = False) -> list[SuiteCase]:
        cases = []
        for i, raw in enumerate(self.bindings()):
            groups = self.groups if all_groups else (self.groups[i % len(self.groups)],)
            for group in groups:
                binding = admissible_binding(self.kernel(group), raw)
                cases.append(SuiteCase(self.kernel_id, binding, group, self.role, self.source))
        return cases


@lru_cache(maxsize=512)
def _parse_instance(source: str, group: tuple[int, int]) -> KernelIR:
    return parse_kernel(instantiate(source, group))


def admissible_binding(k: KernelIR, binding: Mapping[str, int]) -> dict[str, int]:
    """Sube cada parámetro a su cota inferior supuesta y luego a un múltiplo de su módulo."""
    facts = param_facts(k.assumptions)
    result = {}
    for name in k.param_names:
        value = max(int(binding[name]), facts.lower.get(name, 0))
        modulus = facts.moduli.get(name, 1)
        result[name] = -(-value // modulus) * modulus
    check_binding(k.param_names, k.assumptions, result)
    return result


def suite_dir(path: Path | str | None = None) -> Path:
    return Path(path) if path is not None else get_settings().resolved_suite_dir()


@lru_cache(maxsize=8)
def _load_manifest(path: Path) -> SuiteManifest:
    manifest = SuiteManifest.model_validate_json(path.read_text(encoding="utf-8"))
    if manifest.version != SCHEMA_VERSION:
        logger.warning("manifiesto versión %s, esquema de propiedades %s", manifest.version, SCHEMA_VERSION)
    return manifest


def load_manifest(path: Path | str | None = None) -> SuiteManifest:
    return _load_manifest(suite_dir(path) / MANIFEST_NAME)


def suite_kernels(role: str | None = None, path: Path | str | None = None) -> list[SuiteKernel]:
    root = suite_dir(path)
    manifest = load_manifest(root)
    kernels = []
    for kernel_id, entry in manifest.kernels.items():
        if role is not None and entry.role != role:
            continue
        source = (root / entry.source).read_text(encoding="utf-8")
        kernels.append(SuiteKernel(kernel_id, source, entry))
    return kernels


def suite_kernel(kernel_id: str, path: Path | str | None = None) -> SuiteKernel:
    for sk in suite_kernels(path=path):
        if sk.kernel_id == kernel_id:
            return sk
    raise UnknownKernelError(f"el kernel '{kernel_id}' no está en la suite")


def load_suite_kernel(kernel_id: str, group: tuple[int, int] | None = None,
                      path: Path | str | None = None) -> KernelIR:
    return suite_kernel(kernel_id, path).kernel(group)


def _role_kernels(role: str, path) -> list[tuple[KernelIR, list[SuiteCase]]]:
    result = []
    for sk in suite_kernels(role, path):
        try:
            result.append((sk.kernel(), sk.cases()))
        except KernelCostError:
            logger.error("kernel de la suite '%s' inválido", sk.kernel_id)
            raise
    return result


def measurement_kernels(path: Path | str | None = None) -> list[tuple[KernelIR, list[SuiteCase]]]:
    """Kernels de medición (instanciados con su primera configuración de grupo) y sus casos."""
    return _role_kernels("measurement", path)


def test_kernels(path: Path | str | None = None) -> list[tuple[KernelIR, list[SuiteCase]]]:
    return _role_kernels("test", path)


def suite_cases(role: str | None = None, path: Path | str | None = None,
                all_groups: bool = False) -> list[SuiteCase]:
    cases = []
    for sk in suite_kernels(role, path):
        cases.extend(sk.cases(all_groups))
    return cases

