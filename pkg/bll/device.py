"""Oráculo de enumeración y dispositivo de tiempos sintético.

`enumerate_points` visita cada punto entero de cada dominio y alimenta el
mismo conteo que el extractor simbólico, así ambos se comparan clave por
clave. `SimDevice` convierte vectores de propiedades en tiempos con el
modelo lineal y un ruido multiplicativo con clave.
"""
from __future__ import annotations
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from .config import DEFAULT_CAP, FIRST_TOUCH_FACTOR, R9_FURY_WEIGHTS, WARMUP_RUNS
from .errors import CapExceededError, KernelCostError, NonpositiveTimeError
from .kernel_ir import ArrayAccess, Assign, Barrier, KernelIR, infer_types
from .model import MeasurementRecord, format_binding, format_group
from .props import (
    PROPERTY_SCHEMA,
    PropertyVector,
    check_binding,
    extract_properties,
    properties_at,
    quantize,
    tally_properties,
)
from .symcount import (
    array_accesses,
    cell_fill,
    enumerate_domain,
    footprint_cells,
    group_domain,
    lane_stride,
    stmt_domain,
)

if TYPE_CHECKING:
    from .suite import SuiteCase

logger = logging.getLogger(__name__)

CASE_FAILED = "E_CASE_FAILED"


@dataclass(frozen=True)
class SimDevice:
    name: str = "r9-fury"
    weights: Mapping[str, float] = field(default_factory=lambda: dict(R9_FURY_WEIGHTS))
    sigma: float = 0.0
    seed: int = 0
    first_touch: float = FIRST_TOUCH_FACTOR

    def __post_init__(self):
        self._validate()

    def _validate(self):
        errors = []

        unknown = sorted(set(self.weights) - set(PROPERTY_SCHEMA))
        if unknown:
            errors.append(f"propiedades desconocidas: {', '.join(unknown)}")
        if not self.weights.get("launch.const", 0.0) > 0:
            errors.append("launch.const debe ser > 0")
        if self.sigma < 0:
            errors.append("sigma debe ser >= 0")
        if self.first_touch < 1:
            errors.append("first_touch debe ser >= 1")

        if errors:
            raise ValueError(f"Dispositivo inválido: {'; '.join(errors)}")

    def vector(self) -> np.ndarray:
        return np.array([self.weights.get(key, 0.0) for key in PROPERTY_SCHEMA])


class EnumerationSource:
    """Cuenta visitando cada punto; huellas a partir de las celdas distintas tocadas."""

    def __init__(self, k: KernelIR, binding: Mapping[str, int], cap: int = DEFAULT_CAP):
        self.k = k
        self.binding = dict(binding)
        self.cap = cap
        self.points = 0
        self._utilization: dict[str, tuple[int, int]] = {}

    def _enumerate(self, domain, where: str) -> int:
        try:
            count = enumerate_domain(domain, self.binding, self.cap).count
        except CapExceededError as e:
            raise CapExceededError(f"{where}: {e.message}") from e
        self.points += count
        return count

    def statement_count(self, stmt: Assign | Barrier) -> int:
        return self._enumerate(stmt_domain(self.k, stmt), f"línea {stmt.line}")

    def group_count(self) -> int:
        return enumerate_domain(group_domain(self.k), self.binding, self.cap).count

    def access_class(self, access: ArrayAccess, direction: str) -> str:
        stride = lane_stride(self.k, access, self.binding)
        if stride <= 1:
            return quantize(stride, Fraction(1))
        if access.array not in self._utilization:
            cells = footprint_cells(array_accesses(self.k, access.array), self.binding, self.cap)
            self._utilization[access.array] = (len(cells), cell_fill(cells, self.k.array(access.array).layout))
        size, fill = self._utilization[access.array]
        return quantize(stride, Fraction(size, fill) if fill else Fraction(1))


@dataclass(frozen=True)
class EnumTally:
    properties: PropertyVector
    points: int


def enumerate_points(k: KernelIR, binding: Mapping[str, int], cap: int = DEFAULT_CAP) -> EnumTally:
    check_binding(k.param_names, k.assumptions, binding)
    source = EnumerationSource(k, binding, cap)
    totals = tally_properties(k, infer_types(k), source)
    values = {key: int(v) for key, v in totals.items()}
    return EnumTally(PropertyVector(k.name, values, dict(binding), k.param_names, k.assumptions), source.points)


def _noise(dev: SimDevice, kernel: str, binding: Mapping[str, int], group, run: int | None) -> float:
    if dev.sigma == 0:
        return 1.0
    text = f"{kernel}|{sorted((p, int(v)) for p, v in binding.items())}|{group}|{run}"
    key = int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")
    rng = np.random.default_rng(np.random.SeedSequence(dev.seed, spawn_key=(key,)))
    return float(np.exp(dev.sigma * rng.standard_normal()))


def _model_time(dev: SimDevice, pv: PropertyVector) -> float:
    base = float(dev.vector() @ pv.as_array())
    if not base > 0:
        raise NonpositiveTimeError(f"{pv.kernel} {dict(pv.binding)}: tiempo modelado {base:.3e} <= 0")
    return base


def simulate_time(dev: SimDevice, k: KernelIR | str, binding: Mapping[str, int],
                  group: tuple[int, int] | None = None, cap: int = DEFAULT_CAP) -> float:
    """Tiempo con ruido de un lanzamiento; `k` puede ser un kernel o su plantilla."""
    pv = _bound_properties(k, binding, group, cap)
    return _model_time(dev, pv) * _noise(dev, pv.kernel, binding, group, None)


def simulate_runs(dev: SimDevice, k: KernelIR | str, binding: Mapping[str, int], runs: int = 30,
                  group: tuple[int, int] | None = None, cap: int = DEFAULT_CAP) -> list[float]:
    """Tiempos crudos de `runs` lanzamientos; la corrida 2 paga el primer acceso."""
    pv = _bound_properties(k, binding, group, cap)
    base = _model_time(dev, pv)
    times = []
    for run in range(1, runs + 1):
        t = base * _noise(dev, pv.kernel, binding, group, run)
        times.append(t * dev.first_touch if run == 2 else t)
    return times


def _bound_properties(k: KernelIR | str, binding, group, cap) -> PropertyVector:
    if isinstance(k, str):
        return properties_at(k, binding, group, cap)
    return extract_properties(k, binding, cap)


@dataclass(frozen=True)
class CaseError:
    kernel: str
    binding: Mapping[str, int]
    group: tuple[int, int]
    code: str
    message: str


@dataclass
class CampaignResult:
    records: list[MeasurementRecord] = field(default_factory=list)
    errors: list[CaseError] = field(default_factory=list)
    raw_runs: list[dict] = field(default_factory=list)

    def raw_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.raw_runs, columns=["kernel", "binding", "group_config", "run_index", "time_s"])


def _run_case(args: tuple[int, SimDevice, "SuiteCase", int | None, int]):
    index, dev, case, runs, cap = args
    try:
        if runs is None:
            return index, simulate_time(dev, case.source, case.binding, case.group, cap), None
        return index, simulate_runs(dev, case.source, case.binding, runs, case.group, cap), None
    except KernelCostError as e:
        return index, None, (e.code, e.message)
    except (ValueError, ArithmeticError, LookupError) as e:
        return index, None, (CASE_FAILED, f"{type(e).__name__}: {e}")


def run_campaign(
    dev: SimDevice,
    cases: Sequence["SuiteCase"],
    runs: int | None = None,
    max_workers: int = 1,
    cap: int = DEFAULT_CAP,
    on_progress: Callable[[int, int], None] | None = None,
) -> CampaignResult:
    """Simula cada caso; las fallas se vuelven filas CaseError, nunca excepciones."""
    tasks = [(i, dev, case, runs, cap) for i, case in enumerate(cases)]
    outcomes: dict[int, tuple] = {}
    total = len(tasks)

    if max_workers > 1 and total > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(_run_case, task) for task in tasks]
            for done, future in enumerate(as_completed(futures), start=1):
                index, value, error = future.result()
                outcomes[index] = (value, error)
                if on_progress:
                    on_progress(done, total)
    else:
        for done, task in enumerate(tasks, start=1):
            index, value, error = _run_case(task)
            outcomes[index] = (value, error)
            if on_progress:
                on_progress(done, total)

    result = CampaignResult()
    for index, case in enumerate(cases):
        value, error = outcomes[index]
        if error is not None:
            result.errors.append(CaseError(case.kernel_id, case.binding, case.group, *error))
            logger.info("caso %s %s falló: %s", case.kernel_id, dict(case.binding), error[1])
            continue
        if runs is None:
            result.records.append(MeasurementRecord(case.kernel_id, case.binding, case.group, value))
            continue
        for run_index, t in enumerate(value, start=1):
            result.raw_runs.append({
                "kernel": case.kernel_id,
                "binding": format_binding(case.binding),
                "group_config": format_group(case.group),
                "run_index": run_index,
                "time_s": t,
            })
        if runs > WARMUP_RUNS:
            result.records.append(MeasurementRecord(case.kernel_id, case.binding, case.group,
                                                    min(value[WARMUP_RUNS:])))
    return result

