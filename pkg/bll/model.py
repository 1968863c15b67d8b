"""Modelo lineal de tiempo: pesos por dispositivo, ajuste y error de predicción.

El tiempo predicho es el producto escalar de los pesos con el vector de
propiedades. El ajuste minimiza el error relativo al cuadrado sobre los casos
de medición con mínimos cuadrados de norma mínima.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .config import GEOMEAN_FLOOR, SCHEMA_VERSION, WARMUP_RUNS
from .errors import (
    EmptyFitError,
    NonpositiveTimeError,
    SchemaMismatchError,
    TooFewRunsError,
)
from .props import N_PROPERTIES, PROPERTY_SCHEMA, PropertyVector, evaluate_properties

logger = logging.getLogger(__name__)

RUN_KEYS = ["kernel", "binding", "group_config"]


def format_binding(binding: Mapping[str, int]) -> str:
    """`{"n": 1024, "m": 512}` -> `"m=512;n=1024"`, nombres ordenados."""
    return ";".join(f"{p}={int(v)}" for p, v in sorted(binding.items()))


def parse_binding(text: str) -> dict[str, int]:
    binding = {}
    for part in filter(None, (s.strip() for s in str(text).split(";"))):
        name, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"binding inválido: '{text}'")
        binding[name.strip()] = int(value)
    return binding


def format_group(group: tuple[int, int]) -> str:
    return f"{group[0]}x{group[1]}"


def parse_group(text: str) -> tuple[int, int]:
    lx, sep, ly = str(text).partition("x")
    if not sep:
        raise ValueError(f"configuración de grupo inválida: '{text}'")
    return int(lx), int(ly)


@dataclass(frozen=True)
class ModelWeights:
    """Segundos por unidad de cada propiedad del esquema para un dispositivo."""

    device: str
    weights: Mapping[str, float]
    covered: Mapping[str, bool]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        unknown = sorted(set(self.weights) - set(PROPERTY_SCHEMA))
        if unknown:
            raise SchemaMismatchError(f"propiedades fuera del esquema: {', '.join(unknown)}")

    @classmethod
    def from_mapping(cls, device: str, weights: Mapping[str, float],
                     schema_version: str = SCHEMA_VERSION) -> ModelWeights:
        """Pesos para un subconjunto de claves; el resto queda en cero y sin cubrir."""
        unknown = sorted(set(weights) - set(PROPERTY_SCHEMA))
        if unknown:
            raise SchemaMismatchError(f"propiedades fuera del esquema: {', '.join(unknown)}")
        return cls(
            device,
            {key: float(weights.get(key, 0.0)) for key in PROPERTY_SCHEMA},
            {key: key in weights for key in PROPERTY_SCHEMA},
            schema_version,
        )

    def vector(self) -> np.ndarray:
        return np.array([self.weights.get(key, 0.0) for key in PROPERTY_SCHEMA])


@dataclass(frozen=True)
class MeasurementRecord:
    kernel: str
    binding: Mapping[str, int]
    group: tuple[int, int]
    time_s: float

    def __post_init__(self):
        if not self.time_s > 0:
            raise NonpositiveTimeError(f"{self.kernel} {dict(self.binding)}: tiempo {self.time_s} <= 0")


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    target: np.ndarray
    times: np.ndarray
    covered: np.ndarray


@dataclass(frozen=True)
class FitReport:
    objective: float
    residuals: np.ndarray
    rank: int
    condition_number: float
    uncovered: tuple[str, ...]
    n_cases: int
    singular_values: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def build_design_matrix(cases: Sequence[tuple[PropertyVector, float]]) -> DesignMatrix:
    if not cases:
        raise EmptyFitError("no hay casos para ajustar")
    props = np.vstack([pv.as_array() for pv, _ in cases])
    times = np.array([t for _, t in cases], dtype=float)
    if np.any(~(times > 0)):
        raise NonpositiveTimeError(f"{int(np.sum(~(times > 0)))} casos con tiempo <= 0")
    matrix = props / times[:, None]
    return DesignMatrix(matrix, np.ones(len(cases)), times, np.any(matrix != 0, axis=0))


def objective(alpha: np.ndarray, design: DesignMatrix) -> float:
    """suma sobre los casos de (1 - predicho/medido)**2"""
    r = design.target - design.matrix @ alpha
    return float(r @ r)


def fit_weights(design: DesignMatrix, device: str = "fitted") -> tuple[ModelWeights, FitReport]:
    cols = np.flatnonzero(design.covered)
    if cols.size == 0:
        raise EmptyFitError("todas las columnas son cero")

    # las columnas abarcan ~10 órdenes de magnitud; se equilibran antes del SVD
    a = design.matrix[:, cols]
    scale = np.linalg.norm(a, axis=0)
    solution, _, rank, singular = np.linalg.lstsq(a / scale, design.target, rcond=None)

    alpha = np.zeros(N_PROPERTIES)
    alpha[cols] = solution / scale
    value = objective(alpha, design)
    baseline = objective(np.zeros(N_PROPERTIES), design)
    if value > baseline:
        logger.warning("objetivo %.3e peor que el vector cero (%.3e)", value, baseline)
    if rank < cols.size:
        logger.info("diseño con rango %d de %d columnas; solución de norma mínima", rank, cols.size)

    weights = ModelWeights(
        device,
        {key: float(alpha[i]) for i, key in enumerate(PROPERTY_SCHEMA)},
        {key: bool(design.covered[i]) for i, key in enumerate(PROPERTY_SCHEMA)},
    )
    report = FitReport(
        objective=value,
        residuals=design.target - design.matrix @ alpha,
        rank=int(rank),
        condition_number=float(singular[0] / singular[-1]) if singular[-1] > 0 else float("inf"),
        uncovered=tuple(key for i, key in enumerate(PROPERTY_SCHEMA) if not design.covered[i]),
        n_cases=len(design.target),
        singular_values=singular,
    )
    return weights, report


@dataclass(frozen=True)
class Prediction:
    seconds: float
    contributions: dict[str, float]


def predict(weights: ModelWeights, pv: PropertyVector, binding: Mapping[str, int] | None = None) -> Prediction:
    if weights.schema_version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"pesos con esquema '{weights.schema_version}', se esperaba '{SCHEMA_VERSION}'")
    bound = pv if pv.is_bound else evaluate_properties(pv, binding or {})
    contributions: dict[str, float] = {}
    total = 0.0
    for key in PROPERTY_SCHEMA:
        count = bound[key]
        if count == 0:
            continue
        contributions[key] = weights.weights.get(key, 0.0) * count
        total += contributions[key]
    uncovered = [key for key in contributions if not weights.covered.get(key, False)]
    if uncovered:
        logger.warning("%s usa propiedades sin peso ajustado: %s", pv.kernel, ", ".join(uncovered))
    return Prediction(total, contributions)


def relative_errors(pairs: Sequence[tuple[float, float]]) -> np.ndarray:
    data = np.asarray(pairs, dtype=float).reshape(-1, 2)
    predicted, actual = data[:, 0], data[:, 1]
    if np.any(~(actual > 0)):
        raise NonpositiveTimeError("los tiempos reales deben ser > 0")
    return np.abs(predicted - actual) / actual


def geometric_mean_error(pairs: Sequence[tuple[float, float]]) -> float:
    """Media geométrica de |predicho - real| / real; los aciertos exactos cuentan como 1e-12."""
    errors = relative_errors(pairs)
    if errors.size == 0:
        raise EmptyFitError("no hay pares (predicho, real)")
    return float(stats.gmean(np.maximum(errors, GEOMEAN_FLOOR)))


@dataclass(frozen=True)
class ErrorReport:
    per_kernel: dict[str, float]
    cross_kernel: float
    cases: pd.DataFrame = field(repr=False)


def error_report(df: pd.DataFrame) -> ErrorReport:
    """`df` con columnas kernel, predicted_s, time_s; una media por kernel y luego entre kernels."""
    if df.empty:
        raise EmptyFitError("no hay casos para evaluar")
    cases = df.copy()
    cases["rel_error"] = relative_errors(cases[["predicted_s", "time_s"]].to_numpy())
    per_kernel = {
        str(kernel): geometric_mean_error(group[["predicted_s", "time_s"]].to_numpy())
        for kernel, group in cases.groupby("kernel", sort=True)
    }
    cross = float(stats.gmean(np.maximum(list(per_kernel.values()), GEOMEAN_FLOOR)))
    return ErrorReport(per_kernel, cross, cases)


def reduce_raw_runs(raw: pd.DataFrame, warmup: int = WARMUP_RUNS) -> pd.DataFrame:
    """Descarta las primeras `warmup` corridas de cada caso y se queda con la más rápida."""
    runs = raw.groupby(RUN_KEYS, sort=False).size()
    short = runs[runs <= warmup]
    if not short.empty:
        first = short.index[0]
        raise TooFewRunsError(
            f"{len(short)} casos con {warmup} corridas o menos (p. ej. {first[0]} {first[1]}: {short.iloc[0]})")
    ordered = raw.sort_values(RUN_KEYS + ["run_index"], kind="stable")
    kept = ordered[ordered.groupby(RUN_KEYS, sort=False).cumcount() >= warmup]
    return kept.groupby(RUN_KEYS, sort=False, as_index=False)["time_s"].min()
