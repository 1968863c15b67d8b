"""Archivos JSON de pesos y de especificación de dispositivo."""
from __future__ import annotations
import logging
import math
from pathlib import Path

from pydantic import ValidationError

from bll.config import R9_FURY_WEIGHTS, SCHEMA_VERSION
from bll.device import SimDevice
from bll.errors import SchemaMismatchError
from bll.model import FitReport, ModelWeights
from bll.props import PROPERTY_SCHEMA

from .export import export_text
from .schemas import SCHEMA_MISMATCH, DeviceSpec, FitSummary, WeightsFile

logger = logging.getLogger(__name__)


def load_weights(path: Path | str) -> ModelWeights:
    try:
        data = WeightsFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        mismatch = [err["msg"] for err in e.errors() if err["type"] == SCHEMA_MISMATCH]
        if mismatch:
            raise SchemaMismatchError(f"{path}: {mismatch[0]}") from e
        raise ValueError(f"{path}: archivo de pesos inválido: {e}") from e
    if data.schema_version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"{path}: esquema '{data.schema_version}', se esperaba '{SCHEMA_VERSION}'")
    if not data.covered:
        return ModelWeights.from_mapping(data.device, data.weights, data.schema_version)
    return ModelWeights(
        data.device,
        {key: data.weights.get(key, 0.0) for key in PROPERTY_SCHEMA} | data.weights,
        {key: data.covered.get(key, False) for key in PROPERTY_SCHEMA} | data.covered,
        data.schema_version,
    )


def weights_file(weights: ModelWeights, report: FitReport | None = None) -> WeightsFile:
    fit = None
    if report is not None:
        fit = FitSummary(
            objective=report.objective,
            n_cases=report.n_cases,
            rank=report.rank,
            condition_number=report.condition_number if math.isfinite(report.condition_number) else None,
        )
    return WeightsFile(
        schema_version=weights.schema_version,
        device=weights.device,
        weights=dict(weights.weights),
        covered=dict(weights.covered),
        fit=fit,
    )


def save_weights(weights: ModelWeights, path: Path | str, report: FitReport | None = None,
                 force: bool = False):
    export_text(weights_file(weights, report).model_dump_json(indent=2) + "\n", path, force)


def load_device(path: Path | str | None = None, sigma: float | None = None,
                seed: int | None = None) -> SimDevice:
    """Dispositivo desde un archivo, o los pesos R9 Fury incluidos; `sigma`/`seed` los reemplazan."""
    if path is None:
        spec = DeviceSpec(weights=dict(R9_FURY_WEIGHTS))
    else:
        spec = DeviceSpec.model_validate_json(Path(path).read_text(encoding="utf-8"))
    logger.debug("dispositivo %s con %d pesos", spec.name, len(spec.weights))
    return SimDevice(
        name=spec.name,
        weights=spec.weights,
        sigma=spec.sigma if sigma is None else sigma,
        seed=spec.seed if seed is None else seed,
        first_touch=spec.first_touch,
    )
