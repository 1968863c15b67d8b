"""Esquemas de los archivos JSON que lee y escribe el toolkit."""
from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_core import PydanticCustomError

from bll.config import SCHEMA_VERSION
from bll.props import PROPERTY_SCHEMA


SCHEMA_MISMATCH = "schema_mismatch"


def _known_keys(value: dict) -> dict:
    unknown = sorted(set(value) - set(PROPERTY_SCHEMA))
    if unknown:
        raise PydanticCustomError(
            SCHEMA_MISMATCH, "propiedades fuera del esquema: {keys}", {"keys": ", ".join(unknown)})
    return value


class PropertyReportFile(BaseModel):
    """Salida de `count`: enteros exactos con binding, expresiones prefijas si es simbólico."""

    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    kernel: str
    binding: dict[str, int] | None = None
    properties: dict[str, int | str]

    @field_validator("properties")
    @classmethod
    def _schema_keys(cls, value: dict) -> dict:
        return _known_keys(value)


class FitSummary(BaseModel):
    objective: float = Field(ge=0)
    n_cases: int = Field(ge=1)
    rank: int = Field(ge=0)
    condition_number: float | None = None


class WeightsFile(BaseModel):
    """Salida de `fit`, entrada de `predict` y `eval`."""

    schema_version: str = SCHEMA_VERSION
    device: str
    weights: dict[str, float]
    covered: dict[str, bool] = {}
    fit: FitSummary | None = None

    @field_validator("weights", "covered")
    @classmethod
    def _schema_keys(cls, value: dict) -> dict:
        return _known_keys(value)


class DeviceSpec(BaseModel):
    """Dispositivo sintético: pesos del modelo lineal más la configuración de ruido."""

    name: str = "r9-fury"
    weights: dict[str, float]
    sigma: float = Field(0.0, ge=0)
    seed: int = 0
    first_touch: float = Field(1.5, ge=1)

    @field_validator("weights")
    @classmethod
    def _schema_keys(cls, value: dict) -> dict:
        return _known_keys(value)
