"""Archivos CSV de mediciones.

Registros: kernel, binding, group_config, time_s (una fila por caso).
Corridas crudas: lo mismo más run_index; se reducen a registros al leer.
Los bindings se escriben como `m=512;n=1024` y los grupos como `16x12`.
"""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from bll.model import (
    RUN_KEYS,
    MeasurementRecord,
    format_binding,
    format_group,
    parse_binding,
    parse_group,
    reduce_raw_runs,
)

from .export import export_csv

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [*RUN_KEYS, "time_s"]
RAW_COLUMNS = [*RUN_KEYS, "run_index", "time_s"]


def records_frame(records: Sequence[MeasurementRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "kernel": r.kernel,
                "binding": format_binding(r.binding),
                "group_config": format_group(r.group),
                "time_s": r.time_s,
            }
            for r in records
        ],
        columns=RECORD_COLUMNS,
    )


def frame_records(df: pd.DataFrame) -> list[MeasurementRecord]:
    return [
        MeasurementRecord(str(row.kernel), parse_binding(row.binding), parse_group(row.group_config),
                          float(row.time_s))
        for row in df.itertuples(index=False)
    ]


def read_measurements(path: Path) -> list[MeasurementRecord]:
    df = pd.read_csv(path, dtype={"kernel": str, "binding": str, "group_config": str})
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: faltan columnas {', '.join(missing)}")
    if "run_index" in df.columns:
        logger.info("%s: %d corridas crudas, se reducen al mínimo tras el calentamiento", path, len(df))
        df = reduce_raw_runs(df)
    return frame_records(df)


def write_measurements(records: Sequence[MeasurementRecord], path: Path, force: bool = False):
    export_csv(records_frame(records), path, force)


def write_raw_runs(raw: pd.DataFrame, path: Path, force: bool = False):
    export_csv(raw[RAW_COLUMNS], path, force)
