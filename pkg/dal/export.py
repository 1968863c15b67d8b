from __future__ import annotations
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable

import pandas as pd


def _atomic_write(path: Path, write: Callable[[Path], None], force: bool = False):
    """Escribe en un archivo temporal hermano y lo renombra sobre `path`."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} ya existe (use --force para sobrescribir)")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def export_text(text: str, path: Path, force: bool = False):
    _atomic_write(path, lambda p: p.write_text(text, encoding="utf-8"), force)


def export_csv(df: pd.DataFrame, path: Path, force: bool = False, index: bool = False):
    _atomic_write(path, lambda p: df.to_csv(p, index=index), force)


def export_json(data: dict[str, Any], path: Path, force: bool = False, indent: int = 2):
    def convert(obj):
        if isinstance(obj, pd.DataFrame):
            return obj.to_dict(orient="records")
        if hasattr(obj, "tolist"):
            return obj.tolist()
        if hasattr(obj, "model_dump"):
            return obj.model_dump(mode="json")
        return str(obj)

    export_text(json.dumps(data, indent=indent, default=convert) + "\n", path, force)
