from __future__ import annotations
from pathlib import Path

from bll.suite import MANIFEST_NAME, suite_dir, suite_kernels


def read_kernel_file(path: Path | str) -> str:
    return Path(path).read_text(encoding="utf-8")


def kernel_sources(kernels_dir: Path | str | None = None) -> dict[str, str]:
    """Id de kernel -> plantilla.

    Un directorio con manifiesto se lee como suite; cualquier otro aporta un
    kernel por archivo `*.knl`, nombrado como el archivo.
    """
    root = suite_dir(kernels_dir)
    if (root / MANIFEST_NAME).exists():
        return {sk.kernel_id: sk.source for sk in suite_kernels(path=root)}
    if not root.is_dir():
        raise FileNotFoundError(f"{root} no es un directorio de kernels")
    return {p.stem: read_kernel_file(p) for p in sorted(root.glob("*.knl"))}

