"""Configuración y constantes del modelo de costo."""
from __future__ import annotations
from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

SCHEMA_VERSION = "1"
DEFAULT_CAP = 1_000_000
WARMUP_RUNS = 4
GEOMEAN_FLOOR = 1e-12
FIRST_TOUCH_FACTOR = 1.5

GROUP_SIZE_SETS: dict[str, tuple[tuple[int, int], ...]] = {
    "1-D Small": ((192, 1), (224, 1), (256, 1)),
    "1-D Med": ((128, 1), (256, 1), (384, 1)),
    "1-D Large": ((256, 1), (384, 1), (512, 1)),
    "2-D Small": ((16, 12), (16, 14), (16, 16)),
    "2-D Med": ((16, 12), (16, 16), (32, 16)),
    "2-D Large": ((16, 16), (24, 16), (32, 16)),
}

# Pesos ajustados para AMD Radeon R9 Fury (segundos por unidad).
R9_FURY_WEIGHTS: dict[str, float] = {
    "flop.f32.addsub": 6.81e-13,
    "flop.f32.mul": 5.68e-13,
    "flop.f32.pow": 3.91e-13,
    "flop.f32.special": 1.61e-12,
    "mem.local.load": -1.76e-12,
    "mem.global.load.s32.1/1": 8.27e-12,
    "mem.global.load.s32.2/2": 9.82e-13,
    "mem.global.load.s32.1/3": 2.89e-11,
    "mem.global.load.s32.3/3": 9.30e-13,
    "mem.global.load.s32.4/>4": 2.67e-12,
    "mem.global.store.s32.1/1": 6.52e-12,
    "mem.global.store.s32.4/>4": 3.55e-10,
    "mem.minls.s32.1/1": -6.63e-12,
    "sync.barrier": 4.26e-11,
    "launch.groups": 3.75e-09,
    "launch.const": 1.29e-04,
}

BUNDLED_SUITE_DIR = Path(__file__).resolve().parent.parent / "dal" / "suite" / "v1"


class Settings(BaseSettings):
    """Configuración leída de variables KERNELCOST_* o de `.env`."""

    suite_dir: Path | None = None
    enum_cap: int = DEFAULT_CAP
    seed: int = 0
    max_workers: int = 1
    log_level: str = "WARNING"

    model_config = SettingsConfigDict(
        env_prefix="KERNELCOST_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    def resolved_suite_dir(self) -> Path:
        return Path(self.suite_dir) if self.suite_dir else BUNDLED_SUITE_DIR


@lru_cache
def get_settings() -> Settings:
    """Obtener configuración (singleton)."""
    return Settings()
