"""Capa de acceso a datos - fuentes de kernels, mediciones y pesos."""
from .export import export_csv, export_json, export_text
from .kernels import kernel_sources, read_kernel_file
from .measurements import read_measurements, records_frame, write_measurements, write_raw_runs
from .weights import load_device, load_weights, save_weights

__all__ = [
    "export_csv",
    "export_json",
    "export_text",
    "kernel_sources",
    "read_kernel_file",
    "read_measurements",
    "records_frame",
    "write_measurements",
    "write_raw_runs",
    "load_device",
    "load_weights",
    "save_weights",
]
