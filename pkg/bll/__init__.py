"""Capa de lógica - conteo de propiedades de kernels y modelo lineal de tiempo."""
from .config import DEFAULT_CAP, GROUP_SIZE_SETS, R9_FURY_WEIGHTS, SCHEMA_VERSION, Settings, get_settings
from .device import SimDevice, enumerate_points, run_campaign, simulate_runs, simulate_time
from .errors import Diagnostic, KernelCostError
from .kernel_ir import KernelIR, infer_types, parse_kernel, print_kernel, validate
from .model import (
    ModelWeights,
    build_design_matrix,
    fit_weights,
    geometric_mean_error,
    predict,
    reduce_raw_runs,
)
from .props import PROPERTY_SCHEMA, PropertyVector, classify_access, evaluate_properties, extract_properties
from .suite import SuiteCase, measurement_kernels, suite_cases
from .symcount import CountExpr, access_footprint, count_points, fill_footprint

__all__ = [
    "DEFAULT_CAP",
    "GROUP_SIZE_SETS",
    "R9_FURY_WEIGHTS",
    "SCHEMA_VERSION",
    "Settings",
    "get_settings",
    "SimDevice",
    "enumerate_points",
    "run_campaign",
    "simulate_runs",
    "simulate_time",
    "Diagnostic",
    "KernelCostError",
    "KernelIR",
    "infer_types",
    "parse_kernel",
    "print_kernel",
    "validate",
    "ModelWeights",
    "build_design_matrix",
    "fit_weights",
    "geometric_mean_error",
    "predict",
    "reduce_raw_runs",
    "PROPERTY_SCHEMA",
    "PropertyVector",
    "classify_access",
    "evaluate_properties",
    "extract_properties",
    "SuiteCase",
    "measurement_kernels",
    "suite_cases",
    "CountExpr",
    "access_footprint",
    "count_points",
    "fill_footprint",
]
