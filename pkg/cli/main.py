"""Línea de comandos de kernelcost.

Códigos de salida: 0 ok, 1 uso o E/S (incluye negarse a sobrescribir),
2 errores de kernel o de entrada, 3 falta un binding, 4 esquema distinto.
stdout lleva solo datos; diagnósticos y progreso van a stderr.
"""
from __future__ import annotations
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

import pandas as pd
import typer
from tqdm import tqdm

from bll.config import DEFAULT_CAP, get_settings
from bll.device import run_campaign
from bll.errors import (
    KernelCostError,
    KernelValidationError,
    NeedsBindingError,
    SchemaMismatchError,
    UnknownKernelError,
)
from bll.kernel_ir import KernelIR, instantiate, parse_kernel
from bll.model import build_design_matrix, error_report, fit_weights, format_group, parse_group, predict
from bll.props import extract_properties, properties_at, property_report
from bll.suite import MANIFEST_NAME, ROLES, SuiteManifest, load_manifest, suite_cases, suite_dir, suite_kernel
from bll.symcount import access_footprint, fill_footprint
from dal.export import export_json, export_text
from dal.kernels import kernel_sources, read_kernel_file
from dal.measurements import read_measurements, write_measurements, write_raw_runs
from dal.schemas import PropertyReportFile
from dal.weights import load_device, load_weights, save_weights

logger = logging.getLogger("kernelcost")

EXIT_USAGE = 1
EXIT_KERNEL = 2
EXIT_NEEDS_BINDING = 3
EXIT_SCHEMA = 4

COMMANDS = ("count", "footprint", "fit", "predict", "simulate", "eval", "suite emit")

app = typer.Typer(help="Conteo paramétrico de propiedades de kernels y modelo lineal de tiempo.",
                  no_args_is_help=True, add_completion=False)
suite_app = typer.Typer(help="Suite de kernels incluida.", no_args_is_help=True)
app.add_typer(suite_app, name="suite")


class OutputFormat(str, Enum):
    json = "json"
    pretty = "pretty"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: tuple[Path, ...] = ()
    binding: dict[str, int] = field(default_factory=dict)
    device: Path | None = None
    output: Path | None = None
    seed: int = 0
    cap: int = DEFAULT_CAP
    fmt: OutputFormat = OutputFormat.json
    force: bool = False

    def __post_init__(self):
        self._validate()

    def _validate(self):
        errors = []

        if self.subcommand not in COMMANDS:
            errors.append(f"subcomando desconocido '{self.subcommand}'")
        if self.cap < 1:
            errors.append("--cap debe ser >= 1")
        for path in self.inputs:
            if not Path(path).exists():
                errors.append(f"no existe {path}")
        if self.device is not None and not Path(self.device).exists():
            errors.append(f"no existe {self.device}")
        if self.output is not None and Path(self.output).exists() and not self.force:
            errors.append(f"{self.output} ya existe (use --force para sobrescribir)")

        if errors:
            raise UsageError("; ".join(errors))


@dataclass
class GlobalOptions:
    seed: int
    cap: int
    fmt: OutputFormat
    force: bool

    def run_config(self, subcommand: str, **kwargs) -> RunConfig:
        return RunConfig(subcommand, seed=self.seed, cap=self.cap, fmt=self.fmt, force=self.force, **kwargs)


@app.callback()
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", help="Semilla del ruido simulado."),
    cap: Optional[int] = typer.Option(None, "--cap", help="Máximo de puntos a enumerar por dominio."),
    fmt: OutputFormat = typer.Option(OutputFormat.json, "--format", help="json para scripts, pretty para leer."),
    force: bool = typer.Option(False, "--force", help="Sobrescribir archivos de salida."),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING..."),
):
    settings = get_settings()
    logging.basicConfig(
        level=(log_level or settings.log_level).upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = GlobalOptions(
        seed=settings.seed if seed is None else seed,
        cap=settings.enum_cap if cap is None else cap,
        fmt=fmt,
        force=force,
    )


@contextmanager
def _exit_codes() -> Iterator[None]:
    try:
        yield
    except KernelValidationError as e:
        for d in e.diagnostics:
            typer.echo(str(d), err=True)
        raise typer.Exit(EXIT_KERNEL)
    except NeedsBindingError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(EXIT_NEEDS_BINDING)
    except SchemaMismatchError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(EXIT_SCHEMA)
    except KernelCostError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(EXIT_KERNEL)
    except (UsageError, OSError) as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(EXIT_USAGE)
    except ValueError as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(EXIT_KERNEL)


def _parse_bind(values: list[str]) -> dict[str, int]:
    """`["n=1024", "m=8,l=4"]` -> {"n": 1024, "m": 8, "l": 4}"""
    binding: dict[str, int] = {}
    for value in values:
        for part in filter(None, (s.strip() for s in value.split(","))):
            name, _, number = part.partition("=")
            if not name.strip() or not number.strip().lstrip("-").isdigit():
                raise UsageError(f"--bind espera nombre=entero, no '{part}'")
            binding[name.strip()] = int(number)
    return binding


def _parse_group(text: str | None) -> tuple[int, int] | None:
    if text is None:
        return None
    try:
        return parse_group(text)
    except ValueError as e:
        raise UsageError(f"--group espera LXxLY, p. ej. 16x12: {e}") from e


def _load_kernel(kernel: str, group: tuple[int, int] | None) -> KernelIR:
    """`kernel` es una ruta .knl o el id de un kernel de la suite."""
    path = Path(kernel)
    if path.exists():
        source = read_kernel_file(path)
        if group is None and "${" in source:
            raise UsageError(f"{kernel} es una plantilla; indique --group LXxLY")
        return parse_kernel(instantiate(source, group))
    return suite_kernel(kernel).kernel(group)


def _emit(data: dict, opts: GlobalOptions, rows: list[tuple[str, object]], output: Path | None = None):
    if output is not None:
        export_json(data, output, force=opts.force)
        return
    if opts.fmt is OutputFormat.json:
        typer.echo(json.dumps(data, indent=2, default=str))
        return
    width = max((len(label) for label, _ in rows), default=0)
    for label, value in rows:
        typer.echo(f"{label:<{width}}  {value}")


def _progress(total: int, desc: str) -> tqdm:
    return tqdm(total=total, desc=desc, unit="caso", file=sys.stderr, disable=None, leave=False)


def _bound_properties(sources: dict[str, str], records, cap: int, desc: str):
    unknown = sorted({r.kernel for r in records} - set(sources))
    if unknown:
        raise UnknownKernelError(f"kernels sin fuente: {', '.join(unknown)}")
    result = []
    with _progress(len(records), desc) as bar:
        for r in records:
            result.append(properties_at(sources[r.kernel], r.binding, r.group, cap))
            bar.update()
    return result


@app.command()
def count(
    ctx: typer.Context,
    kernel: str = typer.Argument(..., help="Archivo .knl o id de la suite."),
    bind: list[str] = typer.Option([], "--bind", "-b", help="Valores de parámetros, p. ej. n=1024."),
    group: Optional[str] = typer.Option(None, "--group", "-g", help="Grupo LXxLY para plantillas."),
    output: Optional[Path] = typer.Option(None, "--output", "-o"),
):
    """Propiedades del kernel: exactas con --bind, simbólicas sin él."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("count", binding=_parse_bind(bind), output=output)
        k = _load_kernel(kernel, _parse_group(group))
        pv = extract_properties(k, cfg.binding or None, cfg.cap)
        report = PropertyReportFile.model_validate(property_report(pv)).model_dump(exclude_none=True)
        rows = [(key, value) for key, value in report["properties"].items() if value not in (0, "0")]
        _emit(report, opts, rows, cfg.output)


@app.command()
def footprint(
    ctx: typer.Context,
    kernel: str = typer.Argument(..., help="Archivo .knl o id de la suite."),
    array: str = typer.Argument(...),
    bind: list[str] = typer.Option([], "--bind", "-b"),
    group: Optional[str] = typer.Option(None, "--group", "-g"),
):
    """Celdas distintas de ARRAY tocadas por el kernel y su relleno por stride."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("footprint", binding=_parse_bind(bind))
        k = _load_kernel(kernel, _parse_group(group))
        if array not in {a.name for a in k.arrays}:
            raise UsageError(f"{k.name} no declara el arreglo '{array}'")
        f = access_footprint(k, array, binding=cfg.binding or None, cap=cfg.cap)
        size, fill = f.size(), fill_footprint(f)
        data = {"kernel": k.name, "array": array, "symbolic": f.is_symbolic,
                "lane_strides": [str(s) for s in f.lane_strides]}
        if cfg.binding:
            data["binding"] = cfg.binding
            data["size"], data["fill"] = size.evaluate(cfg.binding), fill.evaluate(cfg.binding)
            data["utilization"] = data["size"] / data["fill"] if data["fill"] else None
        else:
            data["size"], data["fill"] = size.to_prefix(), fill.to_prefix()
        _emit(data, opts, [(key, value) for key, value in data.items()])


@app.command()
def fit(
    ctx: typer.Context,
    measurements: Path = typer.Argument(..., help="CSV de mediciones (o de corridas crudas)."),
    output: Path = typer.Option(..., "--output", "-o", help="Archivo de pesos a escribir."),
    kernels: Optional[Path] = typer.Option(None, "--kernels", help="Directorio de kernels (por defecto la suite)."),
    device: str = typer.Option("fitted", "--device", help="Nombre del dispositivo en el archivo de pesos."),
):
    """Ajusta los pesos del modelo lineal minimizando el error relativo."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("fit", inputs=(measurements,), output=output)
        records = read_measurements(measurements)
        pvs = _bound_properties(kernel_sources(kernels), records, cfg.cap, "propiedades")
        design = build_design_matrix([(pv, r.time_s) for pv, r in zip(pvs, records)])
        weights, report = fit_weights(design, device)
        save_weights(weights, output, report, force=cfg.force)
        data = {
            "weights": str(output),
            "n_cases": report.n_cases,
            "objective": report.objective,
            "rank": report.rank,
            "condition_number": report.condition_number,
            "uncovered": len(report.uncovered),
        }
        _emit(data, opts, list(data.items()))


@app.command("predict")
def predict_cmd(
    ctx: typer.Context,
    kernel: str = typer.Argument(..., help="Archivo .knl o id de la suite."),
    weights: Path = typer.Option(..., "--weights", "-w"),
    bind: list[str] = typer.Option([], "--bind", "-b"),
    group: Optional[str] = typer.Option(None, "--group", "-g"),
    breakdown: bool = typer.Option(False, "--breakdown", help="Aporte de cada propiedad."),
):
    """Tiempo predicho (segundos) del kernel en un binding."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("predict", inputs=(weights,), binding=_parse_bind(bind))
        model = load_weights(weights)
        k = _load_kernel(kernel, _parse_group(group))
        pv = extract_properties(k, cfg.binding, cfg.cap)
        prediction = predict(model, pv)
        data: dict = {"kernel": k.name, "device": model.device, "binding": cfg.binding,
                      "seconds": prediction.seconds}
        rows: list[tuple[str, object]] = [("seconds", f"{prediction.seconds:.6e}")]
        if breakdown:
            data["contributions"] = prediction.contributions
            rows += [(key, f"{value:.6e}") for key, value in prediction.contributions.items()]
        _emit(data, opts, rows)


@app.command()
def simulate(
    ctx: typer.Context,
    output: Path = typer.Option(..., "--output", "-o"),
    device: Optional[Path] = typer.Option(None, "--device", help="JSON del dispositivo (por defecto r9-fury)."),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Desviación del ruido log-normal."),
    role: str = typer.Option("measurement", "--role", help="measurement, test o all."),
    runs: Optional[int] = typer.Option(None, "--runs", help="Escribe R corridas crudas por caso."),
    all_groups: bool = typer.Option(False, "--all-groups", help="Cada tamaño en todo el conjunto de grupos."),
    suite: Optional[Path] = typer.Option(None, "--suite", help="Directorio de la suite."),
):
    """Corre la suite en el dispositivo simulado y escribe el CSV de mediciones."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("simulate", device=device, output=output)
        if runs is not None and runs < 1:
            raise UsageError("--runs debe ser >= 1")
        if role not in (*ROLES, "all"):
            raise UsageError(f"--role debe ser measurement, test o all, no '{role}'")
        dev = load_device(device, sigma, cfg.seed)
        cases = suite_cases(None if role == "all" else role, suite, all_groups)
        logger.info("%d casos en %s", len(cases), dev.name)
        with _progress(len(cases), "simulación") as bar:
            result = run_campaign(dev, cases, runs, get_settings().max_workers, cfg.cap,
                                  on_progress=lambda done, total: bar.update(done - bar.n))
        for error in result.errors:
            typer.echo(f"{error.kernel} {dict(error.binding)} {format_group(error.group)}: "
                       f"{error.code}: {error.message}", err=True)
        if runs is None:
            write_measurements(result.records, output, force=cfg.force)
        else:
            write_raw_runs(result.raw_frame(), output, force=cfg.force)
        data = {"output": str(output), "cases": len(cases), "records": len(result.records),
                "raw_runs": len(result.raw_runs), "errors": len(result.errors)}
        _emit(data, opts, list(data.items()))


@app.command("eval")
def eval_cmd(
    ctx: typer.Context,
    measurements: Path = typer.Argument(..., help="CSV de mediciones de los kernels de prueba."),
    weights: Path = typer.Option(..., "--weights", "-w"),
    kernels: Optional[Path] = typer.Option(None, "--kernels", help="Directorio de kernels (por defecto la suite)."),
):
    """Error relativo: media geométrica por kernel y entre kernels."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        opts.run_config("eval", inputs=(measurements, weights))
        model = load_weights(weights)
        records = read_measurements(measurements)
        pvs = _bound_properties(kernel_sources(kernels), records, opts.cap, "predicción")
        df = pd.DataFrame({
            "kernel": [r.kernel for r in records],
            "predicted_s": [predict(model, pv).seconds for pv in pvs],
            "time_s": [r.time_s for r in records],
        })
        report = error_report(df)
        data = {"device": model.device, "n_cases": len(df), "per_kernel": report.per_kernel,
                "cross_kernel": report.cross_kernel}
        rows = [(kernel, f"{value:.4f}") for kernel, value in report.per_kernel.items()]
        rows.append(("geomean", f"{report.cross_kernel:.4f}"))
        _emit(data, opts, rows)


@suite_app.command("emit")
def suite_emit(
    ctx: typer.Context,
    out: Path = typer.Argument(..., help="Directorio destino."),
    role: Optional[str] = typer.Option(None, "--role", help="measurement o test (por defecto ambos)."),
    all_groups: bool = typer.Option(False, "--all-groups"),
):
    """Copia las fuentes de la suite y escribe cases.json con cada caso expandido."""
    opts: GlobalOptions = ctx.obj
    with _exit_codes():
        cfg = opts.run_config("suite emit", output=out / "cases.json")
        if role is not None and role not in ROLES:
            raise UsageError(f"--role debe ser measurement o test, no '{role}'")
        root = suite_dir()
        manifest = load_manifest(root)
        kept = {kid: e for kid, e in manifest.kernels.items() if role is None or e.role == role}
        sources = sorted({e.source for e in kept.values()})
        targets = [out / s for s in sources] + [out / MANIFEST_NAME, out / "cases.json"]
        existing = [p for p in targets if p.exists()]
        if existing and not cfg.force:
            raise FileExistsError(f"{existing[0]} ya existe (use --force para sobrescribir)")

        cases = [
            {"kernel": c.kernel_id, "role": c.role, "binding": dict(c.binding), "group": format_group(c.group)}
            for c in suite_cases(role, root, all_groups)
        ]
        for source in sources:
            export_text(read_kernel_file(root / source), out / source, force=True)
        filtered = SuiteManifest(version=manifest.version, kernels=kept)
        export_text(filtered.model_dump_json(indent=2) + "\n", out / MANIFEST_NAME, force=True)
        export_json({"cases": cases}, out / "cases.json", force=True)
        _emit({"output": str(out), "cases": len(cases)}, opts, [("output", out), ("cases", len(cases))])


if __name__ == "__main__":
    app()
