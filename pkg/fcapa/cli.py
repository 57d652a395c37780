import json
from pathlib import Path
from typing import List, Optional

import typer

from .models.experiment import SweepConfig
from .services.config import load_settings
from .services.errors import FcapaError, ResultsIOError
from .services.experiments import (
    DEFAULT_SWEEPS, build_scenario, emit_results, emit_trace, run_convergence, run_scheme, run_sweep,
    summary_rows,
)
from .services.logging_setup import configure_logging

app = typer.Typer(help="Flexible continuous-aperture array WSR optimizer", no_args_is_help=True)

CONFIG_OPTION = typer.Option(None, "--config", exists=True, dir_okay=False, help="TOML, JSON or YAML settings file")
SEED_OPTION = typer.Option(None, "--seed", help="Base seed for user draws")
THREADS_OPTION = typer.Option(None, "--threads", help="Worker processes for Monte Carlo runs")
OUT_DIR_OPTION = typer.Option(None, "--out-dir", help="Directory for CSV and JSON outputs")


def _settings(config: Optional[Path], **overrides):
    settings = load_settings(config, overrides)
    configure_logging(settings.log_level, settings.log_json)
    return settings


def _fail(error: Exception) -> None:
    typer.echo(f"Error: {error}", err=True)
    raise typer.Exit(code=1)


@app.command()
def solve(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
    scheme: str = typer.Option("fcapa", "--scheme", help="fcapa | capa | mimo-flexible | mimo-conventional"),
    realization: int = typer.Option(0, "--realization", help="User draw index"),
):
    """Solve one scenario, print its ARPU and write the convergence trace"""
    try:
        settings = _settings(config, seed=seed, threads=threads, out_dir=str(out_dir) if out_dir else None)
        result = run_scheme(scheme, build_scenario(settings, realization), settings)
        target = Path(settings.out_dir)
        emit_trace(result.trace, target / f"trace_{scheme}.csv")
        (target / f"solve_{scheme}.json").write_text(json.dumps({
            "scheme": result.scheme,
            "arpu": result.arpu,
            "rates": result.rates,
            "iterations": result.iterations,
            "power": result.power,
            "settings": settings.model_dump(),
        }, indent=2))
    except FcapaError as e:
        _fail(e)
    except OSError as e:
        _fail(ResultsIOError(f"Cannot write solve report: {e}", settings.out_dir))

    typer.echo(f"{scheme}: ARPU {result.arpu:.6f} bit/s/Hz after {result.iterations} iterations")


@app.command()
def sweep(
    parameter: str = typer.Argument(..., help="aperture | power | users | frequency | morph"),
    values: Optional[str] = typer.Option(None, "--values", help="Comma-separated values; defaults per parameter"),
    schemes: Optional[str] = typer.Option(None, "--schemes", help="Comma-separated schemes"),
    realizations: Optional[int] = typer.Option(None, "--realizations"),
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
):
    """Monte Carlo sweep of one parameter across schemes"""
    if parameter not in DEFAULT_SWEEPS:
        typer.echo(f"Error: unknown sweep parameter '{parameter}'", err=True)
        raise typer.Exit(code=2)

    try:
        settings = _settings(
            config,
            seed=seed,
            threads=threads,
            realizations=realizations,
            out_dir=str(out_dir) if out_dir else None,
            schemes=_split(schemes),
        )
        grid: List[float] = [float(v) for v in _split(values)] if values else DEFAULT_SWEEPS[parameter]
        cfg = SweepConfig(
            schemes=list(settings.schemes),
            parameter=parameter,
            values=grid,
            realizations=settings.realizations,
            seed=settings.seed,
            threads=settings.threads,
            settings=settings,
        )
        records = run_sweep(cfg, progress=True)
        files = emit_results(records, Path(settings.out_dir), cfg.model_dump(mode="json"))
    except FcapaError as e:
        _fail(e)

    for row in summary_rows(records):
        typer.echo(f"{row['scheme']:>18} {parameter}={row['param_value']:g}: mean ARPU {row['mean_arpu']}")
    typer.echo(f"Results written to {files['results'].parent}")


@app.command()
def convergence(
    apertures: Optional[str] = typer.Option(None, "--apertures", help="Comma-separated aperture areas in m^2"),
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out_dir: Optional[Path] = OUT_DIR_OPTION,
):
    """FCAPA convergence traces for several aperture sizes"""
    try:
        settings = _settings(config, seed=seed, threads=threads, out_dir=str(out_dir) if out_dir else None)
        areas = [float(v) for v in _split(apertures)] if apertures else None
        reports = run_convergence(settings, areas)
        for area, report in reports.items():
            emit_trace(report.trace, Path(settings.out_dir) / f"convergence_{area:g}.csv")
    except FcapaError as e:
        _fail(e)

    for area, report in reports.items():
        typer.echo(f"A_T={area:g} m^2: {report.iterations} iterations, ARPU {report.arpu:.6f}")


@app.command()
def serve(
    host: str = typer.Option("0.0.0.0", "--host"),
    port: int = typer.Option(8001, "--port"),
):
    """Serve the HTTP API with uvicorn"""
    import uvicorn

    uvicorn.run("fcapa.server:app", host=host, port=port)


def _split(text: Optional[str]) -> Optional[List[str]]:
    if not text:
        return None
    return [item.strip() for item in text.split(",") if item.strip()]
