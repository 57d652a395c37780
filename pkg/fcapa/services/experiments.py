import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
import structlog
from tqdm import tqdm

from ..models.baselines import SchemeResult
from ..models.experiment import RESULT_COLUMNS, TRACE_COLUMNS, ResultRecord, SweepConfig, UserRegion
from ..models.scenario import Scenario
from ..models.settings import SCHEMES, Settings
from ..models.solver import SolveReport, TraceRow
from .baselines import mimo_wsr, rigid_capa_wsr
from .config import scenario_from_settings, solve_options, update_settings
from .errors import FcapaError, InvalidConfigurationError, ResultsIOError
from .geometry import reference_shape
from .quadrature import tensor_grid
from .shape_optimizer import solve

logger = structlog.get_logger(__name__)

# Default sweep grids; power in A^2, frequency in Hz, morph in wavelengths
DEFAULT_SWEEPS: Dict[str, List[float]] = {
    "aperture": [0.1, 0.25, 0.5, 0.75, 1.0],
    "power": [0.01, 0.05, 0.1, 0.5, 1.0],
    "users": [2, 4, 8, 12, 16],
    "frequency": [2.4e9, 6e9, 12e9, 24e9],
    "morph": [0.0, 1.0, 2.0, 3.0, 4.0, 6.0],
}

SWEEP_FIELDS = {
    "aperture": "aperture_area",
    "power": "transmit_power",
    "users": "users",
    "frequency": "frequency_hz",
    "morph": "morph_wavelengths",
}


def region_from_settings(settings: Settings) -> UserRegion:
    return UserRegion(
        r_x=settings.region_x,
        r_z=settings.region_z,
        r_y_min=settings.region_y_min,
        r_y_max=settings.region_y_max,
    )


def sample_users(K: int, region: UserRegion, seed: int, realization: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform positions in the region and z-polarized receivers; one PCG64 stream per (realization, user)"""
    positions = np.empty((K, 3))
    for k in range(K):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(realization, k))))
        positions[k] = (
            rng.uniform(-region.r_x, region.r_x),
            rng.uniform(region.r_y_min, region.r_y_max),
            rng.uniform(-region.r_z, region.r_z),
        )
    return positions, np.tile([0.0, 0.0, 1.0], (K, 1))


def build_scenario(settings: Settings, realization: int = 0) -> Scenario:
    """Scenario from explicit user positions when configured, otherwise a seeded draw"""
    if settings.user_positions:
        return scenario_from_settings(settings, np.asarray(settings.user_positions, dtype=float))
    positions, polarizations = sample_users(
        settings.users, region_from_settings(settings), settings.seed, realization,
    )
    return scenario_from_settings(settings, positions, polarizations)


def run_fcapa(scn: Scenario, settings: Settings) -> SolveReport:
    shape = reference_shape(
        settings.reference_shape,
        scn.aperture,
        settings.shape_resolution,
        settings.morph_range,
        settings.shape_file,
    )
    return solve(scn, shape, solve_options(settings))


def run_scheme(scheme: str, scn: Scenario, settings: Settings) -> SchemeResult:
    """Dispatch one scheme on one scenario"""
    opts = solve_options(settings)
    if scheme == "fcapa":
        report = run_fcapa(scn, settings)
        return SchemeResult(
            scheme="fcapa", arpu=report.arpu, rates=report.rates,
            iterations=report.iterations, power=report.power, trace=report.trace,
        )
    if scheme == "capa":
        grid = tensor_grid(settings.quadrature_order, *scn.aperture)
        return rigid_capa_wsr(
            scn, grid, opts, settings.shape_resolution, settings.reference_shape, settings.shape_file,
        )
    if scheme in ("mimo-flexible", "mimo-conventional"):
        shape = None
        if scheme == "mimo-flexible":
            shape = reference_shape(
                settings.reference_shape, scn.aperture, settings.shape_resolution, 0.0, settings.shape_file,
            )
        return mimo_wsr(
            scn,
            shape,
            morph_range=settings.morph_range,
            precoder=settings.precoder,
            iterations=settings.flexible_mimo_iterations,
            opts=opts,
            tol=settings.fp_tolerance,
            max_iter=settings.fp_max_iterations,
        )
    raise InvalidConfigurationError(f"Unknown scheme '{scheme}'")


def _run_point(task: Tuple[SweepConfig, int, int]) -> List[ResultRecord]:
    """All schemes for one (value, realization) pair on a shared user draw"""
    cfg, value_index, realization = task
    value = cfg.values[value_index]
    field = SWEEP_FIELDS[cfg.parameter]
    records = []

    try:
        settings = update_settings(
            cfg.settings,
            seed=cfg.seed,
            **{field: int(value) if field == "users" else value},
        )
        scn = build_scenario(settings, realization)
    except FcapaError as e:
        return [_failed(cfg, scheme, value, realization, e) for scheme in cfg.schemes]

    for scheme in cfg.schemes:
        started = time.perf_counter()
        try:
            result = run_scheme(scheme, scn, settings)
        except FcapaError as e:
            logger.warning("scheme_failed", scheme=scheme, value=value, realization=realization, error=str(e))
            records.append(_failed(cfg, scheme, value, realization, e))
            continue
        records.append(ResultRecord(
            scheme=scheme,
            param_name=cfg.parameter,
            param_value=value,
            realization=realization,
            seed=cfg.seed,
            arpu=result.arpu,
            rates=result.rates,
            iterations=result.iterations,
            power=result.power,
            wall_ms=1e3 * (time.perf_counter() - started),
            trace=result.trace,
        ))
    return records


def _failed(cfg: SweepConfig, scheme: str, value: float, realization: int, error: Exception) -> ResultRecord:
    return ResultRecord(
        scheme=scheme,
        param_name=cfg.parameter,
        param_value=value,
        realization=realization,
        seed=cfg.seed,
        error=str(error),
    )


def run_sweep(cfg: SweepConfig, progress: bool = False) -> List[ResultRecord]:
    """Monte Carlo sweep; records ordered by (scheme, value, realization) whatever the worker order"""
    unknown = [scheme for scheme in cfg.schemes if scheme not in SCHEMES]
    if unknown:
        raise InvalidConfigurationError(f"Unknown schemes: {', '.join(unknown)}")

    tasks = [(cfg, v, r) for v in range(len(cfg.values)) for r in range(cfg.realizations)]
    logger.info("sweep_started", parameter=cfg.parameter, points=len(cfg.values), realizations=cfg.realizations)

    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            batches = list(tqdm(pool.map(_run_point, tasks), total=len(tasks), disable=not progress))
    else:
        batches = [_run_point(task) for task in tqdm(tasks, disable=not progress)]

    scheme_order = {scheme: index for index, scheme in enumerate(cfg.schemes)}
    keyed = []
    for (_, value_index, realization), batch in zip(tasks, batches):
        for record in batch:
            keyed.append(((scheme_order[record.scheme], value_index, realization), record))
    keyed.sort(key=lambda item: item[0])
    return [record for _, record in keyed]


def summarize(records: Iterable[ResultRecord]) -> pd.DataFrame:
    """Mean ARPU and failure count per (scheme, swept value)"""
    frame = pd.DataFrame([record.model_dump(include={"scheme", "param_value", "arpu", "error"}) for record in records])
    if frame.empty:
        return pd.DataFrame(columns=["scheme", "param_value", "mean_arpu", "realizations", "failures"])
    frame["arpu"] = pd.to_numeric(frame["arpu"])
    frame["failed"] = frame["error"].notna()
    return (
        frame.groupby(["scheme", "param_value"], sort=False)
        .agg(mean_arpu=("arpu", "mean"), realizations=("arpu", "size"), failures=("failed", "sum"))
        .reset_index()
    )


def summary_rows(records: Iterable[ResultRecord]) -> List[dict]:
    """summarize() as plain Python rows, with missing means as None"""
    rows = []
    for row in summarize(records).to_dict(orient="records"):
        plain = {key: value.item() if hasattr(value, "item") else value for key, value in row.items()}
        if plain["mean_arpu"] != plain["mean_arpu"]:
            plain["mean_arpu"] = None
        rows.append(plain)
    return rows


def records_frame(records: Iterable[ResultRecord]) -> pd.DataFrame:
    rows = [record.model_dump(include=set(RESULT_COLUMNS)) for record in records]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def trace_frame(rows: Iterable[TraceRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(include=set(TRACE_COLUMNS)) for row in rows], columns=TRACE_COLUMNS)


def emit_trace(rows: Iterable[TraceRow], path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(rows).to_csv(path, index=False)
    except OSError as e:
        raise ResultsIOError(f"Cannot write trace: {e}", path) from e
    return path


def emit_results(records: List[ResultRecord], path: Path, config: Optional[dict] = None) -> Dict[str, Path]:
    """Write results.csv, traces.csv, summary.csv and a config.json sidecar into `path`"""
    out_dir = Path(path)
    files = {
        "results": out_dir / "results.csv",
        "traces": out_dir / "traces.csv",
        "summary": out_dir / "summary.csv",
        "config": out_dir / "config.json",
    }
    traces = pd.DataFrame(
        [
            {"scheme": record.scheme, "param_value": record.param_value, "realization": record.realization,
             **row.model_dump(include=set(TRACE_COLUMNS))}
            for record in records for row in record.trace
        ],
        columns=["scheme", "param_value", "realization", *TRACE_COLUMNS],
    )
    failures = [
        {"scheme": r.scheme, "param_value": r.param_value, "realization": r.realization, "error": r.error}
        for r in records if r.error
    ]

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        records_frame(records).to_csv(files["results"], index=False)
        traces.to_csv(files["traces"], index=False)
        summarize(records).to_csv(files["summary"], index=False)
        files["config"].write_text(json.dumps({"config": config or {}, "failures": failures}, indent=2, default=str))
    except OSError as e:
        raise ResultsIOError(f"Cannot write results: {e}", out_dir) from e

    logger.info("results_written", directory=str(out_dir), records=len(records))
    return files


def load_results(path: Path) -> List[ResultRecord]:
    """Parse a results.csv back into records (CSV columns only)"""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ResultsIOError(f"Cannot read results: {e}", path) from e
    records = []
    for row in frame.to_dict(orient="records"):
        plain = {key: value.item() if hasattr(value, "item") else value for key, value in row.items()}
        if plain["arpu"] != plain["arpu"]:
            plain["arpu"] = None
        records.append(ResultRecord(**plain))
    return records


def run_convergence(settings: Settings, apertures: Optional[List[float]] = None) -> Dict[float, SolveReport]:
    """One FCAPA run per aperture area on the same user draw"""
    reports = {}
    for area in apertures or settings.convergence_apertures:
        scoped = update_settings(settings, aperture_area=area)
        reports[area] = run_fcapa(build_scenario(scoped), scoped)
        logger.info("convergence_run", aperture=area, iterations=reports[area].iterations, arpu=reports[area].arpu)
    return reports
