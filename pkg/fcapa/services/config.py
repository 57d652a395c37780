import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, get_origin

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from ..models.scenario import Scenario, UserSpec
from ..models.settings import Settings
from ..models.solver import SolveOptions
from .errors import InvalidConfigurationError

ENV_PREFIX = "FCAPA_"


def _read_file(path: Path) -> Dict[str, Any]:
    """Parse a TOML, JSON or YAML settings file into a flat mapping"""
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        elif suffix == ".json":
            data = json.loads(path.read_text())
        elif suffix in (".yaml", ".yml"):
            data = yaml.safe_load(path.read_text()) or {}
        else:
            raise InvalidConfigurationError(f"Unsupported settings format '{suffix}' for {path}")
    except OSError as e:
        raise InvalidConfigurationError(f"Cannot read settings file {path}: {e}") from e
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidConfigurationError(f"Malformed settings file {path}: {e}") from e

    if not isinstance(data, dict):
        raise InvalidConfigurationError(f"Settings file {path} must hold a mapping")
    return data


def _env_values() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for name, field in Settings.model_fields.items():
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is None:
            continue
        if raw.lstrip().startswith("["):
            values[name] = json.loads(raw)
        elif get_origin(field.annotation) is list:
            values[name] = [item.strip() for item in raw.split(",") if item.strip()]
        else:
            values[name] = raw
    return values


def load_settings(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> Settings:
    """Defaults, then file, then FCAPA_* environment, then explicit overrides"""
    load_dotenv(Path.cwd() / '.env')

    data: Dict[str, Any] = {}
    if path is not None:
        data.update(_read_file(Path(path)))
    try:
        data.update(_env_values())
    except json.JSONDecodeError as e:
        raise InvalidConfigurationError(f"Malformed environment override: {e}") from e
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})

    unknown = sorted(set(data) - set(Settings.model_fields))
    if unknown:
        raise InvalidConfigurationError(f"Unknown settings: {', '.join(unknown)}")

    try:
        return Settings(**data)
    except ValidationError as e:
        raise InvalidConfigurationError(str(e)) from e


def update_settings(settings: Settings, **changes: Any) -> Settings:
    """Validated copy of settings with some fields replaced"""
    try:
        return Settings(**{**settings.model_dump(), **changes})
    except ValidationError as e:
        raise InvalidConfigurationError(str(e)) from e


def scenario_from_settings(
    settings: Settings,
    positions: np.ndarray,
    polarizations: Optional[np.ndarray] = None,
) -> Scenario:
    """Scenario with equal user weights 1/K and a common noise variance"""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[1] != 3:
        raise InvalidConfigurationError("User positions must be 3-vectors")
    if polarizations is None:
        polarizations = np.tile([0.0, 0.0, 1.0], (positions.shape[0], 1))

    norms = np.linalg.norm(polarizations, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise InvalidConfigurationError("Polarizations must be unit vectors")

    weight = 1.0 / positions.shape[0]
    users = [
        UserSpec(
            position=tuple(position),
            polarization=tuple(polarization),
            noise_variance=settings.noise_variance,
            weight=weight,
        )
        for position, polarization in zip(positions.tolist(), polarizations.tolist())
    ]
    return Scenario(
        users=users,
        frequency_hz=settings.frequency_hz,
        impedance=settings.impedance,
        transmit_power=settings.transmit_power,
        aperture=settings.aperture_lengths,
    )


def solve_options(settings: Settings) -> SolveOptions:
    return SolveOptions(
        iterations=settings.iterations,
        quadrature_order=settings.quadrature_order,
        early_stop_tolerance=settings.early_stop_tolerance,
        early_stop_patience=settings.early_stop_patience,
        current_iterations=settings.current_iterations,
        current_tolerance=settings.current_tolerance,
        armijo_initial_step=settings.armijo_initial_step,
        armijo_beta=settings.armijo_beta,
        armijo_c1=settings.armijo_c1,
        armijo_min_step=settings.armijo_min_step,
        armijo_growth=settings.armijo_growth,
        armijo_max_trials=settings.armijo_max_trials,
        smoothing_wavelengths=settings.smoothing_wavelengths,
        line_search_objective=settings.line_search_objective,
    )
