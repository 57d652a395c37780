from pydantic import BaseModel, ConfigDict, Field
from typing import List, Literal, Optional, Tuple, get_args
import math

from .scenario import SPEED_OF_LIGHT

Scheme = Literal["fcapa", "capa", "mimo-flexible", "mimo-conventional"]
SCHEMES = get_args(Scheme)


class Settings(BaseModel):
    """Run configuration; defaults reproduce the reference downlink setup"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Physical layer
    frequency_hz: float = Field(default=2.4e9, gt=0)
    impedance: float = Field(default=120 * math.pi, gt=0)
    transmit_power: float = Field(default=0.1, gt=0)
    noise_variance: float = Field(default=5.6e-3, gt=0)
    users: int = Field(default=8, ge=1)
    user_positions: Optional[List[Tuple[float, float, float]]] = None

    # Aperture and shape
    aperture_area: float = Field(default=0.25, gt=0)
    quadrature_order: int = Field(default=20, ge=1)
    shape_resolution: int = Field(default=64, ge=3)
    reference_shape: Literal["paraboloid", "flat"] = "paraboloid"
    shape_file: Optional[str] = None
    morph_wavelengths: float = Field(default=2.0, ge=0)

    # Outer loop and line search
    iterations: int = Field(default=20, ge=0)
    early_stop_tolerance: float = Field(default=1e-6, ge=0)
    early_stop_patience: int = Field(default=2, ge=1)
    current_iterations: int = Field(default=1000, ge=1)
    current_tolerance: float = Field(default=1e-8, ge=0)
    armijo_initial_step: float = Field(default=1e-3, gt=0)
    armijo_beta: float = Field(default=0.5, gt=0, lt=1)
    armijo_c1: float = Field(default=1e-4, gt=0, lt=1)
    armijo_min_step: float = Field(default=1e-12, gt=0)
    armijo_growth: float = Field(default=1.0, ge=1)
    armijo_max_trials: int = Field(default=60, ge=1)
    smoothing_wavelengths: float = Field(default=0.5, ge=0)
    line_search_objective: Literal["wsr", "surrogate"] = "wsr"

    # Discrete baselines
    precoder: Literal["fp", "zf"] = "fp"
    fp_tolerance: float = Field(default=1e-6, gt=0)
    fp_max_iterations: int = Field(default=50, ge=1)
    flexible_mimo_iterations: int = Field(default=5, ge=0)

    # User region
    region_x: float = Field(default=5.0, gt=0)
    region_z: float = Field(default=5.0, gt=0)
    region_y_min: float = Field(default=15.0, gt=0)
    region_y_max: float = Field(default=30.0, gt=0)

    # Experiments
    schemes: List[Scheme] = ["fcapa", "capa", "mimo-flexible", "mimo-conventional"]
    realizations: int = Field(default=200, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    out_dir: str = "results"
    convergence_apertures: List[float] = [0.1, 0.25, 0.5, 1.0]

    # Logging
    log_level: str = "INFO"
    log_json: bool = False

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def aperture_lengths(self) -> Tuple[float, float]:
        side = math.sqrt(self.aperture_area)
        return (side, side)

    @property
    def morph_range(self) -> float:
        return self.morph_wavelengths * self.wavelength
