from pydantic import BaseModel, ConfigDict, Field
from typing import Any, List, Literal
import numpy as np

from .geometry import SurfaceShape
from .scenario import ChannelSet, CorrelationMatrix


class AuxVars(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mu: np.ndarray
    lam: np.ndarray


class FPConstants(BaseModel):
    """Raw constants a, b, c and their versions normalized by c_sum"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    c_sum: float


class FredholmSolution(BaseModel):
    """W[k, i] = w_{k,i}: amplitude of current k received by user i"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    W: np.ndarray
    rho: float


class CurrentField(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    J: np.ndarray
    power_scale: float = 1.0


class ShapeGradient(BaseModel):
    """G is the height derivative per cell area; direction is the smoothed ascent field"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Gd: np.ndarray
    Gd_grid: np.ndarray
    G: np.ndarray
    direction: np.ndarray


class EnvelopePoint(BaseModel):
    """Currents re-solved on a fixed shape for fixed FP constants"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    shape: SurfaceShape
    channels: ChannelSet
    correlation: CorrelationMatrix
    solution: FredholmSolution
    surrogate: float
    arpu: float


class Evaluation(BaseModel):
    """Line-search objective value; guard must not decrease when the ascent enforces it"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    guard: float = 0.0
    payload: Any = None


class AscentStep(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    shape: SurfaceShape
    step: float
    gain: float
    trials: int
    evaluation: Evaluation


class TraceRow(BaseModel):
    iteration: int
    surrogate: float
    arpu: float
    step: float = 0.0


class SolveOptions(BaseModel):
    iterations: int = Field(default=20, ge=0)
    quadrature_order: int = Field(default=20, ge=1)
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


class SolveReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    iterations: int
    trace: List[TraceRow]
    shape: SurfaceShape
    currents: CurrentField
    channels: ChannelSet
    solution: FredholmSolution
    rates: List[float]
    wsr: float
    arpu: float
    power: float
    wall_ms: float
    stalls: int = 0
