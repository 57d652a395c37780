from pydantic import BaseModel, Field, model_validator
from typing import List, Literal, Optional

from .settings import Settings
from .solver import TraceRow

SweepParameter = Literal["aperture", "power", "users", "frequency", "morph"]

RESULT_COLUMNS = [
    "scheme", "param_name", "param_value", "realization", "seed",
    "arpu", "iterations", "power", "wall_ms",
]
TRACE_COLUMNS = ["iteration", "surrogate", "arpu"]


class UserRegion(BaseModel):
    r_x: float = Field(default=5.0, gt=0)
    r_z: float = Field(default=5.0, gt=0)
    r_y_min: float = Field(default=15.0, gt=0)
    r_y_max: float = Field(default=30.0, gt=0)

    @model_validator(mode="after")
    def check_depth(self):
        if self.r_y_max < self.r_y_min:
            raise ValueError("r_y_max must not be below r_y_min")
        return self


class SweepConfig(BaseModel):
    schemes: List[str]
    parameter: SweepParameter
    values: List[float] = Field(min_length=1)
    realizations: int = Field(default=200, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    settings: Settings = Field(default_factory=Settings)


class ResultRecord(BaseModel):
    scheme: str
    param_name: str
    param_value: float
    realization: int
    seed: int
    arpu: Optional[float] = None
    rates: List[float] = Field(default_factory=list)
    iterations: int = 0
    power: float = 0.0
    wall_ms: float = 0.0
    error: Optional[str] = None
    trace: List[TraceRow] = Field(default_factory=list)
