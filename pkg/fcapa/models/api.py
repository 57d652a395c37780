from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional, Tuple

from .experiment import ResultRecord, SweepParameter
from .settings import Scheme
from .solver import TraceRow


class SolveRequest(BaseModel):
    scheme: Scheme = "fcapa"
    user_positions: Optional[List[Tuple[float, float, float]]] = None
    realization: int = Field(default=0, ge=0)
    overrides: Dict[str, Any] = Field(default_factory=dict)


class SolveResponse(BaseModel):
    scheme: str
    arpu: float
    rates: List[float]
    iterations: int
    power: float
    wall_ms: float
    trace: List[TraceRow] = []


class SweepRequest(BaseModel):
    parameter: SweepParameter
    values: List[float] = Field(min_length=1)
    schemes: List[Scheme] = ["capa", "mimo-conventional"]
    realizations: int = Field(default=2, ge=1, le=20)
    seed: int = 0
    overrides: Dict[str, Any] = Field(default_factory=dict)


class SweepPoint(BaseModel):
    scheme: str
    param_value: float
    mean_arpu: Optional[float] = None
    realizations: int
    failures: int


class SweepResponse(BaseModel):
    parameter: str
    records: List[ResultRecord]
    summary: List[SweepPoint]
