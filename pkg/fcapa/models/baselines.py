from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional
import numpy as np

from .geometry import SurfaceShape
from .solver import AuxVars, FPConstants, FredholmSolution, TraceRow


class DiscreteArray(BaseModel):
    """Element lattice; heights.g[i, j] is the height of element (i, j), flattened row-major into positions"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spacing: float
    element_area: float
    x: np.ndarray
    z: np.ndarray
    heights: SurfaceShape
    flexible: bool = False

    @property
    def num_elements(self) -> int:
        return self.x.size * self.z.size

    @property
    def positions(self) -> np.ndarray:
        xx, zz = np.meshgrid(self.x, self.z, indexing="ij")
        return np.column_stack([xx.ravel(), self.heights.g.ravel(), zz.ravel()])


class DiscreteChannel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h: np.ndarray
    zeta: np.ndarray


class SchemeResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scheme: str
    arpu: float
    rates: List[float]
    iterations: int = 0
    power: float
    trace: List[TraceRow] = Field(default_factory=list)
    beamformers: Optional[np.ndarray] = None


class DiscreteFPState(BaseModel):
    """Final discrete FP iterate; consts is None when no FP update beat the starting point"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    solution: FredholmSolution
    aux: AuxVars
    consts: Optional[FPConstants] = None
    beamformers: np.ndarray
    trace: List[TraceRow] = Field(default_factory=list)
