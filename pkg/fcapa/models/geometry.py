from pydantic import BaseModel, ConfigDict
from typing import Tuple
import numpy as np


class SurfaceShape(BaseModel):
    """Height field g(u, v) on a uniform grid; axis 0 runs along u, axis 1 along v"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    half_lengths: Tuple[float, float]
    g: np.ndarray
    g_ref: np.ndarray
    morph_range: float = 0.0

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.g.shape

    @property
    def spacing(self) -> Tuple[float, float]:
        n_u, n_v = self.g.shape
        return (2 * self.half_lengths[0] / (n_u - 1), 2 * self.half_lengths[1] / (n_v - 1))

    @property
    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        n_u, n_v = self.g.shape
        return (
            np.linspace(-self.half_lengths[0], self.half_lengths[0], n_u),
            np.linspace(-self.half_lengths[1], self.half_lengths[1], n_v),
        )

    def with_heights(self, g: np.ndarray) -> "SurfaceShape":
        return self.model_copy(update={"g": np.asarray(g, dtype=float)})


class ShapeFields(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    du_g: np.ndarray
    dv_g: np.ndarray
    zeta: np.ndarray
    spacing: Tuple[float, float]


class ShapeSamples(BaseModel):
    """Shape values at scattered (u, v) points, one entry per point"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    du_g: np.ndarray
    dv_g: np.ndarray
    zeta: np.ndarray
