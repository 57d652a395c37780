from pydantic import BaseModel, ConfigDict
from typing import Tuple
import numpy as np


class QuadratureGrid(BaseModel):
    """Tensor Gauss-Legendre rule; node n = b * order + a with b over v and a over u"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    order: int
    lengths: Tuple[float, float]
    nodes_1d: np.ndarray
    weights_1d: np.ndarray
    nodes_uv: np.ndarray
    weights_2d: np.ndarray

    @property
    def size(self) -> int:
        return self.order * self.order

    @property
    def u_nodes(self) -> np.ndarray:
        return 0.5 * self.lengths[0] * self.nodes_1d

    @property
    def v_nodes(self) -> np.ndarray:
        return 0.5 * self.lengths[1] * self.nodes_1d
