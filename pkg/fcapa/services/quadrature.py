from typing import Tuple

import numpy as np
from scipy import special

from ..models.quadrature import QuadratureGrid
from .errors import InvalidConfigurationError, ShapeMismatchError


def gl_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], ascending and exactly symmetric"""
    if order < 1:
        raise InvalidConfigurationError(f"Quadrature order must be at least 1, got {order}")

    nodes, weights = special.roots_legendre(order)
    # Symmetrize
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def tensor_grid(order: int, L_x: float, L_z: float) -> QuadratureGrid:
    """Tensor rule on [-L_x/2, L_x/2] x [-L_z/2, L_z/2], u varying fastest"""
    if L_x <= 0 or L_z <= 0:
        raise InvalidConfigurationError(f"Aperture lengths must be positive, got {L_x} x {L_z}")

    nodes, weights = gl_rule(order)
    uu, vv = np.meshgrid(0.5 * L_x * nodes, 0.5 * L_z * nodes)
    weights_2d = 0.25 * L_x * L_z * np.outer(weights, weights).ravel()

    return QuadratureGrid(
        order=order,
        lengths=(L_x, L_z),
        nodes_1d=nodes,
        weights_1d=weights,
        nodes_uv=np.column_stack([uu.ravel(), vv.ravel()]),
        weights_2d=weights_2d,
    )


def integrate(values: np.ndarray, grid: QuadratureGrid):
    """Weighted sum over the nodes; extra trailing axes are integrated column-wise"""
    values = np.asarray(values)
    if values.shape[0] != grid.size:
        raise ShapeMismatchError(f"Expected {grid.size} samples, got {values.shape[0]}")

    result = np.tensordot(grid.weights_2d, values, axes=(0, 0))
    if values.ndim == 1:
        return complex(result)
    return result
