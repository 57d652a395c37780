from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse

from ..models.geometry import ShapeFields, ShapeSamples, SurfaceShape
from .errors import InvalidConfigurationError, OutOfDomainError, ShapeMismatchError


def eval_paraboloid(u, v):
    """Reference paraboloid g(u, v) = u^2 + v^2"""
    return np.square(u) + np.square(v)


def eval_flat(u, v):
    return np.zeros_like(np.add(u, v), dtype=float)


SHAPE_PRESETS: Dict[str, Callable] = {
    "flat": eval_flat,
    "paraboloid": eval_paraboloid,
}


def make_shape(
    preset: str,
    lengths: Tuple[float, float],
    resolution: int,
    morph_range: float = 0.0,
) -> SurfaceShape:
    """Sample a named preset on a uniform grid; the preset is both start and reference"""
    if preset not in SHAPE_PRESETS:
        raise InvalidConfigurationError(f"Unknown shape preset '{preset}'")
    if resolution < 3:
        raise InvalidConfigurationError(f"Shape resolution must be at least 3, got {resolution}")
    if morph_range < 0:
        raise InvalidConfigurationError(f"Morph range must be non-negative, got {morph_range}")

    half = (0.5 * lengths[0], 0.5 * lengths[1])
    uu, vv = np.meshgrid(
        np.linspace(-half[0], half[0], resolution),
        np.linspace(-half[1], half[1], resolution),
        indexing="ij",
    )
    g = np.asarray(SHAPE_PRESETS[preset](uu, vv), dtype=float)
    return SurfaceShape(half_lengths=half, g=g, g_ref=g.copy(), morph_range=float(morph_range))


def load_shape_csv(path: Path, lengths: Tuple[float, float], morph_range: float = 0.0) -> SurfaceShape:
    """Read a reference shape from a CSV grid with header u,v,g"""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise InvalidConfigurationError(f"Cannot read shape file {path}: {e}") from e

    if list(frame.columns) != ["u", "v", "g"]:
        raise InvalidConfigurationError(f"Shape file {path} must have header u,v,g")

    frame = frame.sort_values(["u", "v"], kind="mergesort")
    u = np.unique(frame["u"].to_numpy())
    v = np.unique(frame["v"].to_numpy())
    if u.size < 3 or v.size < 3 or len(frame) != u.size * v.size:
        raise InvalidConfigurationError(f"Shape file {path} is not a full grid of at least 3 x 3 points")

    half = (0.5 * lengths[0], 0.5 * lengths[1])
    expected_u = np.linspace(-half[0], half[0], u.size)
    expected_v = np.linspace(-half[1], half[1], v.size)
    if not (np.allclose(u, expected_u, atol=1e-9) and np.allclose(v, expected_v, atol=1e-9)):
        raise InvalidConfigurationError(f"Shape file {path} must span the aperture on a uniform grid")

    g = frame["g"].to_numpy(dtype=float).reshape(u.size, v.size)
    return SurfaceShape(half_lengths=half, g=g, g_ref=g.copy(), morph_range=float(morph_range))


def reference_shape(
    preset: str,
    lengths: Tuple[float, float],
    resolution: int,
    morph_range: float,
    shape_file: Optional[str] = None,
) -> SurfaceShape:
    if shape_file:
        return load_shape_csv(Path(shape_file), lengths, morph_range)
    return make_shape(preset, lengths, resolution, morph_range)


def finite_diff_fields(shape: SurfaceShape) -> ShapeFields:
    """Second-order slopes of g, with zeta rebuilt from them"""
    n_u, n_v = shape.g.shape
    if min(n_u, n_v) < 3:
        raise InvalidConfigurationError(f"Shape grid needs at least 3 points per axis, got {n_u} x {n_v}")

    du, dv = shape.spacing
    du_g, dv_g = np.gradient(shape.g, du, dv, edge_order=2)

    return ShapeFields(
        du_g=du_g,
        dv_g=dv_g,
        zeta=np.sqrt(1.0 + du_g ** 2 + dv_g ** 2),
        spacing=(du, dv),
    )


def difference_matrix(n: int, spacing: float) -> np.ndarray:
    """Dense matrix D with D @ x == np.gradient(x, spacing, edge_order=2)"""
    return np.gradient(np.eye(n), spacing, axis=0, edge_order=2)


def bilinear_weights(shape: SurfaceShape, points: np.ndarray) -> sparse.csr_matrix:
    """Sparse B with B @ field.ravel() the bilinear samples of a grid field at (u, v) points"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 2:
        raise ShapeMismatchError(f"Expected (u, v) pairs, got shape {points.shape}")

    half = np.asarray(shape.half_lengths)
    slack = 1e-12 * np.maximum(half, 1.0)
    if np.any(np.abs(points) > half + slack):
        raise OutOfDomainError(f"Points outside [-{half[0]}, {half[0]}] x [-{half[1]}, {half[1]}]")
    points = np.clip(points, -half, half)

    cells, fractions = [], []
    for axis, coord in zip(shape.axes, points.T):
        cell = np.clip(np.searchsorted(axis, coord, side="right") - 1, 0, axis.size - 2)
        cells.append(cell)
        fractions.append((coord - axis[cell]) / (axis[cell + 1] - axis[cell]))

    (i, j), (t, s) = cells, fractions
    n_u, n_v = shape.g.shape
    corners = [(0, 0, (1 - t) * (1 - s)), (1, 0, t * (1 - s)), (0, 1, (1 - t) * s), (1, 1, t * s)]
    rows = np.tile(np.arange(len(points)), len(corners))
    cols = np.concatenate([(i + a) * n_v + (j + b) for a, b, _ in corners])
    values = np.concatenate([weight for _, _, weight in corners])
    return sparse.coo_matrix((values, (rows, cols)), shape=(len(points), n_u * n_v)).tocsr()


def sample_shape(shape: SurfaceShape, points: np.ndarray, fields: Optional[ShapeFields] = None) -> ShapeSamples:
    """Bilinear samples of g and its slopes at (u, v) points"""
    transfer = bilinear_weights(shape, points)
    if fields is None:
        fields = finite_diff_fields(shape)

    stacked = np.column_stack([shape.g.ravel(), fields.du_g.ravel(), fields.dv_g.ravel()])
    g, du_g, dv_g = (transfer @ stacked).T

    return ShapeSamples(g=g, du_g=du_g, dv_g=dv_g, zeta=np.sqrt(1.0 + du_g ** 2 + dv_g ** 2))


def project_morph(shape: SurfaceShape) -> SurfaceShape:
    """Clamp g into the band g_ref +/- morph_range / 2"""
    half_band = 0.5 * shape.morph_range
    return shape.with_heights(np.clip(shape.g, shape.g_ref - half_band, shape.g_ref + half_band))
