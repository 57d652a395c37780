import numpy as np

from ..models.geometry import SurfaceShape
from ..models.quadrature import QuadratureGrid
from ..models.scenario import ChannelSet, CorrelationMatrix, Scenario
from .errors import ChannelSingularityError, InvalidConfigurationError
from .geometry import finite_diff_fields, sample_shape

Z_HAT = np.array([0.0, 0.0, 1.0])


def green_tensor(r: np.ndarray, s: np.ndarray, wavelength: float, impedance: float) -> np.ndarray:
    """Far-field dyadic Green's function between source point s and observation point r"""
    d = np.asarray(r, dtype=float) - np.asarray(s, dtype=float)
    distance = np.linalg.norm(d)
    if distance == 0.0:
        raise ChannelSingularityError("Green's function evaluated at the source point")

    prefactor = -1j * impedance * np.exp(-2j * np.pi * distance / wavelength) / (2 * wavelength * distance)
    return prefactor * (np.eye(3) - np.outer(d, d) / distance ** 2)


def scalar_channel(r: np.ndarray, s: np.ndarray, polarization: np.ndarray, wavelength: float, impedance: float) -> complex:
    """Field seen by a receiver polarized along `polarization` from a z-directed source at s"""
    return complex(np.asarray(polarization, dtype=float) @ green_tensor(r, s, wavelength, impedance) @ Z_HAT)


def channel_matrix(
    positions: np.ndarray,
    polarizations: np.ndarray,
    points: np.ndarray,
    wavelength: float,
    impedance: float,
) -> np.ndarray:
    """Vectorized scalar_channel: entry [n, k] links source point n to user k"""
    d = positions[None, :, :] - points[:, None, :]
    distance = np.linalg.norm(d, axis=-1)
    if np.any(distance <= 0.0):
        raise ChannelSingularityError("A user coincides with a source point")

    radial = d / distance[..., None]
    # u^T (I - r r^T) z = u_z - (u . r) r_z
    projected = polarizations[None, :, 2] - np.einsum("kc,nkc->nk", polarizations, radial) * radial[..., 2]
    prefactor = -1j * impedance * np.exp(-2j * np.pi * distance / wavelength) / (2 * wavelength * distance)
    return prefactor * projected


def _check_users_outside(scn: Scenario, shape: SurfaceShape) -> None:
    positions = scn.positions
    half_x, half_z = shape.half_lengths
    inside = (
        (np.abs(positions[:, 0]) <= half_x)
        & (np.abs(positions[:, 2]) <= half_z)
        & (positions[:, 1] >= shape.g.min())
        & (positions[:, 1] <= shape.g.max())
    )
    if np.any(inside):
        raise ChannelSingularityError(f"Users {np.flatnonzero(inside).tolist()} lie inside the aperture region")


def build_channels(scn: Scenario, shape: SurfaceShape, grid: QuadratureGrid) -> ChannelSet:
    """Sample every user's channel and the area element at the quadrature nodes"""
    lengths = (2 * shape.half_lengths[0], 2 * shape.half_lengths[1])
    if not (np.allclose(grid.lengths, scn.aperture, rtol=1e-12) and np.allclose(lengths, scn.aperture, rtol=1e-12)):
        raise InvalidConfigurationError(
            f"Aperture mismatch: scenario {scn.aperture}, grid {grid.lengths}, shape {lengths}"
        )
    _check_users_outside(scn, shape)

    samples = sample_shape(shape, grid.nodes_uv, finite_diff_fields(shape))
    points = np.column_stack([grid.nodes_uv[:, 0], samples.g, grid.nodes_uv[:, 1]])
    H = channel_matrix(scn.positions, scn.polarizations, points, scn.wavelength, scn.impedance)
    return ChannelSet(H=H, zeta=samples.zeta)


def correlation_Q(ch: ChannelSet, grid: QuadratureGrid) -> CorrelationMatrix:
    """Gram matrix of the zeta-weighted channel samples"""
    weighted = np.conj(ch.H) * (grid.weights_2d * ch.zeta)[:, None]
    Q = weighted.T @ ch.H
    return CorrelationMatrix(Q=0.5 * (Q + Q.conj().T))
