import numpy as np
import pytest

from fcapa.services.em_channel import build_channels, channel_matrix, correlation_Q, green_tensor, scalar_channel
from fcapa.services.errors import ChannelSingularityError, InvalidConfigurationError
from fcapa.services.geometry import make_shape
from fcapa.services.quadrature import integrate, tensor_grid

from .conftest import make_scenario

ETA = 120 * np.pi
LAMBDA = 0.125
Z = np.array([0.0, 0.0, 1.0])


def test_broadside_green_tensor_magnitude():
    G = green_tensor(np.array([0.0, 15.0, 0.0]), np.zeros(3), LAMBDA, ETA)
    assert abs(G[2, 2]) == pytest.approx(100.531, abs=1e-3)
    assert abs(G[1, 1]) < 1e-12


def test_longitudinal_component_vanishes():
    G = green_tensor(np.array([0.0, 0.0, 15.0]), np.zeros(3), LAMBDA, ETA)
    assert abs(G[2, 2]) < 1e-12 * 100


def test_green_tensor_scales_with_distance():
    near = green_tensor(np.array([0.0, 10.0, 0.0]), np.zeros(3), LAMBDA, ETA)
    far = green_tensor(np.array([0.0, 20.0, 0.0]), np.zeros(3), LAMBDA, ETA)
    assert abs(near[2, 2]) / abs(far[2, 2]) == pytest.approx(2.0, rel=1e-12)


def test_green_tensor_singular_at_source():
    with pytest.raises(ChannelSingularityError):
        green_tensor(np.ones(3), np.ones(3), LAMBDA, ETA)


def test_scalar_channel_phase_and_polarization():
    r = np.array([0.0, 15.0, 0.0])
    H = scalar_channel(r, np.zeros(3), Z, LAMBDA, ETA)
    expected = -1j * ETA * np.exp(-2j * np.pi * 15.0 / LAMBDA) / (2 * LAMBDA * 15.0)
    assert H == pytest.approx(expected, rel=1e-12)
    assert abs(scalar_channel(r, np.zeros(3), np.array([1.0, 0.0, 0.0]), LAMBDA, ETA)) < 1e-12


def test_channel_matrix_matches_pointwise_channels():
    rng = np.random.default_rng(11)
    positions = np.array([[1.0, 15.0, 0.5], [-3.0, 22.0, 2.0]])
    polarizations = np.array([[0.0, 0.0, 1.0], [0.6, 0.0, 0.8]])
    points = np.column_stack([rng.uniform(-0.25, 0.25, 6), rng.uniform(0, 0.1, 6), rng.uniform(-0.25, 0.25, 6)])
    H = channel_matrix(positions, polarizations, points, LAMBDA, ETA)
    for n in range(len(points)):
        for k in range(len(positions)):
            assert H[n, k] == pytest.approx(scalar_channel(positions[k], points[n], polarizations[k], LAMBDA, ETA))


def test_channel_magnitude_translation_invariant():
    positions = np.array([[1.0, 15.0, 0.5]])
    points = np.array([[0.1, 0.0, -0.2], [0.0, 0.05, 0.0]])
    shift = np.array([3.0, -1.0, 2.0])
    H = channel_matrix(positions, Z[None, :], points, LAMBDA, ETA)
    shifted = channel_matrix(positions + shift, Z[None, :], points + shift, LAMBDA, ETA)
    np.testing.assert_allclose(np.abs(shifted), np.abs(H), rtol=1e-10)


def test_flat_broadside_channel_is_nearly_uniform():
    scn = make_scenario([[0.0, 15.0, 0.0]])
    grid = tensor_grid(8, 0.5, 0.5)
    channels = build_channels(scn, make_shape("flat", (0.5, 0.5), 9), grid)
    reference = ETA / (2 * scn.wavelength * 15.0)
    np.testing.assert_allclose(np.abs(channels.H[:, 0]), reference, rtol=1e-2)
    assert np.all(channels.zeta == 1.0)


def test_doubling_distance_halves_channel():
    grid = tensor_grid(6, 0.5, 0.5)
    shape = make_shape("flat", (0.5, 0.5), 9)
    near = build_channels(make_scenario([[0.0, 15.0, 0.0]]), shape, grid)
    far = build_channels(make_scenario([[0.0, 30.0, 0.0]]), shape, grid)
    np.testing.assert_allclose(np.abs(near.H) / np.abs(far.H), 2.0, rtol=1e-3)


def test_curved_shape_raises_area_element(three_users):
    grid = tensor_grid(6, 0.5, 0.5)
    channels = build_channels(three_users, make_shape("paraboloid", (0.5, 0.5), 17), grid)
    assert np.all(channels.zeta >= 1.0)
    assert channels.zeta.max() > 1.0
    assert channels.H.shape == (36, 3)


def test_aperture_mismatch(three_users):
    with pytest.raises(InvalidConfigurationError):
        build_channels(three_users, make_shape("flat", (0.4, 0.4), 9), tensor_grid(4, 0.4, 0.4))


def test_user_inside_aperture_region():
    scn = make_scenario([[0.0, 0.01, 0.0]])
    with pytest.raises(ChannelSingularityError):
        build_channels(scn, make_shape("paraboloid", (0.5, 0.5), 9), tensor_grid(4, 0.5, 0.5))


def test_correlation_is_hermitian_psd(instance):
    Q = instance["Q"]
    np.testing.assert_array_equal(Q, Q.conj().T)
    assert np.linalg.eigvalsh(Q).min() > -1e-9 * np.abs(Q).max()


def test_single_user_correlation_is_channel_energy():
    scn = make_scenario([[0.5, 18.0, -0.3]])
    grid = tensor_grid(8, 0.5, 0.5)
    channels = build_channels(scn, make_shape("paraboloid", (0.5, 0.5), 17), grid)
    Q = correlation_Q(channels, grid).Q
    energy = integrate(np.abs(channels.H[:, 0]) ** 2 * channels.zeta, grid).real
    assert Q[0, 0].real == pytest.approx(energy, rel=1e-12)
    assert Q[0, 0].imag == 0.0


def test_colocated_users_give_rank_one_correlation():
    scn = make_scenario([[0.5, 18.0, -0.3], [0.5, 18.0, -0.3]])
    grid = tensor_grid(6, 0.5, 0.5)
    Q = correlation_Q(build_channels(scn, make_shape("flat", (0.5, 0.5), 9), grid), grid).Q
    assert abs(np.linalg.det(Q)) <= 1e-8 * np.abs(Q).max() ** 2
