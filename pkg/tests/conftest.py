import os

import numpy as np
import pytest
import structlog

from fcapa.models.scenario import Scenario, UserSpec
from fcapa.models.solver import SolveOptions
from fcapa.services.current_optimizer import fp_constants, initial_solution, solve_W, update_aux
from fcapa.services.em_channel import build_channels, correlation_Q
from fcapa.services.geometry import make_shape
from fcapa.services.quadrature import tensor_grid

P_T = 0.1
NOISE = 5.6e-3


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch, tmp_path):
    """No FCAPA_* variables or .env file leak into a test; logging goes back to defaults afterwards"""
    for name in list(os.environ):
        if name.startswith("FCAPA_"):
            monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    yield
    structlog.reset_defaults()


def make_scenario(positions, aperture=(0.5, 0.5), frequency_hz=2.4e9, noise=NOISE, power=P_T, polarizations=None):
    positions = np.asarray(positions, dtype=float)
    if polarizations is None:
        polarizations = np.tile([0.0, 0.0, 1.0], (len(positions), 1))
    weight = 1.0 / len(positions)
    return Scenario(
        users=[
            UserSpec(position=tuple(p), polarization=tuple(q), noise_variance=noise, weight=weight)
            for p, q in zip(positions.tolist(), np.asarray(polarizations, dtype=float).tolist())
        ],
        frequency_hz=frequency_hz,
        impedance=120 * np.pi,
        transmit_power=power,
        aperture=aperture,
    )


@pytest.fixture
def three_users():
    return make_scenario([[1.0, 16.0, 0.5], [-2.0, 20.0, -1.0], [0.3, 25.0, 2.0]])


@pytest.fixture
def two_users():
    return make_scenario([[0.5, 15.0, 0.3], [-0.4, 18.0, -0.2]])


@pytest.fixture
def fast_options():
    return SolveOptions(iterations=3, quadrature_order=8)


@pytest.fixture
def instance(three_users):
    """Channels, correlation and one consistent (aux, consts, W) round on a paraboloid aperture"""
    grid = tensor_grid(8, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.25)
    channels = build_channels(three_users, shape, grid)
    Q = correlation_Q(channels, grid).Q
    aux = update_aux(initial_solution(Q), three_users)
    consts = fp_constants(aux, three_users)
    solution = solve_W(Q, consts)
    return {
        "scn": three_users,
        "grid": grid,
        "shape": shape,
        "channels": channels,
        "Q": Q,
        "aux": aux,
        "consts": consts,
        "solution": solution,
    }


@pytest.fixture
def small_settings_data():
    return {
        "users": 2,
        "aperture_area": 0.09,
        "quadrature_order": 6,
        "shape_resolution": 9,
        "iterations": 2,
        "flexible_mimo_iterations": 1,
        "realizations": 1,
    }
