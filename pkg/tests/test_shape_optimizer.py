import numpy as np
import pytest

from fcapa.models.geometry import SurfaceShape
from fcapa.models.scenario import ChannelSet
from fcapa.models.solver import CurrentField, Evaluation, FPConstants, FredholmSolution, SolveOptions
from fcapa.services.baselines import rigid_capa_wsr
from fcapa.services.current_optimizer import (
    coupling_matrix, eval_currents, fp_constants, initial_solution, radiated_power, sinr, solve_W, surrogate,
    update_aux, wsr,
)
from fcapa.services.em_channel import build_channels, correlation_Q
from fcapa.services.geometry import finite_diff_fields, make_shape, sample_shape
from fcapa.services.quadrature import tensor_grid
from fcapa.services.shape_optimizer import (
    armijo_ascent, dominant_field, dominant_field_loop, el_residual, envelope_gradient, envelope_point,
    resample_to_shape, shape_gradient, sobolev_direction, solve,
)

from .conftest import make_scenario


def _round(scn, shape, grid):
    channels = build_channels(scn, shape, grid)
    Q = correlation_Q(channels, grid).Q
    aux = update_aux(initial_solution(Q), scn)
    consts = fp_constants(aux, scn)
    return channels, aux, consts, solve_W(Q, consts)


def test_dominant_field_matrix_form_matches_loop(instance):
    channels, grid, consts = instance["channels"], instance["grid"], instance["consts"]
    currents = eval_currents(channels, consts, instance["solution"])
    integrated = FredholmSolution(
        W=coupling_matrix(channels, currents, grid), rho=radiated_power(currents, channels, grid),
    )
    fast = dominant_field(channels, currents, consts, integrated)
    slow = dominant_field_loop(channels, currents, consts, grid)
    assert np.max(np.abs(fast - slow)) <= 1e-10 * np.max(np.abs(slow))


def test_dominant_field_signal_only():
    H = np.array([[1 + 1j], [0.5], [-2j]])
    J = np.array([[0.3], [1j], [1.0]])
    consts = FPConstants(
        a=np.array([0.7 - 0.2j]), b=np.zeros(1), c=np.zeros(1), a_bar=np.zeros(1), b_bar=np.zeros(1), c_sum=0.0,
    )
    solution = FredholmSolution(W=np.ones((1, 1), dtype=complex), rho=1.0)
    Gd = dominant_field(ChannelSet(H=H, zeta=np.ones(3)), CurrentField(J=J), consts, solution)
    np.testing.assert_allclose(Gd, 2 * np.real((0.7 - 0.2j) * H[:, 0] * J[:, 0]))


def test_dominant_field_of_zero_currents(instance):
    zero = CurrentField(J=np.zeros_like(instance["channels"].H))
    Gd = dominant_field(instance["channels"], zero, instance["consts"], instance["solution"])
    assert np.all(Gd == 0)


def test_resample_constant_field():
    grid = tensor_grid(6, 0.5, 0.5)
    shape = make_shape("flat", (0.5, 0.5), 11)
    np.testing.assert_allclose(resample_to_shape(np.full(grid.size, 2.5), grid, shape), 2.5)


def test_residual_vanishes_on_flat_shape():
    fields = finite_diff_fields(make_shape("flat", (0.5, 0.5), 9))
    assert np.all(el_residual(np.full((9, 9), 3.0), fields) == 0)


def test_residual_for_constant_field_on_paraboloid():
    shape = make_shape("paraboloid", (0.5, 0.5), 101)
    G = el_residual(np.full(shape.g.shape, 2.0), finite_diff_fields(shape))
    uu, vv = np.meshgrid(*shape.axes, indexing="ij")
    r2 = uu ** 2 + vv ** 2
    expected = -2.0 * (4 + 8 * r2) / (1 + 4 * r2) ** 1.5
    np.testing.assert_allclose(G[1:-1, 1:-1], expected[1:-1, 1:-1], rtol=1e-3)


def test_residual_is_pinned_and_symmetric():
    shape = make_shape("paraboloid", (0.5, 0.5), 21)
    uu, _ = np.meshgrid(*shape.axes, indexing="ij")
    G = el_residual(1.0 + uu ** 2, finite_diff_fields(shape))
    assert np.all(G[0, :] == 0) and np.all(G[-1, :] == 0)
    assert np.all(G[:, 0] == 0) and np.all(G[:, -1] == 0)
    np.testing.assert_allclose(G, G[::-1, :], atol=1e-12 * np.abs(G).max())


def test_shape_gradient_matches_finite_differences_per_entry(two_users):
    """Height gradient against a frozen-channel central difference of the envelope objective, per cell area"""
    scn = two_users
    grid = tensor_grid(8, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 9, morph_range=0.25)
    channels, aux, consts, solution = _round(scn, shape, grid)
    currents = eval_currents(channels, consts, solution)
    G = shape_gradient(channels, currents, consts, solution, grid, shape).G

    du, dv = shape.spacing
    delta = 1e-6

    def value(heights):
        zeta = sample_shape(shape.with_heights(heights), grid.nodes_uv).zeta
        frozen = ChannelSet(H=channels.H, zeta=zeta)
        return surrogate(solve_W(correlation_Q(frozen, grid).Q, consts), consts, aux, scn)

    oracle = np.zeros_like(shape.g)
    for i in range(1, 8):
        for j in range(1, 8):
            bump = np.zeros_like(shape.g)
            bump[i, j] = delta
            oracle[i, j] = (value(shape.g + bump) - value(shape.g - bump)) / (2 * delta * du * dv)

    interior, reference = G[1:-1, 1:-1], oracle[1:-1, 1:-1]
    significant = np.abs(reference) > 0.01 * np.abs(reference).max()
    assert significant.sum() >= 10
    np.testing.assert_allclose(interior[significant], reference[significant], rtol=0.05)


def test_envelope_gradient_vanishes_on_flat_shape(instance):
    flat = make_shape("flat", (0.5, 0.5), 17, morph_range=0.25)
    Gd = np.linspace(1.0, 2.0, instance["grid"].size)
    assert np.all(envelope_gradient(Gd, instance["grid"], flat) == 0)


def test_envelope_gradient_is_pinned_and_symmetric():
    grid = tensor_grid(6, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 13, morph_range=0.25)
    G = envelope_gradient(np.ones(grid.size), grid, shape)
    assert np.all(G[0, :] == 0) and np.all(G[:, -1] == 0)
    assert np.abs(G).max() > 0
    np.testing.assert_allclose(G, G[::-1, ::-1], atol=1e-10 * np.abs(G).max())


def test_sobolev_direction_solves_the_smoothing_system():
    rng = np.random.default_rng(4)
    G = np.zeros((11, 9))
    G[1:-1, 1:-1] = rng.standard_normal((9, 7))
    spacing, length = (0.05, 0.04), 0.1
    V = sobolev_direction(G, spacing, length)

    assert np.all(V[0, :] == 0) and np.all(V[:, 0] == 0)
    laplacian = (
        (V[2:, 1:-1] - 2 * V[1:-1, 1:-1] + V[:-2, 1:-1]) / spacing[0] ** 2
        + (V[1:-1, 2:] - 2 * V[1:-1, 1:-1] + V[1:-1, :-2]) / spacing[1] ** 2
    )
    np.testing.assert_allclose(V[1:-1, 1:-1] - length ** 2 * laplacian, G[1:-1, 1:-1], atol=1e-10)
    assert np.sum(G * V) > 0


def test_sobolev_direction_without_length_is_the_gradient():
    G = np.arange(25.0).reshape(5, 5)
    np.testing.assert_array_equal(sobolev_direction(G, (0.1, 0.1), 0.0), G)


def test_envelope_point_reuses_channels(instance):
    scn, shape, grid = instance["scn"], instance["shape"], instance["grid"]
    point = envelope_point(scn, shape, grid, instance["consts"], instance["aux"], instance["channels"])
    np.testing.assert_array_equal(point.channels.H, instance["channels"].H)
    np.testing.assert_allclose(point.solution.W, instance["solution"].W)
    assert point.arpu == pytest.approx(wsr(instance["solution"], scn)[2])


def _quadratic_objective(target):
    def objective(shape):
        du, dv = shape.spacing
        return Evaluation(value=-float(np.sum((shape.g - target) ** 2)) * du * dv)
    return objective


def test_armijo_accepts_first_step_when_it_improves():
    shape = make_shape("flat", (0.5, 0.5), 5, morph_range=1.0)
    G = -2 * (shape.g - 0.05)
    step = armijo_ascent(shape, G, _quadratic_objective(0.05), initial_step=0.1)
    assert step.step == 0.1
    assert step.trials == 1
    np.testing.assert_allclose(step.shape.g, 0.01)
    assert step.gain > 0


def test_armijo_backtracks_from_long_steps():
    shape = make_shape("flat", (0.5, 0.5), 5, morph_range=1.0)
    objective = _quadratic_objective(0.05)
    step = armijo_ascent(shape, -2 * (shape.g - 0.05), objective, initial_step=100.0)
    assert 0 < step.step < 100.0
    assert step.trials > 1
    assert objective(step.shape).value > objective(shape).value


def test_armijo_zero_gradient_is_a_stall():
    shape = make_shape("flat", (0.5, 0.5), 5, morph_range=1.0)
    step = armijo_ascent(shape, np.zeros_like(shape.g), _quadratic_objective(0.05), initial_step=1.0)
    assert step.step == 0.0
    np.testing.assert_array_equal(step.shape.g, shape.g)


def test_armijo_without_morph_range_never_moves():
    shape = make_shape("flat", (0.5, 0.5), 5)
    step = armijo_ascent(shape, np.ones_like(shape.g), _quadratic_objective(0.05), initial_step=0.01)
    assert step.step == 0.0
    np.testing.assert_array_equal(step.shape.g, shape.g)


def test_armijo_guard_rejects_worse_guard():
    shape = make_shape("flat", (0.5, 0.5), 5, morph_range=1.0)

    def objective(candidate):
        value = _quadratic_objective(0.05)(candidate).value
        return Evaluation(value=value, guard=-float(np.abs(candidate.g).sum()))

    step = armijo_ascent(
        shape, -2 * (shape.g - 0.05), objective, initial_step=0.1, guard=True, max_trials=5,
    )
    assert step.step == 0.0
    assert step.trials == 5


@pytest.fixture
def fcapa_case(two_users):
    grid = tensor_grid(8, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.25)
    return two_users, grid, shape


def test_solve_keeps_shape_in_band(fcapa_case, fast_options):
    scn, grid, shape = fcapa_case
    report = solve(scn, shape, fast_options, grid)
    assert np.all(np.abs(report.shape.g - shape.g_ref) <= 0.125 + 1e-12)
    assert report.iterations <= 3
    assert len(report.rates) == 2


def test_solve_trace_is_monotone(fcapa_case, fast_options):
    scn, grid, shape = fcapa_case
    trace = solve(scn, shape, fast_options, grid).trace
    values = [row.surrogate for row in trace]
    for before, after in zip(values, values[1:]):
        assert after >= before - 1e-9 * abs(before)


def test_solve_meets_power_budget(fcapa_case, fast_options):
    scn, grid, shape = fcapa_case
    report = solve(scn, shape, fast_options, grid)
    assert report.power == pytest.approx(scn.transmit_power, rel=1e-6)
    assert report.currents.J.shape == (grid.size, 2)


def test_solve_is_deterministic(fcapa_case, fast_options):
    scn, grid, shape = fcapa_case
    first, second = solve(scn, shape, fast_options, grid), solve(scn, shape, fast_options, grid)
    assert first.trace == second.trace
    assert first.arpu == second.arpu
    np.testing.assert_array_equal(first.shape.g, second.shape.g)


def test_surrogate_line_search_mode(fcapa_case):
    scn, grid, shape = fcapa_case
    opts = SolveOptions(iterations=2, quadrature_order=8, line_search_objective="surrogate")
    report = solve(scn, shape, opts, grid)
    assert np.isfinite(report.arpu)
    assert report.arpu > 0


def test_zero_iterations_returns_initial_state(fcapa_case):
    scn, grid, shape = fcapa_case
    report = solve(scn, shape, SolveOptions(iterations=0, quadrature_order=8), grid)
    assert report.trace == []
    assert report.iterations == 0
    assert report.arpu > 0


def test_rigid_aperture_matches_unmorphable_flat_solve(two_users, fast_options):
    grid = tensor_grid(8, 0.5, 0.5)
    flat = make_shape("flat", (0.5, 0.5), 17, morph_range=0.0)
    report = solve(two_users, flat, fast_options, grid)
    rigid = rigid_capa_wsr(two_users, grid, fast_options, resolution=17, preset="flat")
    assert rigid.arpu == report.arpu
    assert rigid.scheme == "capa"
    assert all(row.step == 0.0 for row in report.trace)


def test_unmorphable_reference_solve_is_the_rigid_aperture(two_users, fast_options):
    grid = tensor_grid(8, 0.5, 0.5)
    frozen = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.0)
    report = solve(two_users, frozen, fast_options, grid)
    rigid = rigid_capa_wsr(two_users, grid, fast_options, resolution=17)
    assert rigid.arpu == report.arpu
    assert rigid.rates == report.rates


def test_morphing_never_falls_below_the_rigid_aperture(three_users):
    grid = tensor_grid(8, 0.5, 0.5)
    opts = SolveOptions(iterations=5, quadrature_order=8)
    rigid = rigid_capa_wsr(three_users, grid, opts, resolution=17)
    shape = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.25)
    report = solve(three_users, shape, opts, grid)
    assert report.arpu >= rigid.arpu * (1 - 1e-4)


def test_solve_converges_within_ten_iterations(three_users):
    grid = tensor_grid(8, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.25)
    opts = SolveOptions(iterations=10, quadrature_order=8, early_stop_tolerance=0.0)
    values = [row.surrogate for row in solve(three_users, shape, opts, grid).trace]
    assert len(values) == 10
    changes = [abs(after - before) / abs(before) for before, after in zip(values, values[1:])]
    assert min(changes) < 1e-4


def test_solution_is_stable_under_grid_refinement(two_users):
    grid = tensor_grid(8, 0.5, 0.5)
    opts = SolveOptions(iterations=6, quadrature_order=8)
    reports = [
        solve(two_users, make_shape("paraboloid", (0.5, 0.5), n, morph_range=0.25), opts, grid) for n in (17, 33)
    ]
    peaks = [float(finite_diff_fields(report.shape).zeta.max()) for report in reports]
    assert peaks[1] == pytest.approx(peaks[0], rel=0.03)
    assert max(peaks) <= 1.05 * np.sqrt(1.5)
    assert reports[1].arpu == pytest.approx(reports[0].arpu, rel=1e-2)


def test_armijo_moves_along_the_given_direction():
    shape = make_shape("flat", (0.5, 0.5), 5, morph_range=1.0)
    G = -2 * (shape.g - 0.05)
    direction = np.zeros_like(shape.g)
    direction[2, 2] = 1.0
    step = armijo_ascent(shape, G, _quadratic_objective(0.05), initial_step=0.05, direction=direction)
    assert step.step == 0.05
    moved = step.shape.g - shape.g
    assert moved[2, 2] == pytest.approx(0.05)
    assert np.count_nonzero(moved) == 1


def test_single_user_rate_does_not_drop():
    scn = make_scenario([[0.5, 18.0, -0.3]])
    grid = tensor_grid(8, 0.5, 0.5)
    shape = make_shape("paraboloid", (0.5, 0.5), 17, morph_range=0.25)
    Q = correlation_Q(build_channels(scn, shape, grid), grid).Q
    start = np.log2(1 + sinr(initial_solution(Q), scn))[0]
    report = solve(scn, shape, SolveOptions(iterations=3, quadrature_order=8), grid)
    assert report.arpu >= start - 1e-9 * start


def test_custom_shape_lattice_runs(two_users, fast_options):
    axis = np.linspace(-0.25, 0.25, 9)
    uu, vv = np.meshgrid(axis, axis, indexing="ij")
    g = 0.05 * np.cos(4 * uu) * np.cos(4 * vv)
    shape = SurfaceShape(half_lengths=(0.25, 0.25), g=g, g_ref=g.copy(), morph_range=0.1)
    report = solve(two_users, shape, fast_options, tensor_grid(8, 0.5, 0.5))
    assert np.isfinite(report.arpu)
