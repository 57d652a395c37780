import math
from typing import Optional

import numpy as np
import structlog

from ..models.baselines import DiscreteArray, DiscreteChannel, DiscreteFPState, SchemeResult
from ..models.geometry import SurfaceShape
from ..models.quadrature import QuadratureGrid
from ..models.scenario import Scenario
from ..models.solver import AuxVars, Evaluation, FPConstants, FredholmSolution, SolveOptions, TraceRow
from .current_optimizer import current_coefficients, fp_constants, sinr, solve_W, surrogate, update_aux, wsr
from .em_channel import channel_matrix
from .errors import RankDeficiencyError
from .geometry import reference_shape, sample_shape
from .shape_optimizer import armijo_ascent, solve

logger = structlog.get_logger(__name__)

# Discrete counterpart of the continuous model: beamformer v_k plays the role of J_k and
# user i receives stream k with amplitude h_i^T v_k, hence W = V^T h and Q = h^H h.


def build_discrete_array(
    scn: Scenario,
    shape: Optional[SurfaceShape] = None,
    morph_range: float = 0.0,
) -> DiscreteArray:
    """Half-wavelength lattice over the aperture, lying on `shape` when one is given"""
    d = 0.5 * scn.wavelength
    L_x, L_z = scn.aperture
    n_x, n_z = math.ceil(L_x / d), math.ceil(L_z / d)
    x = np.arange(n_x) * d - 0.5 * L_x
    z = np.arange(n_z) * d - 0.5 * L_z

    if shape is None:
        heights = np.zeros((n_x, n_z))
    else:
        xx, zz = np.meshgrid(x, z, indexing="ij")
        heights = sample_shape(shape, np.column_stack([xx.ravel(), zz.ravel()])).g.reshape(n_x, n_z)

    lattice = SurfaceShape(
        half_lengths=(0.5 * d * max(n_x - 1, 1), 0.5 * d * max(n_z - 1, 1)),
        g=heights,
        g_ref=heights.copy(),
        morph_range=float(morph_range) if shape is not None else 0.0,
    )
    return DiscreteArray(
        spacing=d,
        element_area=scn.wavelength ** 2 / (4 * math.pi),
        x=x,
        z=z,
        heights=lattice,
        flexible=shape is not None,
    )


def _zeta_from_heights(g: np.ndarray, spacing: float) -> np.ndarray:
    if min(g.shape) < 3:
        return np.ones(g.size)
    dx_g, dz_g = np.gradient(g, spacing, spacing, edge_order=2)
    return np.sqrt(1.0 + dx_g ** 2 + dz_g ** 2).ravel()


def element_zeta(arr: DiscreteArray) -> np.ndarray:
    """Area element at each element centre; 1 for the conventional array"""
    if not arr.flexible:
        return np.ones(arr.num_elements)
    return _zeta_from_heights(arr.heights.g, arr.spacing)


def discrete_channels(arr: DiscreteArray, scn: Scenario) -> DiscreteChannel:
    """h[n, k] = sqrt(A_d) H_k(element n) zeta_n"""
    zeta = element_zeta(arr)
    H = channel_matrix(scn.positions, scn.polarizations, arr.positions, scn.wavelength, scn.impedance)
    return DiscreteChannel(h=math.sqrt(arr.element_area) * H * zeta[:, None], zeta=zeta)


def zf_beamformers(h: np.ndarray, scn: Scenario) -> np.ndarray:
    """Zero-forcing directions with equal power P_T / K per user"""
    N, K = h.shape
    if N < K or np.linalg.matrix_rank(h) < K:
        raise RankDeficiencyError(f"Channel matrix {N} x {K} lacks full column rank")

    V = np.linalg.pinv(h.T)
    return V / np.linalg.norm(V, axis=0) * math.sqrt(scn.transmit_power / K)


def zf_wsr(ch: DiscreteChannel, scn: Scenario) -> SchemeResult:
    V = zf_beamformers(ch.h, scn)
    rates, _, arpu = wsr(FredholmSolution(W=V.T @ ch.h, rho=scn.transmit_power), scn)
    return SchemeResult(
        scheme="zf",
        arpu=arpu,
        rates=rates.tolist(),
        power=float(np.sum(np.abs(V) ** 2)),
        beamformers=V,
    )


def _starting_beamformers(h: np.ndarray, scn: Scenario) -> np.ndarray:
    try:
        return zf_beamformers(h, scn)
    except RankDeficiencyError:
        # Matched filter
        V = np.conj(h)
        norms = np.linalg.norm(V, axis=0)
        return V / np.where(norms > 0, norms, 1.0) * math.sqrt(scn.transmit_power / h.shape[1])


def _log_rate(solution: FredholmSolution, scn: Scenario) -> float:
    return float(scn.weights @ np.log1p(sinr(solution, scn)))


def fp_state(h: np.ndarray, scn: Scenario, tol: float = 1e-6, max_iter: int = 50) -> DiscreteFPState:
    """Alternate closed-form (mu, lambda) and beamformer updates, starting from zero forcing"""
    Q = np.conj(h).T @ h
    V = _starting_beamformers(h, scn)
    solution = FredholmSolution(W=V.T @ h, rho=float(np.sum(np.abs(V) ** 2)))
    aux = update_aux(solution, scn)
    value = _log_rate(solution, scn)
    consts = None
    trace = []

    for iteration in range(1, max_iter + 1):
        step_consts = fp_constants(aux, scn)
        candidate = solve_W(Q, step_consts)
        candidate_value = _log_rate(candidate, scn)
        if candidate_value < value:
            break

        change = (candidate_value - value) / max(abs(value), np.finfo(float).tiny)
        solution, consts, value = candidate, step_consts, candidate_value
        aux = update_aux(solution, scn)
        trace.append(TraceRow(iteration=iteration, surrogate=value, arpu=wsr(solution, scn)[2]))
        if change <= tol:
            break

    if consts is not None:
        V = np.conj(h) @ current_coefficients(consts, solution.W)
        V = V * math.sqrt(scn.transmit_power / max(float(np.sum(np.abs(V) ** 2)), np.finfo(float).tiny))

    return DiscreteFPState(solution=solution, aux=aux, consts=consts, beamformers=V, trace=trace)


def fp_wsr(ch: DiscreteChannel, scn: Scenario, tol: float = 1e-6, max_iter: int = 50) -> SchemeResult:
    """Fractional-programming precoder on the discrete channel"""
    state = fp_state(ch.h, scn, tol, max_iter)
    rates, _, arpu = wsr(state.solution, scn)
    return SchemeResult(
        scheme="fp",
        arpu=arpu,
        rates=rates.tolist(),
        iterations=len(state.trace),
        power=float(np.sum(np.abs(state.beamformers) ** 2)),
        trace=state.trace,
        beamformers=state.beamformers,
    )


def _discrete_point(h: np.ndarray, consts: FPConstants, aux: AuxVars, scn: Scenario) -> Evaluation:
    solution = solve_W(np.conj(h).T @ h, consts)
    return Evaluation(value=surrogate(solution, consts, aux, scn), guard=wsr(solution, scn)[2])


def height_gradient(
    arr: DiscreteArray,
    scn: Scenario,
    consts: FPConstants,
    aux: AuxVars,
    step: float,
) -> np.ndarray:
    """Central-difference gradient of the discrete envelope surrogate per element, divided by the cell area"""
    g = arr.heights.g
    positions = arr.positions
    root_area = math.sqrt(arr.element_area)
    zeta = _zeta_from_heights(g, arr.spacing)
    h = discrete_channels(arr, scn).h
    Q = np.conj(h).T @ h

    def value_after(index: int, delta: float) -> float:
        heights = g.ravel().copy()
        heights[index] += delta
        new_zeta = _zeta_from_heights(heights.reshape(g.shape), arr.spacing)
        rows = np.union1d(np.flatnonzero(new_zeta != zeta), [index])

        points = positions[rows].copy()
        points[:, 1] = heights[rows]
        new_rows = root_area * new_zeta[rows, None] * channel_matrix(
            scn.positions, scn.polarizations, points, scn.wavelength, scn.impedance,
        )
        updated = Q - np.conj(h[rows]).T @ h[rows] + np.conj(new_rows).T @ new_rows
        solution = solve_W(updated, consts)
        return surrogate(solution, consts, aux, scn)

    gradient = np.empty(g.size)
    for index in range(g.size):
        gradient[index] = (value_after(index, step) - value_after(index, -step)) / (2 * step)
    return gradient.reshape(g.shape) / arr.spacing ** 2


def optimize_flexible_array(
    arr: DiscreteArray,
    scn: Scenario,
    iterations: int,
    opts: SolveOptions,
    tol: float = 1e-6,
    max_iter: int = 50,
) -> DiscreteArray:
    """Projected ascent of the element heights on the discrete FP surrogate"""
    if arr.heights.morph_range <= 0.0 or min(arr.heights.g.shape) < 3:
        return arr

    for iteration in range(1, iterations + 1):
        state = fp_state(discrete_channels(arr, scn).h, scn, tol, max_iter)
        aux = state.aux
        consts = fp_constants(aux, scn)
        G = height_gradient(arr, scn, consts, aux, 1e-4 * scn.wavelength)
        peak = float(np.max(np.abs(G)))
        if not np.isfinite(peak) or peak == 0.0:
            break

        def objective(lattice: SurfaceShape) -> Evaluation:
            candidate = arr.model_copy(update={"heights": lattice})
            return _discrete_point(discrete_channels(candidate, scn).h, consts, aux, scn)

        step = armijo_ascent(
            arr.heights,
            G,
            objective,
            initial_step=opts.armijo_initial_step * scn.wavelength / peak,
            beta=opts.armijo_beta,
            c1=opts.armijo_c1,
            min_step=opts.armijo_min_step,
            max_trials=opts.armijo_max_trials,
            guard=opts.line_search_objective == "wsr",
        )
        logger.info("flexible_mimo_iteration", iteration=iteration, step=step.step, gain=step.gain)
        if step.step == 0.0:
            break
        arr = arr.model_copy(update={"heights": step.shape})

    return arr


def mimo_wsr(
    scn: Scenario,
    shape: Optional[SurfaceShape] = None,
    morph_range: float = 0.0,
    precoder: str = "fp",
    iterations: int = 5,
    opts: Optional[SolveOptions] = None,
    tol: float = 1e-6,
    max_iter: int = 50,
) -> SchemeResult:
    """Conventional (flat, shape=None) or flexible discrete array with the chosen precoder"""
    opts = opts or SolveOptions()
    arr = build_discrete_array(scn, shape, morph_range)
    if arr.flexible:
        arr = optimize_flexible_array(arr, scn, iterations, opts, tol, max_iter)

    channel = discrete_channels(arr, scn)
    result = zf_wsr(channel, scn) if precoder == "zf" else fp_wsr(channel, scn, tol, max_iter)
    scheme = "mimo-flexible" if arr.flexible else "mimo-conventional"
    return result.model_copy(update={"scheme": scheme})


def rigid_capa_wsr(
    scn: Scenario,
    grid: Optional[QuadratureGrid] = None,
    opts: Optional[SolveOptions] = None,
    resolution: int = 64,
    preset: str = "paraboloid",
    shape_file: Optional[str] = None,
) -> SchemeResult:
    """The reference surface held rigid: zero morphability, so the shape block never moves"""
    opts = opts or SolveOptions()
    shape = reference_shape(preset, scn.aperture, resolution, 0.0, shape_file)
    report = solve(scn, shape, opts, grid)
    return SchemeResult(
        scheme="capa",
        arpu=report.arpu,
        rates=report.rates,
        iterations=report.iterations,
        power=report.power,
        trace=report.trace,
    )
