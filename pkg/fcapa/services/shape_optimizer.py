import time
from typing import Callable, Optional

import numpy as np
import structlog
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from ..models.geometry import ShapeFields, SurfaceShape
from ..models.quadrature import QuadratureGrid
from ..models.scenario import ChannelSet, Scenario
from ..models.solver import (
    AscentStep, AuxVars, CurrentField, EnvelopePoint, Evaluation, FPConstants,
    FredholmSolution, ShapeGradient, SolveOptions, SolveReport, TraceRow,
)
from .current_optimizer import (
    coupling_matrix, current_block, eval_currents, fp_constants, initial_solution, normalize_currents,
    radiated_power, solve_W, surrogate, update_aux, wsr,
)
from .em_channel import build_channels, correlation_Q
from .errors import NumericalError
from .geometry import bilinear_weights, difference_matrix, finite_diff_fields, project_morph
from .quadrature import tensor_grid

logger = structlog.get_logger(__name__)


def dominant_field(ch: ChannelSet, J: CurrentField, consts: FPConstants, solution: FredholmSolution) -> np.ndarray:
    """Pointwise derivative of the surrogate with respect to the area element"""
    H, currents = ch.H, J.J
    signal = 2.0 * np.real(H * currents * consts.a[None, :]).sum(axis=1)
    interference = 2.0 * np.real(H * ((currents @ np.conj(solution.W)) * consts.b[None, :])).sum(axis=1)
    power = consts.c_sum * (np.abs(currents) ** 2).sum(axis=1)
    return signal - interference - power


def dominant_field_loop(ch: ChannelSet, J: CurrentField, consts: FPConstants, grid: QuadratureGrid) -> np.ndarray:
    """Explicit-sum form of dominant_field with integrated couplings; used as a cross-check"""
    H, currents = ch.H, J.J
    couplings = coupling_matrix(ch, J, grid)
    N, K = H.shape
    Gd = np.zeros(N)
    for n in range(N):
        total = 0.0
        for k in range(K):
            total += 2.0 * np.real(consts.a[k] * H[n, k] * currents[n, k])
            total -= consts.c_sum * np.abs(currents[n, k]) ** 2
            for i in range(K):
                total -= 2.0 * consts.b[i] * np.real(np.conj(couplings[k, i]) * H[n, i] * currents[n, k])
        Gd[n] = total
    return Gd


def resample_to_shape(Gd: np.ndarray, grid: QuadratureGrid, shape: SurfaceShape) -> np.ndarray:
    """Bilinear transfer from the quadrature nodes to the shape grid, nearest-edge outside the nodes"""
    u_nodes, v_nodes = grid.u_nodes, grid.v_nodes
    values = Gd.reshape(grid.order, grid.order).T
    if grid.order == 1:
        return np.full(shape.g.shape, float(values[0, 0]))

    interpolator = RegularGridInterpolator((u_nodes, v_nodes), values, method="linear")
    u, v = shape.axes
    uu, vv = np.meshgrid(
        np.clip(u, u_nodes[0], u_nodes[-1]),
        np.clip(v, v_nodes[0], v_nodes[-1]),
        indexing="ij",
    )
    return interpolator(np.column_stack([uu.ravel(), vv.ravel()])).reshape(shape.g.shape)


def el_residual(Gd_grid: np.ndarray, fields: ShapeFields) -> np.ndarray:
    """Euler-Lagrange ascent field -div((grad g / zeta) Gd), pinned to zero on the boundary"""
    du, dv = fields.spacing
    flux_u = fields.du_g / fields.zeta * Gd_grid
    flux_v = fields.dv_g / fields.zeta * Gd_grid
    G = -(np.gradient(flux_u, du, axis=0) + np.gradient(flux_v, dv, axis=1))
    G[0, :] = G[-1, :] = 0.0
    G[:, 0] = G[:, -1] = 0.0
    return G


def envelope_gradient(
    Gd: np.ndarray,
    grid: QuadratureGrid,
    shape: SurfaceShape,
    fields: Optional[ShapeFields] = None,
) -> np.ndarray:
    """Derivative of the discretized envelope objective with respect to each height sample, per cell area.

    The area element enters the objective only through the bilinear samples of the finite-difference
    slopes at the quadrature nodes, so the derivative is the adjoint of that chain applied to
    weights * Gd * slope / zeta. Boundary samples are pinned to zero.
    """
    if fields is None:
        fields = finite_diff_fields(shape)

    transfer = bilinear_weights(shape, grid.nodes_uv)
    du_g = transfer @ fields.du_g.ravel()
    dv_g = transfer @ fields.dv_g.ravel()
    density = grid.weights_2d * Gd / np.sqrt(1.0 + du_g ** 2 + dv_g ** 2)

    flux_u = (transfer.T @ (density * du_g)).reshape(shape.g.shape)
    flux_v = (transfer.T @ (density * dv_g)).reshape(shape.g.shape)
    (n_u, n_v), (du, dv) = shape.g.shape, shape.spacing
    G = (difference_matrix(n_u, du).T @ flux_u + flux_v @ difference_matrix(n_v, dv)) / (du * dv)
    G[0, :] = G[-1, :] = 0.0
    G[:, 0] = G[:, -1] = 0.0
    return G


def _dirichlet_laplacian(n: int, spacing: float) -> sparse.spmatrix:
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / spacing ** 2


def sobolev_direction(G: np.ndarray, spacing, length: float) -> np.ndarray:
    """H1 representative of G: (I - length^2 Laplacian) V = G inside, V = 0 on the boundary"""
    if length <= 0.0:
        return G.copy()

    inner = G[1:-1, 1:-1]
    n_u, n_v = inner.shape
    if inner.size == 0:
        return np.zeros_like(G)

    operator = sparse.identity(n_u * n_v) + length ** 2 * (
        sparse.kron(_dirichlet_laplacian(n_u, spacing[0]), sparse.identity(n_v))
        + sparse.kron(sparse.identity(n_u), _dirichlet_laplacian(n_v, spacing[1]))
    )
    V = np.zeros_like(G)
    V[1:-1, 1:-1] = np.reshape(spsolve(operator.tocsc(), inner.ravel()), (n_u, n_v))
    return V


def shape_gradient(
    ch: ChannelSet,
    J: CurrentField,
    consts: FPConstants,
    solution: FredholmSolution,
    grid: QuadratureGrid,
    shape: SurfaceShape,
    smoothing_length: float = 0.0,
) -> ShapeGradient:
    Gd = dominant_field(ch, J, consts, solution)
    G = envelope_gradient(Gd, grid, shape)
    return ShapeGradient(
        Gd=Gd,
        Gd_grid=resample_to_shape(Gd, grid, shape),
        G=G,
        direction=sobolev_direction(G, shape.spacing, smoothing_length),
    )


def envelope_point(
    scn: Scenario,
    shape: SurfaceShape,
    grid: QuadratureGrid,
    consts: FPConstants,
    aux: AuxVars,
    channels: Optional[ChannelSet] = None,
) -> EnvelopePoint:
    """Re-solve the currents on `shape` for fixed constants and score the result"""
    if channels is None:
        channels = build_channels(scn, shape, grid)
    correlation = correlation_Q(channels, grid)
    solution = solve_W(correlation.Q, consts)
    _, _, arpu = wsr(solution, scn)
    return EnvelopePoint(
        shape=shape,
        channels=channels,
        correlation=correlation,
        solution=solution,
        surrogate=surrogate(solution, consts, aux, scn),
        arpu=arpu,
    )


def armijo_ascent(
    shape: SurfaceShape,
    G: np.ndarray,
    objective: Callable[[SurfaceShape], Evaluation],
    *,
    initial_step: float,
    direction: Optional[np.ndarray] = None,
    beta: float = 0.5,
    c1: float = 1e-4,
    min_step: float = 1e-12,
    max_trials: int = 60,
    guard: bool = False,
    current: Optional[Evaluation] = None,
) -> AscentStep:
    """Projected backtracking ascent along `direction` (G by default), tested against the gradient G.

    An unchanged shape with step 0 signals a stall.
    """
    if direction is None:
        direction = G
    base = current if current is not None else objective(shape)
    stalled = AscentStep(shape=shape, step=0.0, gain=0.0, trials=0, evaluation=base)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(direction))) or not np.any(direction):
        return stalled

    du, dv = shape.spacing
    step = initial_step
    trials = 0
    while step >= min_step and trials < max_trials:
        candidate = project_morph(shape.with_heights(shape.g + step * direction))
        moved = candidate.g - shape.g
        if not np.any(moved):
            break

        trials += 1
        trial = objective(candidate)
        slope = max(float(np.sum(G * moved)) * du * dv, 0.0)
        required = base.value + c1 * slope
        guard_ok = not guard or trial.guard >= base.guard - 1e-12 * max(1.0, abs(base.guard))
        logger.debug("armijo_trial", step=step, value=trial.value, required=required, guard_ok=guard_ok)
        if trial.value >= required and guard_ok:
            return AscentStep(
                shape=candidate, step=step, gain=trial.value - base.value, trials=trials, evaluation=trial,
            )
        step *= beta

    return stalled.model_copy(update={"trials": trials})


def solve(
    scn: Scenario,
    shape0: SurfaceShape,
    opts: Optional[SolveOptions] = None,
    grid: Optional[QuadratureGrid] = None,
) -> SolveReport:
    """Alternate auxiliary, current and shape blocks, then normalize the final currents"""
    opts = opts or SolveOptions()
    started = time.perf_counter()
    if grid is None:
        grid = tensor_grid(opts.quadrature_order, *scn.aperture)

    shape = project_morph(shape0)
    channels = build_channels(scn, shape, grid)
    correlation = correlation_Q(channels, grid)
    solution = initial_solution(correlation.Q)
    aux = update_aux(solution, scn)
    consts = fp_constants(aux, scn)

    guard = opts.line_search_objective == "wsr"
    smoothing = opts.smoothing_wavelengths * scn.wavelength
    trace = []
    scale = 1.0
    stalls = 0
    calm = 0
    previous = None

    for iteration in range(1, opts.iterations + 1):
        # Auxiliary and current blocks
        solution, aux, rounds = current_block(
            correlation.Q, aux, scn, opts.current_iterations, opts.current_tolerance,
        )
        consts = fp_constants(aux, scn)

        point = envelope_point(scn, shape, grid, consts, aux, channels)
        current = Evaluation(value=point.surrogate, guard=point.arpu, payload=point)

        # Shape block
        step_taken = 0.0
        if shape.morph_range > 0.0:
            raw = eval_currents(point.channels, consts, point.solution)
            gradient = shape_gradient(point.channels, raw, consts, point.solution, grid, shape, smoothing)
            peak = float(np.max(np.abs(gradient.direction)))
            if np.isfinite(peak) and peak > 0.0:
                base_step = opts.armijo_initial_step * scn.wavelength / peak
                step0 = min(scale * base_step, max(base_step, 0.5 * shape.morph_range / peak))
                step = armijo_ascent(
                    shape,
                    gradient.G,
                    lambda candidate: _evaluate(scn, candidate, grid, consts, aux),
                    initial_step=step0,
                    direction=gradient.direction,
                    beta=opts.armijo_beta,
                    c1=opts.armijo_c1,
                    min_step=opts.armijo_min_step,
                    max_trials=opts.armijo_max_trials,
                    guard=guard,
                    current=current,
                )
                if step.step > 0.0:
                    point = step.evaluation.payload
                    step_taken = step.step
                    scale = step.step / base_step
                    if step.trials == 1:
                        scale *= opts.armijo_growth
                else:
                    stalls += 1
                    scale = 1.0

        shape, channels, correlation, solution = point.shape, point.channels, point.correlation, point.solution
        if not (np.isfinite(point.surrogate) and np.isfinite(point.arpu)):
            raise NumericalError("Non-finite objective", iteration)

        trace.append(TraceRow(iteration=iteration, surrogate=point.surrogate, arpu=point.arpu, step=step_taken))
        logger.info(
            "outer_iteration", iteration=iteration, surrogate=point.surrogate, arpu=point.arpu, step=step_taken,
            current_rounds=rounds,
        )

        if previous is not None:
            change = abs(point.surrogate - previous) / max(abs(previous), np.finfo(float).tiny)
            calm = calm + 1 if change < opts.early_stop_tolerance else 0
            if calm >= opts.early_stop_patience:
                break
        previous = point.surrogate

    if not trace:
        solution = solve_W(correlation.Q, consts)

    raw = eval_currents(channels, consts, solution)
    currents = normalize_currents(raw, solution.rho, scn.transmit_power)
    rates, total, arpu = wsr(solution, scn)

    return SolveReport(
        iterations=len(trace),
        trace=trace,
        shape=shape,
        currents=currents,
        channels=channels,
        solution=solution,
        rates=rates.tolist(),
        wsr=total,
        arpu=arpu,
        power=radiated_power(currents, channels, grid),
        wall_ms=1e3 * (time.perf_counter() - started),
        stalls=stalls,
    )


def _evaluate(scn: Scenario, shape: SurfaceShape, grid: QuadratureGrid, consts: FPConstants, aux: AuxVars) -> Evaluation:
    point = envelope_point(scn, shape, grid, consts, aux)
    return Evaluation(value=point.surrogate, guard=point.arpu, payload=point)
