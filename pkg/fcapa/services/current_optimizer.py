from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from ..models.quadrature import QuadratureGrid
from ..models.scenario import ChannelSet, Scenario
from ..models.solver import AuxVars, CurrentField, FPConstants, FredholmSolution
from .errors import DegenerateStateError, NumericalConditioningError, ShapeMismatchError


# Index convention: W[k, i] = w_{k,i} is the amplitude of current k seen by user i,
# so the received amplitude a_i^{(k)} of stream i at user k is W[i, k].

CONDITION_LIMIT = 1e14


def fp_constants(aux: AuxVars, scn: Scenario) -> FPConstants:
    """Quadratic-transform constants for fixed auxiliary variables"""
    if aux.mu.shape != (scn.num_users,) or aux.lam.shape != (scn.num_users,):
        raise ShapeMismatchError(f"Auxiliary variables must have length {scn.num_users}")

    alpha = scn.weights
    lam_sq = np.abs(aux.lam) ** 2
    a = alpha * aux.mu * np.conj(aux.lam)
    b = alpha * lam_sq
    c = alpha * lam_sq * scn.noise_variances / scn.transmit_power
    c_sum = float(c.sum())
    if c_sum <= 0.0:
        raise DegenerateStateError("All auxiliary lambdas vanish; the power penalty is zero")

    return FPConstants(a=a, b=b, c=c, a_bar=a / c_sum, b_bar=b / c_sum, c_sum=c_sum)


def current_coefficients(consts: FPConstants, W: np.ndarray) -> np.ndarray:
    """Cm with J = conj(H) @ Cm, i.e. J_k = conj(A_k) H_k* - sum_i B_i H_i* w_{k,i}"""
    return np.diag(np.conj(consts.a_bar)) - consts.b_bar[:, None] * W.T


def current_power(Q: np.ndarray, consts: FPConstants, W: np.ndarray) -> float:
    """Total current power from the channel correlation alone"""
    Cm = current_coefficients(consts, W)
    rho = np.real(np.einsum("jk,jl,lk->", Cm, Q, np.conj(Cm)))
    return max(float(rho), 0.0)


def initial_solution(Q: np.ndarray) -> FredholmSolution:
    """Matched-filter start J_k = H_k*, for which W equals Q"""
    return FredholmSolution(W=np.array(Q, dtype=complex), rho=max(float(np.real(np.trace(Q))), 0.0))


def solve_W(Q: np.ndarray, consts: FPConstants) -> FredholmSolution:
    """Solve the Fredholm coefficient system (I + Q^T B) W^T = Q^T conj(A)"""
    K = Q.shape[0]
    system = np.eye(K) + Q.T * consts.b_bar[None, :]
    rhs = Q.T * np.conj(consts.a_bar)[None, :]

    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NumericalConditioningError(f"Fredholm system condition number {condition:.3e}")

    try:
        W = lu_solve(lu_factor(system), rhs).T
    except (LinAlgError, ValueError) as e:
        raise NumericalConditioningError(f"Fredholm system solve failed: {e}") from e

    return FredholmSolution(W=W, rho=current_power(Q, consts, W))


def sinr(solution: FredholmSolution, scn: Scenario) -> np.ndarray:
    power = np.abs(solution.W) ** 2
    signal = np.diag(power)
    noise = scn.noise_variances / scn.transmit_power * solution.rho
    interference = power.sum(axis=0) - signal + noise
    return np.divide(signal, interference, out=np.zeros_like(signal), where=interference > 0)


def update_aux(solution: FredholmSolution, scn: Scenario) -> AuxVars:
    """Closed-form mu and lambda for the current Fredholm coefficients"""
    W = solution.W
    total = (np.abs(W) ** 2).sum(axis=0) + scn.noise_variances / scn.transmit_power * solution.rho
    if np.any(total <= 0.0):
        raise DegenerateStateError("Zero received power and zero current power")

    mu = np.sqrt(1.0 + sinr(solution, scn))
    lam = mu * np.diag(W) / total
    return AuxVars(mu=mu, lam=lam)


def current_block(
    Q: np.ndarray,
    aux: AuxVars,
    scn: Scenario,
    rounds: int = 1,
    tol: float = 0.0,
) -> Tuple[FredholmSolution, AuxVars, int]:
    """Alternate solve_W and update_aux on a fixed shape until the weighted log-rate settles.

    Returns the last solution, the auxiliary variables fitted to it and the number of rounds used.
    """
    previous = None
    for count in range(1, max(rounds, 1) + 1):
        solution = solve_W(Q, fp_constants(aux, scn))
        aux = update_aux(solution, scn)
        value = float(scn.weights @ np.log1p(sinr(solution, scn)))
        if previous is not None and abs(value - previous) <= tol * max(abs(previous), np.finfo(float).tiny):
            break
        previous = value
    return solution, aux, count


def eval_currents(ch: ChannelSet, consts: FPConstants, solution: FredholmSolution) -> CurrentField:
    """Unnormalized optimal currents at the quadrature nodes"""
    return CurrentField(J=np.conj(ch.H) @ current_coefficients(consts, solution.W))


def normalize_currents(J: CurrentField, rho: float, P_T: float) -> CurrentField:
    """Common rescaling that meets the power budget with equality"""
    if rho <= 0.0:
        raise DegenerateStateError("Cannot normalize currents with zero total power")

    scale = float(np.sqrt(P_T / rho))
    return CurrentField(J=J.J * scale, power_scale=J.power_scale * scale)


def radiated_power(J: CurrentField, ch: ChannelSet, grid: QuadratureGrid) -> float:
    return float(np.sum((grid.weights_2d * ch.zeta) @ (np.abs(J.J) ** 2)))


def coupling_matrix(ch: ChannelSet, J: CurrentField, grid: QuadratureGrid) -> np.ndarray:
    """Re-integrated W[k, i] = integral of H_i J_k zeta"""
    return (J.J * (grid.weights_2d * ch.zeta)[:, None]).T @ ch.H


def wsr(solution: FredholmSolution, scn: Scenario) -> Tuple[np.ndarray, float, float]:
    """Per-user rates in bit/s/Hz, weighted sum rate and average rate per user"""
    rates = np.log2(1.0 + sinr(solution, scn))
    return rates, float(scn.weights @ rates), float(rates.mean())


def surrogate(solution: FredholmSolution, consts: FPConstants, aux: AuxVars, scn: Scenario) -> float:
    """Quadratic/Lagrangian-dual objective in nats; equals sum(alpha ln(1 + sinr)) right after update_aux"""
    W = solution.W
    signal = 2.0 * np.real(consts.a * np.diag(W)).sum()
    interference = consts.b @ (np.abs(W) ** 2).sum(axis=0)
    dual = scn.weights @ (np.log(aux.mu ** 2) - aux.mu ** 2 + 1.0)
    return float(signal - interference - consts.c_sum * solution.rho + dual)
