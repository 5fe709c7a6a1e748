"""Closed-form evaluation of a stabilizing policy pair.

A policy pair is scored by two discounted Lyapunov-type matrices (one for
the deviation process, one for the mean process), the matching discounted
second-moment matrices, the exact utility, and the exact utility gradient
with respect to all four gain blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizing
from .model import (
    DerivedParams,
    ModelParams,
    PolicyPair,
    dev_closed_loop,
    mean_closed_loop,
    spectral_norm,
    validate,
)

KRONECKER_MAX_DIM = 32
SERIES_TOL = 1e-12
COND_LIMIT = 1e12


def _dlyap(M: np.ndarray, source: np.ndarray, gamma: float) -> np.ndarray:
    """Solve P = source + gamma * M^T P M.

    Exact Kronecker vectorization for d <= KRONECKER_MAX_DIM (one dense
    d^2 x d^2 solve), convergent series accumulation beyond. Caller is
    responsible for the spectral precondition.
    """
    d = M.shape[0]
    if d <= KRONECKER_MAX_DIM:
        eye = np.eye(d * d)
        system = eye - gamma * np.kron(M.T, M.T)
        if np.linalg.cond(system) > COND_LIMIT:
            raise NotStabilizing("discounted Lyapunov system is near-singular")
        vec = np.linalg.solve(system, source.reshape(-1, order="F"))
        return vec.reshape((d, d), order="F")
    # series: sum_t gamma^t (M^T)^t source M^t
    total = source.copy()
    term = source.copy()
    scale = max(1.0, float(np.linalg.norm(source)))
    for _ in range(100_000):
        term = gamma * (M.T @ term @ M)
        total += term
        if np.linalg.norm(term) <= SERIES_TOL * scale:
            return total
    raise NotStabilizing("Lyapunov series did not converge")


def _require_dev_stable(params: ModelParams, M: np.ndarray) -> None:
    sn = spectral_norm(M)
    if params.gamma * sn * sn >= 1.0:
        raise NotStabilizing(
            "deviation closed loop fails gamma * ||M||^2 < 1"
        )


def solve_dev_value(params: ModelParams, K1, K2) -> np.ndarray:
    """Value matrix of the deviation process for gains (K1, K2).

    Unique solution of P = Q + K1' R1 K1 - K2' R2 K2 + gamma M' P M with
    M = A - B1 K1 + B2 K2.
    """
    K1 = np.atleast_2d(K1)
    K2 = np.atleast_2d(K2)
    M = dev_closed_loop(params, K1, K2)
    _require_dev_stable(params, M)
    source = params.Q + K1.T @ params.R1 @ K1 - K2.T @ params.R2 @ K2
    return _dlyap(M, source, params.gamma)


def solve_mean_value(params: ModelParams, L1, L2,
                     derived: DerivedParams | None = None) -> np.ndarray:
    """Value matrix of the mean process for gains (L1, L2); tilde variant."""
    der = derived if derived is not None else validate(params)
    L1 = np.atleast_2d(L1)
    L2 = np.atleast_2d(L2)
    M = der.A_tilde - der.B1_tilde @ L1 + der.B2_tilde @ L2
    sn = spectral_norm(M)
    if params.gamma * sn * sn >= 1.0:
        raise NotStabilizing("mean closed loop fails gamma * ||M||^2 < 1")
    source = der.Q_tilde + L1.T @ der.R1_tilde @ L1 - L2.T @ der.R2_tilde @ L2
    return _dlyap(M, source, params.gamma)


def discounted_second_moment(M: np.ndarray, V0: np.ndarray, W: np.ndarray,
                             gamma: float) -> np.ndarray:
    """Sum of gamma^t E[s_t s_t'] for s_{t+1} = M s_t + eps.

    E[s_0 s_0'] = V0 and Cov(eps) = W. Solves
    Sigma = V0 + gamma * M Sigma M' + gamma/(1-gamma) * W,
    which follows from summing the moment recursion V_{t+1} = M V_t M' + W.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    sn = spectral_norm(M)
    if gamma * sn * sn >= 1.0:
        raise NotStabilizing("closed loop fails gamma * ||M||^2 < 1")
    source = V0 + gamma / (1.0 - gamma) * W
    # Sigma = source + gamma M Sigma M'  ==  transposed-loop Lyapunov solve
    return _dlyap(M.T, source, gamma)


@dataclass(frozen=True)
class ValueSolution:
    """Closed-form evaluation of one policy pair.

    ``P_dev``/``P_mean`` are the Lyapunov-type value matrices,
    ``Sigma_dev``/``Sigma_mean`` the discounted second moments of the two
    processes, and ``cost = cost_dev + cost_mean`` is the exact utility.
    """

    P_dev: np.ndarray
    P_mean: np.ndarray
    Sigma_dev: np.ndarray
    Sigma_mean: np.ndarray
    cost_dev: float
    cost_mean: float
    cost: float


@dataclass(frozen=True)
class GradientPair:
    """Exact utility gradient, one block per gain matrix.

    Each gradient block is 2 * coef * Sigma for the matching coefficient
    block; the stacked 2x2 weight matrices are kept for diagnostics.
    """

    dK1: np.ndarray
    dL1: np.ndarray
    dK2: np.ndarray
    dL2: np.ndarray
    coef_K1: np.ndarray
    coef_K2: np.ndarray
    coef_L1: np.ndarray
    coef_L2: np.ndarray
    R_block_dev: np.ndarray
    R_block_mean: np.ndarray

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.dK1, self.dL1, self.dK2, self.dL2

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b))) for b in self.blocks())


def _moment_inputs(params: ModelParams):
    """Initial second moments and step covariances of the two processes.

    The deviation process starts at the recentred idiosyncratic draw, so its
    initial second moment is that draw's covariance; the mean process starts
    at the common draw plus the idiosyncratic mean.
    """
    d = params.d
    noise = params.noise
    V0_dev = noise.init_idio.cov(d)
    mu = noise.init_common.mean(d) + noise.init_idio.mean(d)
    V0_mean = noise.init_common.cov(d) + np.outer(mu, mu)
    W_dev = noise.step_idio.cov(d)
    W_mean = noise.step_common.cov(d)
    return V0_dev, V0_mean, W_dev, W_mean


def exact_utility(params: ModelParams, theta: PolicyPair,
                  derived: DerivedParams | None = None) -> ValueSolution:
    """Exact discounted utility of a stabilizing policy pair.

    cost_dev = tr(P_dev V0_dev) + gamma/(1-gamma) tr(P_dev W_dev), and the
    mean part analogously; the total is their sum.
    """
    der = derived if derived is not None else validate(params)
    theta.check_dims(params)
    P_dev = solve_dev_value(params, theta.K1, theta.K2)
    P_mean = solve_mean_value(params, theta.L1, theta.L2, der)
    V0_dev, V0_mean, W_dev, W_mean = _moment_inputs(params)
    g = params.gamma
    M_dev = dev_closed_loop(params, theta.K1, theta.K2)
    M_mean = mean_closed_loop(params, theta.L1, theta.L2, der)
    Sigma_dev = discounted_second_moment(M_dev, V0_dev, W_dev, g)
    Sigma_mean = discounted_second_moment(M_mean, V0_mean, W_mean, g)
    tail = g / (1.0 - g)
    cost_dev = float(np.trace(P_dev @ V0_dev) + tail * np.trace(P_dev @ W_dev))
    cost_mean = float(np.trace(P_mean @ V0_mean) + tail * np.trace(P_mean @ W_mean))
    return ValueSolution(
        P_dev=P_dev, P_mean=P_mean,
        Sigma_dev=Sigma_dev, Sigma_mean=Sigma_mean,
        cost_dev=cost_dev, cost_mean=cost_mean,
        cost=cost_dev + cost_mean,
    )


def exact_gradient(params: ModelParams, theta: PolicyPair,
                   derived: DerivedParams | None = None) -> GradientPair:
    """Exact utility gradient with respect to (K1, L1, K2, L2).

    Deviation part: with P = P_dev and Sigma = Sigma_dev,
      dK1 = 2 [ (R1 + g B1'PB1) K1 - g B1'PB2 K2 - g B1'P A ] Sigma
      dK2 = 2 [ -g B2'PB1 K1 + (-R2 + g B2'PB2) K2 + g B2'P A ] Sigma
    and the mean part is the tilde analogue.
    """
    der = derived if derived is not None else validate(params)
    sol = exact_utility(params, theta, der)
    g = params.gamma
    K1, L1, K2, L2 = theta.K1, theta.L1, theta.K2, theta.L2

    def blocks(P, Sigma, A, B1, B2, R1, R2, G1, G2):
        B1PB1 = B1.T @ P @ B1
        B1PB2 = B1.T @ P @ B2
        B2PB1 = B2.T @ P @ B1
        B2PB2 = B2.T @ P @ B2
        B1PA = B1.T @ P @ A
        B2PA = B2.T @ P @ A
        R_block = np.block([
            [R1 + g * B1PB1, -g * B1PB2],
            [-g * B2PB1, -R2 + g * B2PB2],
        ])
        coef_1 = (R1 + g * B1PB1) @ G1 - g * B1PB2 @ G2 - g * B1PA
        coef_2 = -g * B2PB1 @ G1 + (-R2 + g * B2PB2) @ G2 + g * B2PA
        return coef_1, coef_2, R_block

    coef_K1, coef_K2, R_block_dev = blocks(
        sol.P_dev, sol.Sigma_dev, params.A, params.B1, params.B2,
        params.R1, params.R2, K1, K2)
    coef_L1, coef_L2, R_block_mean = blocks(
        sol.P_mean, sol.Sigma_mean, der.A_tilde, der.B1_tilde, der.B2_tilde,
        der.R1_tilde, der.R2_tilde, L1, L2)

    return GradientPair(
        dK1=2.0 * coef_K1 @ sol.Sigma_dev,
        dL1=2.0 * coef_L1 @ sol.Sigma_mean,
        dK2=2.0 * coef_K2 @ sol.Sigma_dev,
        dL2=2.0 * coef_L2 @ sol.Sigma_mean,
        coef_K1=coef_K1, coef_K2=coef_K2,
        coef_L1=coef_L1, coef_L2=coef_L2,
        R_block_dev=R_block_dev, R_block_mean=R_block_mean,
    )
