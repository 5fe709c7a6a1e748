"""Sample-based gradient estimation from black-box utility rollouts.

For one player at a time: draw M pairs of sphere perturbations for that
player's two gain blocks, score each jointly-perturbed policy with one
truncated mean-field rollout, and average utility-weighted perturbations.
The opponent's gains are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateDraw
from .model import ModelParams, PolicyPair
from .simulate import mkv_utility_batch

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class EstimatorConfig:
    """Perturbation count M, rollout truncation horizon, sphere radius tau,
    and the seed all randomness derives from.

    ``smoothing_dim`` selects the constant in front of the estimator:
    "parameter" uses the number of perturbed entries per block (ell * d),
    "state" uses the state dimension d. The two agree when d = ell = 1.
    """

    M: int
    horizon: int
    tau: float
    seed: int
    smoothing_dim: str = "parameter"

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.smoothing_dim not in ("parameter", "state"):
            raise ValueError("smoothing_dim must be 'parameter' or 'state'")


def sphere_sample(dim: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the radius-tau sphere in R^dim
    (normalized Gaussian; all-zero draws are redrawn)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    for _ in range(_MAX_REDRAWS):
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 0.0:
            return tau * v / norm
    raise DegenerateDraw(f"all-zero Gaussian draws {_MAX_REDRAWS} times in a row")


def _sphere_stack(n: int, dim: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """n independent sphere draws, shape (n, dim)."""
    v = rng.standard_normal((n, dim))
    norms = np.linalg.norm(v, axis=1)
    for _ in range(_MAX_REDRAWS):
        bad = norms == 0.0
        if not bad.any():
            return tau * v / norms[:, None]
        v[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms[bad] = np.linalg.norm(v[bad], axis=1)
    raise DegenerateDraw(f"all-zero Gaussian draws {_MAX_REDRAWS} times in a row")


UtilityFn = Callable[[dict[str, np.ndarray], np.random.SeedSequence], np.ndarray]


def estimate_gradient(
    params: ModelParams,
    theta: PolicyPair,
    player: int,
    cfg: EstimatorConfig,
    utility_fn: UtilityFn | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimated utility gradient for one player's (K, L) blocks.

    Per perturbation i, both of the player's blocks get independent sphere
    perturbations and one utility sample scores them jointly:
      grad_K ~= (D / tau^2) * mean_i(C_i * v_K_i),   D per `smoothing_dim`.

    `utility_fn` defaults to batched mean-field rollouts; tests may inject
    a surrogate. It receives the stacked perturbed gains (the opponent's
    entries are plain shared matrices) and a seed sequence for rollout noise.
    """
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    theta.check_dims(params)
    ell, d = params.ell, params.d
    block_dim = ell * d
    smooth = block_dim if cfg.smoothing_dim == "parameter" else d

    root = np.random.SeedSequence(int(cfg.seed))
    pert_ss, sim_ss = root.spawn(2)
    rng = np.random.default_rng(pert_ss)
    vK = _sphere_stack(cfg.M, block_dim, cfg.tau, rng).reshape(cfg.M, ell, d)
    vL = _sphere_stack(cfg.M, block_dim, cfg.tau, rng).reshape(cfg.M, ell, d)

    own_K, own_L = ("K1", "L1") if player == 1 else ("K2", "L2")
    own_K_mat = theta.K1 if player == 1 else theta.K2
    own_L_mat = theta.L1 if player == 1 else theta.L2
    gains: dict[str, np.ndarray] = {
        "K1": theta.K1, "L1": theta.L1, "K2": theta.K2, "L2": theta.L2,
    }
    gains[own_K] = own_K_mat[None, :, :] + vK
    gains[own_L] = own_L_mat[None, :, :] + vL

    if utility_fn is None:
        utilities = _rollout_utilities(params, theta, cfg, gains, sim_ss)
    else:
        utilities = np.asarray(utility_fn(gains, sim_ss), dtype=float)
    if utilities.shape != (cfg.M,):
        raise ValueError(f"utility samples must have shape ({cfg.M},)")

    scale = smooth / cfg.tau**2
    grad_K = scale * np.einsum("m,mij->ij", utilities, vK) / cfg.M
    grad_L = scale * np.einsum("m,mij->ij", utilities, vL) / cfg.M
    return grad_K, grad_L


def _rollout_utilities(params, theta, cfg, gains, sim_ss):
    stacks = {name: g for name, g in gains.items() if g.ndim == 3}
    return mkv_utility_batch(params, theta, cfg.horizon, cfg.M, sim_ss,
                             gain_stacks=stacks)
