"""Stochastic rollout engines.

Two views of the same game: the mean-field simulator propagates one state
together with its conditional mean (the mean follows its own autonomous
linear recursion given the common-noise path), while the finite-population
simulator propagates N coupled agents with empirical means.

Randomness discipline: every rollout derives four named streams from its
seed -- common-init, idio-init, common-step, idio-step, in that order -- so
extending the horizon never reshuffles earlier draws, and engines sharing a
seed share the common-noise path draw-for-draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, PolicyPair, validate


def derive_seed(master: int, *keys: int) -> int:
    """Deterministically derive a child seed from a master seed and keys."""
    ss = np.random.SeedSequence([int(master), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _streams(seed) -> tuple[np.random.Generator, ...]:
    """The four named noise streams, spawn order fixed."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return tuple(np.random.default_rng(s) for s in seed.spawn(4))


def stage_cost(params: ModelParams, y, x_mean, du1, u1_mean, du2, u2_mean):
    """Instantaneous utility evaluated on recentred quantities.

    y is the state deviation from its mean, du_i the control deviations.
    Quadratic in all arguments; player 2's terms enter with a minus sign.
    Supports batched leading axes.
    """
    Qt = params.Q + params.Q_bar
    R1t = params.R1 + params.R1_bar
    R2t = params.R2 + params.R2_bar

    def quad(v, Wmat):
        return np.einsum("...i,ij,...j->...", v, Wmat, v)

    return (quad(y, params.Q) + quad(x_mean, Qt)
            + quad(du1, params.R1) + quad(u1_mean, R1t)
            - quad(du2, params.R2) - quad(u2_mean, R2t))


@dataclass(frozen=True)
class MkvTrajectory:
    """One mean-field rollout: states, propagated conditional means,
    controls, per-step costs, and the truncated discounted utility."""

    states: np.ndarray       # (T, d)
    means: np.ndarray        # (T, d)
    u1: np.ndarray           # (T, ell)
    u2: np.ndarray           # (T, ell)
    costs: np.ndarray        # (T,)
    utility: float


@dataclass(frozen=True)
class NAgentTrajectory:
    """One finite-population rollout with empirical means."""

    states: np.ndarray       # (T, N, d)
    means: np.ndarray        # (T, d)
    u1_means: np.ndarray     # (T, ell)
    u2_means: np.ndarray     # (T, ell)
    utility: float


def simulate_mkv(params: ModelParams, theta: PolicyPair, horizon: int,
                 seed: int) -> MkvTrajectory:
    """Roll out the mean-field dynamics for `horizon` steps.

    The conditional mean starts at the common draw plus the idiosyncratic
    mean and follows the aggregated recursion driven by the common noise
    only. Identical seeds give bit-identical trajectories.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    der = validate(params)
    theta.check_dims(params)
    d = params.d
    g = params.gamma
    noise = params.noise
    rng_ci, rng_ii, rng_cs, rng_is = _streams(seed)

    eps_common = noise.init_common.sample(rng_ci, d)
    eps_idio = noise.init_idio.sample(rng_ii, d)
    idio_mean = noise.init_idio.mean(d)
    # propagate the deviation and the mean separately (an exact regrouping
    # of the state recursion); the idiosyncratic-noise-free case then keeps
    # the state equal to its mean bit for bit
    y = eps_idio - idio_mean
    z = eps_common + idio_mean

    states = np.empty((horizon, d))
    means = np.empty((horizon, d))
    u1s = np.empty((horizon, params.ell))
    u2s = np.empty((horizon, params.ell))
    costs = np.empty(horizon)
    utility = 0.0
    discount = 1.0
    for t in range(horizon):
        du1 = -(theta.K1 @ y)
        du2 = theta.K2 @ y
        u1_mean = -(theta.L1 @ z)
        u2_mean = theta.L2 @ z
        c = float(stage_cost(params, y, z, du1, u1_mean, du2, u2_mean))
        states[t] = y + z
        means[t] = z
        u1s[t] = du1 + u1_mean
        u2s[t] = du2 + u2_mean
        costs[t] = c
        utility += discount * c
        discount *= g
        if t + 1 < horizon:
            w_common = noise.step_common.sample(rng_cs, d)
            w_idio = noise.step_idio.sample(rng_is, d)
            y = params.A @ y + params.B1 @ du1 + params.B2 @ du2 + w_idio
            z = (der.A_tilde @ z + der.B1_tilde @ u1_mean
                 + der.B2_tilde @ u2_mean + w_common)
    return MkvTrajectory(states=states, means=means, u1=u1s, u2=u2s,
                         costs=costs, utility=float(utility))


def _gain_apply(G: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply a gain to a batch of vectors; G is (ell, d) or (n, ell, d)."""
    if G.ndim == 2:
        return v @ G.T
    return np.einsum("nij,nj->ni", G, v)


def mkv_utility_batch(params: ModelParams, theta: PolicyPair, horizon: int,
                      n_paths: int, seed,
                      gain_stacks: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Utilities of `n_paths` independent mean-field rollouts (vectorized).

    `gain_stacks` may override individual gains with per-path stacks of
    shape (n_paths, ell, d); untouched gains are shared across paths. Draws
    come from the same four named streams as `simulate_mkv`, one batched
    draw per step, so two engines given the same seed see the same
    common-noise arrays.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    der = validate(params)
    theta.check_dims(params)
    d = params.d
    g = params.gamma
    noise = params.noise
    gains = {"K1": theta.K1, "L1": theta.L1, "K2": theta.K2, "L2": theta.L2}
    if gain_stacks:
        for name, stack in gain_stacks.items():
            stack = np.asarray(stack, dtype=float)
            if stack.shape != (n_paths, params.ell, params.d):
                raise ValueError(f"{name} stack must be (n_paths, ell, d)")
            gains[name] = stack
    K1, L1, K2, L2 = gains["K1"], gains["L1"], gains["K2"], gains["L2"]

    rng_ci, rng_ii, rng_cs, rng_is = _streams(seed)
    eps_common = noise.init_common.sample(rng_ci, (n_paths, d))
    eps_idio = noise.init_idio.sample(rng_ii, (n_paths, d))
    idio_mean = noise.init_idio.mean(d)
    y = eps_idio - idio_mean
    z = eps_common + idio_mean

    utility = np.zeros(n_paths)
    discount = 1.0
    for t in range(horizon):
        u1_mean = -_gain_apply(L1, z)
        u2_mean = _gain_apply(L2, z)
        du1 = -_gain_apply(K1, y)
        du2 = _gain_apply(K2, y)
        utility += discount * stage_cost(params, y, z, du1, u1_mean, du2, u2_mean)
        discount *= g
        if t + 1 < horizon:
            w_common = noise.step_common.sample(rng_cs, (n_paths, d))
            w_idio = noise.step_idio.sample(rng_is, (n_paths, d))
            y = y @ params.A.T + du1 @ params.B1.T + du2 @ params.B2.T + w_idio
            z = (z @ der.A_tilde.T + u1_mean @ der.B1_tilde.T
                 + u2_mean @ der.B2_tilde.T + w_common)
    return utility


def simulate_n_agent(params: ModelParams, theta: PolicyPair, N: int,
                     horizon: int, seed: int) -> NAgentTrajectory:
    """Roll out N coupled agents sharing the common noise path.

    Controls use the empirical state mean; the reported utility is the
    discounted sum of population-average stage costs.
    """
    _, traj = _nagent_engine(params, theta, N, horizon, seed,
                             n_reps=1, keep_trajectory=True)
    return traj


def nagent_utility_batch(params: ModelParams, theta: PolicyPair, N: int,
                         horizon: int, n_reps: int, seed) -> np.ndarray:
    """Utilities of `n_reps` independent N-agent rollouts.

    Common-noise draws have shape (n_reps, d) per step, matching
    `mkv_utility_batch` under the same seed, so population and mean-field
    samples can be paired path-by-path."""
    utilities, _ = _nagent_engine(params, theta, N, horizon, seed,
                                  n_reps=n_reps, keep_trajectory=False)
    return utilities


def _nagent_engine(params: ModelParams, theta: PolicyPair, N: int,
                   horizon: int, seed, n_reps: int, keep_trajectory: bool):
    if N < 1:
        raise ValueError("N must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    validate(params)
    theta.check_dims(params)
    d, ell = params.d, params.ell
    g = params.gamma
    noise = params.noise
    rng_ci, rng_ii, rng_cs, rng_is = _streams(seed)

    eps_common = noise.init_common.sample(rng_ci, (n_reps, d))
    eps_idio = noise.init_idio.sample(rng_ii, (n_reps, N, d))
    x = eps_common[:, None, :] + eps_idio

    states = np.empty((horizon, N, d)) if keep_trajectory else None
    means = np.empty((horizon, d)) if keep_trajectory else None
    u1_means = np.empty((horizon, ell)) if keep_trajectory else None
    u2_means = np.empty((horizon, ell)) if keep_trajectory else None

    utility = np.zeros(n_reps)
    discount = 1.0
    for t in range(horizon):
        x_mean = x.mean(axis=1)                      # (reps, d)
        y = x - x_mean[:, None, :]                   # (reps, N, d)
        u1 = -(y @ theta.K1.T) - (x_mean @ theta.L1.T)[:, None, :]
        u2 = (y @ theta.K2.T) + (x_mean @ theta.L2.T)[:, None, :]
        u1_mean = u1.mean(axis=1)
        u2_mean = u2.mean(axis=1)
        du1 = u1 - u1_mean[:, None, :]
        du2 = u2 - u2_mean[:, None, :]
        # population-average cost: per-agent deviation terms + shared mean terms
        dev_part = (np.einsum("rni,ij,rnj->r", y, params.Q, y)
                    + np.einsum("rni,ij,rnj->r", du1, params.R1, du1)
                    - np.einsum("rni,ij,rnj->r", du2, params.R2, du2)) / N
        mean_part = stage_cost(params, np.zeros_like(x_mean), x_mean,
                               np.zeros_like(u1_mean), u1_mean,
                               np.zeros_like(u2_mean), u2_mean)
        cbar = dev_part + mean_part
        utility += discount * cbar
        discount *= g
        if keep_trajectory:
            states[t] = x[0]
            means[t] = x_mean[0]
            u1_means[t] = u1_mean[0]
            u2_means[t] = u2_mean[0]
        if t + 1 < horizon:
            w_common = noise.step_common.sample(rng_cs, (n_reps, d))
            w_idio = noise.step_idio.sample(rng_is, (n_reps, N, d))
            x = (x @ params.A.T + (x_mean @ params.A_bar.T)[:, None, :]
                 + u1 @ params.B1.T + (u1_mean @ params.B1_bar.T)[:, None, :]
                 + u2 @ params.B2.T + (u2_mean @ params.B2_bar.T)[:, None, :]
                 + w_common[:, None, :] + w_idio)
    if keep_trajectory:
        traj = NAgentTrajectory(states=states, means=means, u1_means=u1_means,
                                u2_means=u2_means, utility=float(utility[0]))
        return utility, traj
    return utility, None


def dump_trajectory_csv(traj: MkvTrajectory, path) -> None:
    """Write a mean-field trajectory as CSV: t, state coords, mean coords,
    both controls, and the stage cost."""
    d = traj.states.shape[1]
    ell = traj.u1.shape[1]
    header = (["t"]
              + [f"x{i}" for i in range(d)]
              + [f"xbar{i}" for i in range(d)]
              + [f"u1_{i}" for i in range(ell)]
              + [f"u2_{i}" for i in range(ell)]
              + ["c"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(traj.states.shape[0]):
            row = ([t]
                   + [repr(float(v)) for v in traj.states[t]]
                   + [repr(float(v)) for v in traj.means[t]]
                   + [repr(float(v)) for v in traj.u1[t]]
                   + [repr(float(v)) for v in traj.u2[t]]
                   + [repr(float(traj.costs[t]))])
            writer.writerow(row)
