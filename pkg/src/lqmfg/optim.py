"""Competing-update schemes over a pluggable gradient oracle.

Alternating-gradient runs T1 descent steps on the minimizer per single
ascent step of the maximizer; gradient-descent-ascent updates both
simultaneously from the pre-update pair. The oracle is either the exact
closed-form gradient or the rollout-based estimator. Progress is tracked
against the Riccati benchmark.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchmarkZero, NotStabilizing
from .estimator import EstimatorConfig, estimate_gradient
from .model import ModelParams, PolicyPair, in_stabilizing_set, validate
from .riccati import nash_policy, solve_riccati
from .simulate import derive_seed
from .value import exact_gradient, exact_utility

MAX_STEP_HALVINGS = 20


@dataclass(frozen=True)
class OptimizerConfig:
    """Everything one optimization run needs besides the model."""

    mode: str                       # "ag" | "gda"
    eta1: float = 0.1
    eta2: float = 0.1
    T1: int = 10                    # AG inner steps
    T2: int = 200                   # AG outer steps
    T: int = 2000                   # GDA steps
    theta0: PolicyPair | None = None
    oracle: str = "exact"           # "exact" | "sampled"
    estimator: EstimatorConfig | None = None
    log_every: int = 1
    shrink_on_exit: bool = False

    def __post_init__(self):
        if self.mode not in ("ag", "gda"):
            raise ValueError("mode must be 'ag' or 'gda'")
        if self.oracle not in ("exact", "sampled"):
            raise ValueError("oracle must be 'exact' or 'sampled'")
        if self.oracle == "sampled" and self.estimator is None:
            raise ValueError("sampled oracle requires an estimator config")
        if min(self.T1, self.T2, self.T, self.log_every) < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("learning rates must be nonnegative")


@dataclass
class RunRecord:
    """State of one global iteration, following the convention that the
    minimizer advances every iteration and, under AG, the maximizer
    advances every T1 iterations."""

    k: int
    theta: PolicyPair
    cost: float                     # exact utility when evaluable, else NaN
    grad_norms: tuple[float, float, float, float]
    rel_err: float
    wall_time: float


@dataclass
class RunLog:
    """Per-iteration records plus the run outcome."""

    records: list[RunRecord] = field(default_factory=list)
    final_theta: PolicyPair | None = None
    termination: str = "completed"
    benchmark_theta: PolicyPair | None = None
    benchmark_cost: float = float("nan")
    wall_time: float = 0.0

    def final_rel_err(self) -> float:
        if self.final_theta is None or not np.isfinite(self.benchmark_cost):
            return float("nan")
        return self.records[-1].rel_err if self.records else float("nan")

    def write_csv(self, path) -> None:
        """One row per logged global iteration, full-precision floats."""
        header = ["k", "K1", "L1", "K2", "L2", "C",
                  "gradnorm_K1", "gradnorm_L1", "gradnorm_K2", "gradnorm_L2",
                  "rel_err"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.records:
                gains = [_fmt_gain(getattr(rec.theta, n))
                         for n in ("K1", "L1", "K2", "L2")]
                row = ([rec.k] + gains + [repr(float(rec.cost))]
                       + [repr(float(v)) for v in rec.grad_norms]
                       + [repr(float(rec.rel_err))])
                writer.writerow(row)


def _fmt_gain(mat: np.ndarray) -> str:
    if mat.size == 1:
        return repr(float(mat[0, 0]))
    return ";".join(repr(float(v)) for v in mat.ravel())


def relative_error(current: float, benchmark: float) -> float:
    """|current - benchmark| / |benchmark|."""
    if benchmark == 0.0:
        raise BenchmarkZero("relative error undefined against a zero benchmark")
    return abs(current - benchmark) / abs(benchmark)


def compute_benchmark(params: ModelParams) -> tuple[PolicyPair, float]:
    """Equilibrium policy and utility from the Riccati path."""
    theta_star = nash_policy(params, solve_riccati(params))
    return theta_star, exact_utility(params, theta_star).cost


class _Oracle:
    """Gradient oracle with a monotone call counter for seed derivation."""

    def __init__(self, params: ModelParams, cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.derived = validate(params)
        self.calls = 0

    def player_blocks(self, theta: PolicyPair, player: int):
        """(grad_K, grad_L) for one player at theta.

        Exact mode evaluates the closed form (theta must be stabilizing,
        signalled via NotStabilizing); sampled mode runs the estimator with
        a per-call derived seed."""
        self.calls += 1
        if self.cfg.oracle == "exact":
            grad = exact_gradient(self.params, theta, self.derived)
            if player == 1:
                return grad.dK1, grad.dL1, grad
            return grad.dK2, grad.dL2, grad
        est = self.cfg.estimator
        seed = derive_seed(est.seed, self.calls, player)
        call_cfg = EstimatorConfig(M=est.M, horizon=est.horizon, tau=est.tau,
                                   seed=seed, smoothing_dim=est.smoothing_dim)
        gK, gL = estimate_gradient(self.params, theta, player, call_cfg)
        return gK, gL, None


def _theta_update(theta: PolicyPair, player: int, gK, gL, eta: float) -> PolicyPair:
    sign = -1.0 if player == 1 else 1.0
    if player == 1:
        return PolicyPair(K1=theta.K1 + sign * eta * gK,
                          L1=theta.L1 + sign * eta * gL,
                          K2=theta.K2, L2=theta.L2)
    return PolicyPair(K1=theta.K1, L1=theta.L1,
                      K2=theta.K2 + sign * eta * gK,
                      L2=theta.L2 + sign * eta * gL)


def _is_finite(theta: PolicyPair) -> bool:
    return all(np.isfinite(getattr(theta, n)).all() for n in ("K1", "L1", "K2", "L2"))


def _same_theta(a: PolicyPair, b: PolicyPair) -> bool:
    return all(np.array_equal(getattr(a, n), getattr(b, n))
               for n in ("K1", "L1", "K2", "L2"))


class _Tracker:
    """Logging helper shared by both schemes."""

    def __init__(self, params, cfg, benchmark_theta, benchmark_cost, derived):
        self.params = params
        self.cfg = cfg
        self.derived = derived
        self.log = RunLog(benchmark_theta=benchmark_theta,
                          benchmark_cost=benchmark_cost)
        self.t0 = time.perf_counter()

    def exact_cost(self, theta: PolicyPair) -> float:
        try:
            return exact_utility(self.params, theta, self.derived).cost
        except NotStabilizing:
            return float("nan")

    def record(self, k: int, theta: PolicyPair, grad_norms) -> None:
        if k % self.cfg.log_every and k != 1:
            return
        cost = self.exact_cost(theta)
        rel = (relative_error(cost, self.log.benchmark_cost)
               if np.isfinite(cost) else float("nan"))
        self.log.records.append(RunRecord(
            k=k, theta=theta, cost=cost, grad_norms=tuple(grad_norms),
            rel_err=rel, wall_time=time.perf_counter() - self.t0))

    def finish(self, theta: PolicyPair, termination: str) -> RunLog:
        self.log.final_theta = theta
        self.log.termination = termination
        self.log.wall_time = time.perf_counter() - self.t0
        if self.log.records and not _same_theta(self.log.records[-1].theta, theta):
            k_last = self.log.records[-1].k
            cost = self.exact_cost(theta)
            rel = (relative_error(cost, self.log.benchmark_cost)
                   if np.isfinite(cost) else float("nan"))
            self.log.records.append(RunRecord(
                k=k_last + 1, theta=theta, cost=cost,
                grad_norms=(float("nan"),) * 4, rel_err=rel,
                wall_time=self.log.wall_time))
        return self.log


def _grad_norms(gK, gL, player: int, full=None):
    if full is not None:
        return tuple(float(np.linalg.norm(b)) for b in full.blocks())
    nK, nL = float(np.linalg.norm(gK)), float(np.linalg.norm(gL))
    return (nK, nL, float("nan"), float("nan")) if player == 1 \
        else (float("nan"), float("nan"), nK, nL)


def _attempt_step(params, cfg, oracle, theta, player, eta):
    """One oracle call plus update; optionally halves the step while the
    tentative iterate exits the stabilizing set.

    Returns (new_theta, grad_norms, status) where status is one of
    "ok", "left_stabilizing_set", "non_finite"."""
    if cfg.oracle == "exact" and not in_stabilizing_set(params, theta, oracle.derived):
        return theta, (float("nan"),) * 4, "left_stabilizing_set"
    gK, gL, full = oracle.player_blocks(theta, player)
    norms = _grad_norms(gK, gL, player, full)
    new_theta = _theta_update(theta, player, gK, gL, eta)
    if cfg.shrink_on_exit and cfg.oracle == "exact":
        step = eta
        for _ in range(MAX_STEP_HALVINGS):
            if in_stabilizing_set(params, new_theta, oracle.derived):
                break
            step *= 0.5
            new_theta = _theta_update(theta, player, gK, gL, step)
        else:
            return theta, norms, "left_stabilizing_set"
    if not _is_finite(new_theta):
        return theta, norms, "non_finite"
    return new_theta, norms, "ok"


def _prepare(params, cfg, benchmark):
    derived = validate(params)
    theta = cfg.theta0 if cfg.theta0 is not None else PolicyPair.zero(params.d, params.ell)
    theta.check_dims(params)
    if benchmark is None:
        bench_theta, bench_cost = compute_benchmark(params)
    else:
        bench_theta = benchmark
        bench_cost = exact_utility(params, benchmark, derived).cost
    oracle = _Oracle(params, cfg)
    tracker = _Tracker(params, cfg, bench_theta, bench_cost, derived)
    return theta, oracle, tracker


def run_ag(params: ModelParams, cfg: OptimizerConfig,
           benchmark: PolicyPair | None = None) -> RunLog:
    """Alternating gradient: T1 minimizer steps per maximizer step, inner
    loop warm-started from the previous outer iterate.

    Global iteration k counts minimizer steps; the maximizer's update lands
    between iterations k = m*T1 and k = m*T1 + 1.
    """
    if cfg.mode != "ag":
        raise ValueError("config mode must be 'ag'")
    theta, oracle, tracker = _prepare(params, cfg, benchmark)
    k = 0
    for _ in range(1, cfg.T2 + 1):
        for _ in range(1, cfg.T1 + 1):
            k += 1
            theta, norms, status = _attempt_step(
                params, cfg, oracle, theta, player=1, eta=cfg.eta1)
            tracker.record(k, theta, norms)
            if status != "ok":
                return tracker.finish(theta, status)
        theta, norms, status = _attempt_step(
            params, cfg, oracle, theta, player=2, eta=cfg.eta2)
        if status != "ok":
            return tracker.finish(theta, status)
    return tracker.finish(theta, "completed")


def run_gda(params: ModelParams, cfg: OptimizerConfig,
            benchmark: PolicyPair | None = None) -> RunLog:
    """Gradient descent-ascent: both players step simultaneously from
    gradients evaluated at the pre-update pair."""
    if cfg.mode != "gda":
        raise ValueError("config mode must be 'gda'")
    theta, oracle, tracker = _prepare(params, cfg, benchmark)
    for k in range(1, cfg.T + 1):
        if cfg.oracle == "exact" and not in_stabilizing_set(params, theta, oracle.derived):
            tracker.record(k, theta, (float("nan"),) * 4)
            return tracker.finish(theta, "left_stabilizing_set")
        gK1, gL1, full = oracle.player_blocks(theta, 1)
        if full is not None:
            gK2, gL2 = full.dK2, full.dL2
            norms = _grad_norms(None, None, 1, full)
        else:
            gK2, gL2, _ = oracle.player_blocks(theta, 2)
            norms = tuple(float(np.linalg.norm(b)) for b in (gK1, gL1, gK2, gL2))
        tentative = PolicyPair(K1=theta.K1 - cfg.eta1 * gK1,
                               L1=theta.L1 - cfg.eta1 * gL1,
                               K2=theta.K2 + cfg.eta2 * gK2,
                               L2=theta.L2 + cfg.eta2 * gL2)
        if cfg.shrink_on_exit and cfg.oracle == "exact":
            step = 1.0
            for _ in range(MAX_STEP_HALVINGS):
                if in_stabilizing_set(params, tentative, oracle.derived):
                    break
                step *= 0.5
                tentative = PolicyPair(K1=theta.K1 - step * cfg.eta1 * gK1,
                                       L1=theta.L1 - step * cfg.eta1 * gL1,
                                       K2=theta.K2 + step * cfg.eta2 * gK2,
                                       L2=theta.L2 + step * cfg.eta2 * gL2)
            else:
                tracker.record(k, theta, norms)
                return tracker.finish(theta, "left_stabilizing_set")
        theta = tentative
        if not _is_finite(theta):
            tracker.record(k, theta, norms)
            return tracker.finish(theta, "non_finite")
        tracker.record(k, theta, norms)
    return tracker.finish(theta, "completed")


def run(params: ModelParams, cfg: OptimizerConfig,
        benchmark: PolicyPair | None = None) -> RunLog:
    return run_ag(params, cfg, benchmark) if cfg.mode == "ag" \
        else run_gda(params, cfg, benchmark)
