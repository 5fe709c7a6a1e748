"""Equilibrium computation: fixed points of the two Riccati-type maps,
the gains they induce, best responses, and a scalar root-finding benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateProblem,
    IndefiniteInnerProblem,
    NoConvergence,
    NonStabilizingSolution,
    NoRoot,
    NotStabilizing,
    SingularR,
)
from .model import (
    DerivedParams,
    ModelParams,
    PolicyPair,
    dev_block_stable,
    mean_block_stable,
    validate,
)
from .value import solve_dev_value, solve_mean_value

DIVERGENCE_CAP = 1e8
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class RiccatiSolution:
    """Fixed points of the deviation and mean equilibrium equations,
    with their residual norms and the total iteration count."""

    P_dev: np.ndarray
    P_mean: np.ndarray
    residual_dev: float
    residual_mean: float
    iterations: int


def _fixed_point(apply_map, P0: np.ndarray, tol: float, max_iter: int,
                 damping: float, label: str) -> tuple[np.ndarray, float, int]:
    """Damped iteration P <- (1-w) P + w map(P) until the residual
    ||P - map(P)|| drops below tol."""
    P = P0.copy()
    for k in range(1, max_iter + 1):
        mapped = apply_map(P)
        residual = float(np.linalg.norm(P - mapped, ord=2))
        if residual <= tol:
            return P, residual, k
        P = (1.0 - damping) * P + damping * mapped
        norm = float(np.linalg.norm(P, ord=2))
        if not np.isfinite(norm) or norm > DIVERGENCE_CAP:
            raise NoConvergence(f"{label}: iterates diverged (norm {norm:.3e})")
    raise NoConvergence(f"{label}: no fixed point after {max_iter} iterations")


def solve_riccati(params: ModelParams, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER,
                  damping: float = 1.0) -> RiccatiSolution:
    """Solve both equilibrium equations by damped fixed-point iteration.

    Deviation map:  P -> gamma [A'P + 2Q][A + (B1 c1 + B2 c2) P] with the
    signed feedback coefficients c_i; mean map is the tilde analogue.
    Initialization 2Q (resp. 2Q_tilde). The converged pair must induce
    stabilizing gains, otherwise NonStabilizingSolution is raised.
    """
    der = validate(params)
    g = params.gamma

    dev_gain = params.B1 @ der.dev_coef_1 + params.B2 @ der.dev_coef_2
    mean_gain = der.B1_tilde @ der.mean_coef_1 + der.B2_tilde @ der.mean_coef_2

    def dev_map(P):
        return g * (params.A.T @ P + 2.0 * params.Q) @ (params.A + dev_gain @ P)

    def mean_map(P):
        return g * (der.A_tilde.T @ P + 2.0 * der.Q_tilde) @ (der.A_tilde + mean_gain @ P)

    P_dev, res_dev, it_dev = _fixed_point(
        dev_map, 2.0 * params.Q, tol, max_iter, damping, "deviation equation")
    P_mean, res_mean, it_mean = _fixed_point(
        mean_map, 2.0 * der.Q_tilde, tol, max_iter, damping, "mean equation")

    sol = RiccatiSolution(P_dev=P_dev, P_mean=P_mean,
                          residual_dev=res_dev, residual_mean=res_mean,
                          iterations=it_dev + it_mean)
    theta = nash_policy(params, sol, derived=der)
    if not dev_block_stable(params, theta.K1, theta.K2):
        raise NonStabilizingSolution("deviation fixed point induces an unstable loop")
    if not mean_block_stable(params, theta.L1, theta.L2, der):
        raise NonStabilizingSolution("mean fixed point induces an unstable loop")
    return sol


def nash_policy(params: ModelParams, sol: RiccatiSolution,
                derived: DerivedParams | None = None) -> PolicyPair:
    """Equilibrium gains from the Riccati fixed points:
    K_i = 1/2 R_i^{-1} B_i' P_dev and L_i = 1/2 R_tilde_i^{-1} B_tilde_i' P_mean.
    """
    der = derived if derived is not None else validate(params)
    try:
        K1 = 0.5 * np.linalg.solve(params.R1, params.B1.T @ sol.P_dev)
        K2 = 0.5 * np.linalg.solve(params.R2, params.B2.T @ sol.P_dev)
        L1 = 0.5 * np.linalg.solve(der.R1_tilde, der.B1_tilde.T @ sol.P_mean)
        L2 = 0.5 * np.linalg.solve(der.R2_tilde, der.B2_tilde.T @ sol.P_mean)
    except np.linalg.LinAlgError as exc:  # precluded by validation
        raise SingularR(str(exc)) from None
    return PolicyPair(K1=K1, L1=L1, K2=K2, L2=L2)


def _scalar_stabilizing_inner(Q_eff: np.ndarray, A_eff: np.ndarray,
                              B: np.ndarray, R: np.ndarray, gamma: float,
                              minimizer: bool) -> np.ndarray:
    """Exact stabilizing solution of the scalar one-player equation.

    The scalar fixed-point condition is a quadratic in P; keep the root
    whose closed loop a R / (R +- g b^2 P) passes the spectral test and
    whose control curvature R +- g b^2 P is positive. With an indefinite
    effective state weight the finite-horizon values can dive to -inf even
    though this stationary stabilizing solution exists, so iteration is not
    an option here."""
    sgn = 1.0 if minimizer else -1.0
    q = float(Q_eff[0, 0])
    a = float(A_eff[0, 0])
    b = float(B[0, 0])
    r = float(R[0, 0])
    gb2 = gamma * b * b
    if gb2 == 0.0:
        if gamma * a * a >= 1.0:
            raise IndefiniteInnerProblem(
                "uncontrollable inner problem with unstable drift")
        return np.array([[q / (1.0 - gamma * a * a)]])
    # sgn*gb2 P^2 + (r - sgn*g q b^2 - g a^2 r) P - sgn*q r = 0
    coeffs = [sgn * gb2, r - sgn * gamma * q * b * b - gamma * a * a * r,
              -sgn * q * r]
    disc = coeffs[1] ** 2 - 4.0 * coeffs[0] * coeffs[2]
    if disc < 0.0:
        raise IndefiniteInnerProblem(
            "no real stationary solution; effective state weight too negative")
    candidates = [(-coeffs[1] + s * np.sqrt(disc)) / (2.0 * coeffs[0])
                  for s in (+1.0, -1.0)]
    viable = []
    for p in candidates:
        curvature = r + sgn * gb2 * p
        if curvature <= 0.0:
            continue
        loop = a * r / curvature
        if gamma * loop * loop < 1.0:
            viable.append(p)
    if not viable:
        raise IndefiniteInnerProblem(
            "no stabilizing stationary solution with positive curvature")
    return np.array([[min(viable, key=abs)]])


def _inner_value(Q_eff: np.ndarray, A_eff: np.ndarray, B: np.ndarray,
                 R: np.ndarray, gamma: float, minimizer: bool,
                 tol: float, max_iter: int, damping: float) -> np.ndarray:
    """Value matrix of the one-player problem against a frozen opponent.

    Fixed point of
      P = Q_eff + g A'PA -+ g^2 A'PB (R +- g B'PB)^{-1} B'PA
    with the upper signs for the minimizing player and the lower signs for
    the maximizing one. Scalar problems fall back to the exact quadratic
    when the iteration fails (indefinite weights break value iteration but
    may still admit a stabilizing stationary solution)."""
    scalar = Q_eff.shape == (1, 1) and R.shape == (1, 1)
    try:
        return _inner_value_iterate(Q_eff, A_eff, B, R, gamma, minimizer,
                                    tol, max_iter, damping)
    except (NoConvergence, IndefiniteInnerProblem):
        if not scalar:
            raise
        return _scalar_stabilizing_inner(Q_eff, A_eff, B, R, gamma, minimizer)


def _inner_value_iterate(Q_eff, A_eff, B, R, gamma, minimizer,
                         tol, max_iter, damping) -> np.ndarray:
    sgn = 1.0 if minimizer else -1.0
    P = Q_eff.copy()
    prev_norm = float(np.linalg.norm(P, ord=2))
    growing = 0
    for _ in range(max_iter):
        BPB = B.T @ P @ B
        BPA = B.T @ P @ A_eff
        inner = R + sgn * gamma * BPB
        # losing curvature means the plain value recursion is unbounded
        if np.min(np.linalg.eigvalsh(0.5 * (inner + inner.T))) <= 0.0:
            raise IndefiniteInnerProblem(
                "inner curvature lost definiteness; effective state weight "
                "too negative")
        correction = BPA.T @ np.linalg.solve(inner, BPA)
        mapped = Q_eff + gamma * A_eff.T @ P @ A_eff - sgn * gamma**2 * correction
        residual = float(np.linalg.norm(P - mapped, ord=2))
        if residual <= tol:
            return P
        P = (1.0 - damping) * P + damping * mapped
        norm = float(np.linalg.norm(P, ord=2))
        growing = growing + 1 if norm > prev_norm else 0
        prev_norm = norm
        if not np.isfinite(norm) or norm > DIVERGENCE_CAP:
            if growing >= 10:
                raise IndefiniteInnerProblem(
                    "inner value diverges; effective state weight too negative")
            raise NoConvergence(f"inner equation diverged (norm {norm:.3e})")
    raise NoConvergence(f"inner equation: no fixed point after {max_iter} iterations")


def best_response_K1(params: ModelParams, K2, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, damping: float = 1.0) -> np.ndarray:
    """Optimal K1 against a frozen K2:
    K1 = g (R1 + g B1'PB1)^{-1} B1'P (A + B2 K2), P the inner value matrix
    for effective weight Q - K2'R2 K2 and drift A + B2 K2."""
    K2 = np.atleast_2d(K2)
    g = params.gamma
    A_eff = params.A + params.B2 @ K2
    Q_eff = params.Q - K2.T @ params.R2 @ K2
    P = _inner_value(Q_eff, A_eff, params.B1, params.R1, g, True, tol, max_iter, damping)
    lhs = params.R1 + g * params.B1.T @ P @ params.B1
    return g * np.linalg.solve(lhs, params.B1.T @ P @ A_eff)


def best_response_K2(params: ModelParams, K1, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, damping: float = 1.0) -> np.ndarray:
    """Optimal K2 against a frozen K1 (maximizing player; sign-flipped R2)."""
    K1 = np.atleast_2d(K1)
    g = params.gamma
    A_eff = params.A - params.B1 @ K1
    Q_eff = params.Q + K1.T @ params.R1 @ K1
    P = _inner_value(Q_eff, A_eff, params.B2, params.R2, g, False, tol, max_iter, damping)
    lhs = params.R2 - g * params.B2.T @ P @ params.B2
    return g * np.linalg.solve(lhs, params.B2.T @ P @ A_eff)


def best_response_L1(params: ModelParams, L2, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, damping: float = 1.0) -> np.ndarray:
    """Optimal L1 against a frozen L2 (tilde quantities)."""
    der = validate(params)
    L2 = np.atleast_2d(L2)
    g = params.gamma
    A_eff = der.A_tilde + der.B2_tilde @ L2
    Q_eff = der.Q_tilde - L2.T @ der.R2_tilde @ L2
    P = _inner_value(Q_eff, A_eff, der.B1_tilde, der.R1_tilde, g, True,
                     tol, max_iter, damping)
    lhs = der.R1_tilde + g * der.B1_tilde.T @ P @ der.B1_tilde
    return g * np.linalg.solve(lhs, der.B1_tilde.T @ P @ A_eff)


def best_response_L2(params: ModelParams, L1, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, damping: float = 1.0) -> np.ndarray:
    """Optimal L2 against a frozen L1 (tilde quantities, sign-flipped)."""
    der = validate(params)
    L1 = np.atleast_2d(L1)
    g = params.gamma
    A_eff = der.A_tilde - der.B1_tilde @ L1
    Q_eff = der.Q_tilde + L1.T @ der.R1_tilde @ L1
    P = _inner_value(Q_eff, A_eff, der.B2_tilde, der.R2_tilde, g, False,
                     tol, max_iter, damping)
    lhs = der.R2_tilde - g * der.B2_tilde.T @ P @ der.B2_tilde
    return g * np.linalg.solve(lhs, der.B2_tilde.T @ P @ A_eff)


def _scalar_root(eval_slope, lo: float, hi: float, tol: float,
                 label: str) -> float:
    """Bisection on a scalar slope function over [lo, hi].

    Scans for a sign change on a grid first; points where the inner problem
    fails are skipped (with a reduced iteration budget, since failures far
    from the root are slow to diagnose)."""
    skippable = (NoConvergence, IndefiniteInnerProblem, NotStabilizing,
                 np.linalg.LinAlgError)
    grid = np.linspace(lo, hi, 61)
    vals = np.full(grid.shape, np.nan)
    for idx, point in enumerate(grid):
        try:
            vals[idx] = eval_slope(point, 1e-9, 1500)
        except skippable:
            continue
    finite = np.isfinite(vals)
    if finite.any() and np.max(np.abs(vals[finite])) < 1e-12:
        raise DegenerateProblem(
            f"{label}: slope vanishes everywhere; opponent has no control authority")
    bracket = None
    prev = None
    for idx in range(len(grid)):
        if not finite[idx]:
            prev = None
            continue
        if prev is not None and np.sign(vals[prev]) != np.sign(vals[idx]):
            bracket = (grid[prev], grid[idx], vals[prev])
            break
        prev = idx
    if bracket is None:
        raise NoRoot(f"{label}: no sign change inside the stabilizing interval")
    lo, hi, f_lo = bracket
    try:
        f_lo = eval_slope(lo, DEFAULT_TOL, DEFAULT_MAX_ITER)
    except skippable as exc:
        raise NoRoot(f"{label}: bracket endpoint failed at full precision: "
                     f"{exc}") from None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        try:
            f_mid = eval_slope(mid, DEFAULT_TOL, DEFAULT_MAX_ITER)
        except skippable as exc:
            raise NoRoot(f"{label}: evaluation failed during bisection: {exc}") from None
        if abs(hi - lo) < tol:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nash_via_gradient_root(params: ModelParams, tol: float = 1e-10) -> PolicyPair:
    """Scalar benchmark path to the equilibrium: find the opponent gain whose
    utility slope vanishes under the first player's best response, for the
    deviation and the mean blocks separately. Only d = ell = 1."""
    if params.d != 1 or params.ell != 1:
        raise NoRoot("gradient-root benchmark is only defined for d = ell = 1")
    der = validate(params)
    g = params.gamma

    def dev_slope(k2: float, tol_fp: float, max_iter: int) -> float:
        K2 = np.array([[k2]])
        K1 = best_response_K1(params, K2, tol=tol_fp, max_iter=max_iter)
        P = solve_dev_value(params, K1, K2)
        # slope of the deviation utility in K2 (second-moment factor > 0 dropped)
        coef = (-g * params.B2.T @ P @ params.B1 @ K1
                + (-params.R2 + g * params.B2.T @ P @ params.B2) @ K2
                + g * params.B2.T @ P @ params.A)
        return float(coef[0, 0])

    def mean_slope(l2: float, tol_fp: float, max_iter: int) -> float:
        L2 = np.array([[l2]])
        L1 = best_response_L1(params, L2, tol=tol_fp, max_iter=max_iter)
        P = solve_mean_value(params, L1, L2, der)
        coef = (-g * der.B2_tilde.T @ P @ der.B1_tilde @ L1
                + (-der.R2_tilde + g * der.B2_tilde.T @ P @ der.B2_tilde) @ L2
                + g * der.B2_tilde.T @ P @ der.A_tilde)
        return float(coef[0, 0])

    a = float(params.A[0, 0])
    b2 = float(params.B2[0, 0])
    at = float(der.A_tilde[0, 0])
    b2t = float(der.B2_tilde[0, 0])
    # scan where the uncompensated drift stays within twice the stability
    # bound; the other player's best response extends stability past the
    # naive interval, and non-evaluable points are skipped anyway
    bound = 2.0 / np.sqrt(g)

    if abs(b2) < 1e-14 or abs(b2t) < 1e-14:
        raise DegenerateProblem("second player has no control authority")
    lo_k, hi_k = sorted(((-bound - a) / b2, (bound - a) / b2))
    lo_l, hi_l = sorted(((-bound - at) / b2t, (bound - at) / b2t))
    k2 = _scalar_root(dev_slope, lo_k, hi_k, tol, "deviation block")
    l2 = _scalar_root(mean_slope, lo_l, hi_l, tol, "mean block")
    K2 = np.array([[k2]])
    L2 = np.array([[l2]])
    return PolicyPair(K1=best_response_K1(params, K2), L1=best_response_L1(params, L2),
                      K2=K2, L2=L2)
