"""Game definition: dynamics/utility matrices, noise menu, policies.

The state splits into a deviation part (state minus its conditional mean,
driven by the K gains and the plain matrices) and a mean part (the
conditional mean itself, driven by the L gains and the aggregated "tilde"
matrices A+A_bar, B_i+B_bar_i, ...). Everything downstream works on that
decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadDiscount,
    DimensionMismatch,
    InvalidNoise,
    NonPositiveDefinite,
    NonSymmetric,
)

_PD_PIVOT_TOL = 1e-10
_SYM_TOL = 1e-9


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if m.shape != (rows, cols):
        raise DimensionMismatch(f"{name}: expected shape {(rows, cols)}, got {m.shape}")
    m = m.copy()
    m.setflags(write=False)
    return m


def check_positive_definite(mat: np.ndarray, name: str) -> None:
    """Symmetric factorization check; smallest pivot must clear the tolerance."""
    if not np.allclose(mat, mat.T, atol=_SYM_TOL, rtol=0.0):
        raise NonSymmetric(f"{name} must be symmetric")
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite(f"{name} is not positive definite") from None
    pivots = np.diag(chol) ** 2
    if np.min(pivots) <= _PD_PIVOT_TOL:
        raise NonPositiveDefinite(
            f"{name}: smallest pivot {np.min(pivots):.3e} below tolerance"
        )


@dataclass(frozen=True)
class Distribution:
    """Per-coordinate i.i.d. scalar distribution descriptor.

    Supported kinds: ``uniform`` on [p1, p2], ``gaussian`` with mean p1 and
    variance p2, ``point`` mass at p1.
    """

    kind: str
    p1: float = 0.0
    p2: float = 0.0

    @classmethod
    def uniform(cls, low: float, high: float) -> "Distribution":
        if high < low:
            raise InvalidNoise(f"uniform: high {high} < low {low}")
        return cls("uniform", float(low), float(high))

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "Distribution":
        if variance < 0:
            raise InvalidNoise(f"gaussian: negative variance {variance}")
        return cls("gaussian", float(mean), float(variance))

    @classmethod
    def point(cls, value: float = 0.0) -> "Distribution":
        return cls("point", float(value))

    @property
    def mean_scalar(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.p1 + self.p2)
        return self.p1

    @property
    def var_scalar(self) -> float:
        if self.kind == "uniform":
            return (self.p2 - self.p1) ** 2 / 12.0
        if self.kind == "gaussian":
            return self.p2
        return 0.0

    def mean(self, dim: int) -> np.ndarray:
        return np.full(dim, self.mean_scalar)

    def cov(self, dim: int) -> np.ndarray:
        return self.var_scalar * np.eye(dim)

    def second_moment(self, dim: int) -> np.ndarray:
        mu = self.mean(dim)
        return self.cov(dim) + np.outer(mu, mu)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draw an array of the given shape (last axis = coordinate)."""
        if self.kind == "uniform":
            return rng.uniform(self.p1, self.p2, shape)
        if self.kind == "gaussian":
            return self.p1 + np.sqrt(self.p2) * rng.standard_normal(shape)
        return np.full(shape, self.p1)


@dataclass(frozen=True)
class NoiseSpec:
    """The four noise sources: initial and per-step, common and idiosyncratic.

    Step noises must have mean zero; that is what makes the conditional-mean
    recursion autonomous.
    """

    init_common: Distribution
    init_idio: Distribution
    step_common: Distribution
    step_idio: Distribution

    def __post_init__(self):
        for name in ("step_common", "step_idio"):
            dist = getattr(self, name)
            if dist.mean_scalar != 0.0:
                raise InvalidNoise(f"{name} must have mean zero, got {dist.mean_scalar}")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        p = Distribution.point(0.0)
        return cls(p, p, p, p)


@dataclass(frozen=True)
class ModelParams:
    """All matrices and scalars defining one game instance.

    A, A_bar are d x d; B1, B1_bar, B2, B2_bar are d x ell; Q, Q_bar are
    d x d symmetric; the R blocks are ell x ell symmetric with R_i and
    R_i + R_i_bar positive definite; gamma is the discount in (0, 1).
    """

    A: np.ndarray
    A_bar: np.ndarray
    B1: np.ndarray
    B1_bar: np.ndarray
    B2: np.ndarray
    B2_bar: np.ndarray
    Q: np.ndarray
    Q_bar: np.ndarray
    R1: np.ndarray
    R1_bar: np.ndarray
    R2: np.ndarray
    R2_bar: np.ndarray
    gamma: float
    noise: NoiseSpec
    d: int = 1
    ell: int = 1

    def __post_init__(self):
        d, ell = int(self.d), int(self.ell)
        if d < 1 or ell < 1:
            raise DimensionMismatch(f"dimensions must be positive, got d={d}, ell={ell}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "ell", ell)
        for name in ("A", "A_bar", "Q", "Q_bar"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), d, d, name))
        for name in ("B1", "B1_bar", "B2", "B2_bar"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), d, ell, name))
        for name in ("R1", "R1_bar", "R2", "R2_bar"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), ell, ell, name))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_scalars(
        cls,
        A: float,
        A_bar: float,
        B1: float,
        B1_bar: float,
        B2: float,
        B2_bar: float,
        Q: float,
        Q_bar: float,
        R1: float,
        R1_bar: float,
        R2: float,
        R2_bar: float,
        gamma: float,
        noise: NoiseSpec,
    ) -> "ModelParams":
        """Convenience constructor for the one-dimensional case."""
        return cls(A, A_bar, B1, B1_bar, B2, B2_bar, Q, Q_bar,
                   R1, R1_bar, R2, R2_bar, gamma, noise, d=1, ell=1)


@dataclass(frozen=True)
class DerivedParams:
    """Aggregated matrices and the per-player feedback coefficients.

    ``dev_coef_i`` maps the deviation value matrix to player i's signed
    deviation feedback, ``mean_coef_i`` does the same for the mean part, and
    ``mf_coef_i`` is the mean-field correction between the two:
    mean_coef_i = dev_coef_i + mf_coef_i.
    """

    A_tilde: np.ndarray
    B1_tilde: np.ndarray
    B2_tilde: np.ndarray
    Q_tilde: np.ndarray
    R1_tilde: np.ndarray
    R2_tilde: np.ndarray
    dev_coef_1: np.ndarray
    dev_coef_2: np.ndarray
    mf_coef_1: np.ndarray
    mf_coef_2: np.ndarray
    mean_coef_1: np.ndarray
    mean_coef_2: np.ndarray


@dataclass(frozen=True)
class PolicyPair:
    """Linear feedback gains (K_i on the deviation, L_i on the mean)."""

    K1: np.ndarray
    L1: np.ndarray
    K2: np.ndarray
    L2: np.ndarray

    def __post_init__(self):
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in
                (self.K1, self.L1, self.K2, self.L2)]
        shape = mats[0].shape
        for name, m in zip(("K1", "L1", "K2", "L2"), mats):
            if m.shape != shape:
                raise DimensionMismatch(f"{name}: expected {shape}, got {m.shape}")
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @classmethod
    def zero(cls, d: int = 1, ell: int = 1) -> "PolicyPair":
        z = np.zeros((ell, d))
        return cls(z, z, z, z)

    def check_dims(self, params: ModelParams) -> None:
        if self.K1.shape != (params.ell, params.d):
            raise DimensionMismatch(
                f"gains must be {(params.ell, params.d)}, got {self.K1.shape}"
            )

    def as_vector(self) -> np.ndarray:
        return np.concatenate([m.ravel() for m in (self.K1, self.L1, self.K2, self.L2)])


def validate(params: ModelParams) -> DerivedParams:
    """Check model invariants and compute the aggregated quantities.

    Rejects discounts outside (0, 1), non-PD control weights, asymmetric
    state weights, and nonzero step-noise means.
    """
    if not (0.0 < params.gamma < 1.0):
        raise BadDiscount(f"gamma must lie in (0, 1), got {params.gamma}")
    for name in ("Q", "Q_bar"):
        mat = getattr(params, name)
        if not np.allclose(mat, mat.T, atol=_SYM_TOL, rtol=0.0):
            raise NonSymmetric(f"{name} must be symmetric")

    A_tilde = params.A + params.A_bar
    B1_tilde = params.B1 + params.B1_bar
    B2_tilde = params.B2 + params.B2_bar
    Q_tilde = params.Q + params.Q_bar
    R1_tilde = params.R1 + params.R1_bar
    R2_tilde = params.R2 + params.R2_bar

    check_positive_definite(params.R1, "R1")
    check_positive_definite(params.R2, "R2")
    check_positive_definite(R1_tilde, "R1 + R1_bar")
    check_positive_definite(R2_tilde, "R2 + R2_bar")

    coefs = {}
    for i, (B, R, B_t, R_t, Bb) in enumerate(
        [(params.B1, params.R1, B1_tilde, R1_tilde, params.B1_bar),
         (params.B2, params.R2, B2_tilde, R2_tilde, params.B2_bar)],
        start=1,
    ):
        sign = (-1.0) ** i
        dev = sign * 0.5 * np.linalg.solve(R, B.T)
        mean = sign * 0.5 * np.linalg.solve(R_t, B_t.T)
        Rb = getattr(params, f"R{i}_bar")
        mf = sign * 0.5 * np.linalg.solve(
            R, Bb.T - Rb @ np.linalg.solve(R_t, B_t.T)
        )
        coefs[i] = (dev, mf, mean)

    return DerivedParams(
        A_tilde=A_tilde, B1_tilde=B1_tilde, B2_tilde=B2_tilde,
        Q_tilde=Q_tilde, R1_tilde=R1_tilde, R2_tilde=R2_tilde,
        dev_coef_1=coefs[1][0], dev_coef_2=coefs[2][0],
        mf_coef_1=coefs[1][1], mf_coef_2=coefs[2][1],
        mean_coef_1=coefs[1][2], mean_coef_2=coefs[2][2],
    )


def dev_closed_loop(params: ModelParams, K1: np.ndarray, K2: np.ndarray) -> np.ndarray:
    """Closed-loop matrix of the deviation recursion: A - B1 K1 + B2 K2."""
    return params.A - params.B1 @ np.atleast_2d(K1) + params.B2 @ np.atleast_2d(K2)


def mean_closed_loop(
    params: ModelParams, L1: np.ndarray, L2: np.ndarray,
    derived: DerivedParams | None = None,
) -> np.ndarray:
    """Closed-loop matrix of the mean recursion (tilde quantities)."""
    der = derived if derived is not None else validate(params)
    return der.A_tilde - der.B1_tilde @ np.atleast_2d(L1) + der.B2_tilde @ np.atleast_2d(L2)


def spectral_norm(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat, ord=2))


def dev_block_stable(params: ModelParams, K1, K2) -> bool:
    """gamma * ||A - B1 K1 + B2 K2||^2 < 1 (operator 2-norm)."""
    sn = spectral_norm(dev_closed_loop(params, K1, K2))
    return params.gamma * sn * sn < 1.0


def mean_block_stable(params: ModelParams, L1, L2,
                      derived: DerivedParams | None = None) -> bool:
    sn = spectral_norm(mean_closed_loop(params, L1, L2, derived))
    return params.gamma * sn * sn < 1.0


def in_stabilizing_set(params: ModelParams, theta: PolicyPair,
                       derived: DerivedParams | None = None) -> bool:
    """Membership test for the set of policy pairs with summable discounted
    second moments: both closed loops must pass the spectral-norm test."""
    theta.check_dims(params)
    return (dev_block_stable(params, theta.K1, theta.K2)
            and mean_block_stable(params, theta.L1, theta.L2, derived))


def control_from_policy(
    theta: PolicyPair, x: np.ndarray, x_mean: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Controls of both players at state x with conditional mean x_mean.

    u1 = -K1 (x - x_mean) - L1 x_mean (minimizer),
    u2 = +K2 (x - x_mean) + L2 x_mean (maximizer).
    """
    x = np.asarray(x, dtype=float)
    x_mean = np.asarray(x_mean, dtype=float)
    if x.shape != x_mean.shape or x.shape[-1] != theta.K1.shape[1]:
        raise DimensionMismatch(
            f"state shape {x.shape} incompatible with mean {x_mean.shape} "
            f"and gain {theta.K1.shape}"
        )
    y = x - x_mean
    u1 = -(y @ theta.K1.T) - x_mean @ theta.L1.T
    u2 = (y @ theta.K2.T) + x_mean @ theta.L2.T
    return u1, u2
