import numpy as np
import pytest

from lqmfg import Distribution, ModelParams, NoiseSpec

# Positive roots of the scalar equilibrium quadratics
#   0.0315 P^2 + 0.919 P - 0.288 = 0   (deviation part)
#   0.126 Pb^2 + 0.676 Pb - 1.152 = 0  (mean part)
# computed by the quadratic formula, independent of the fixed-point solver.


def quadratic_positive_root(a: float, b: float, c: float) -> float:
    disc = np.sqrt(b * b - 4.0 * a * c)
    return (-b + disc) / (2.0 * a)


P_DEV_ORACLE = quadratic_positive_root(0.0315, 0.919, -0.288)
P_MEAN_ORACLE = quadratic_positive_root(0.126, 0.676, -1.152)

# equilibrium gains from the roots, scalar arithmetic:
# K1 = 0.5*(B1/R1)*P, K2 = 0.5*(B2/R2)*P, L1 = 0.5*(B1t/R1t)*Pb, L2 = 0.5*(B2t/R2t)*Pb
K1_ORACLE = 0.5 * (0.4 / 0.4) * P_DEV_ORACLE
K2_ORACLE = 0.5 * (0.3 / 0.4) * P_DEV_ORACLE
L1_ORACLE = 0.5 * (0.8 / 0.8) * P_MEAN_ORACLE
L2_ORACLE = 0.5 * (0.6 / 0.8) * P_MEAN_ORACLE


def benchmark_noise() -> NoiseSpec:
    return NoiseSpec(
        init_common=Distribution.uniform(-1.0, 1.0),
        init_idio=Distribution.uniform(-1.0, 1.0),
        step_common=Distribution.gaussian(0.0, 0.01),
        step_idio=Distribution.gaussian(0.0, 0.01),
    )


def benchmark_scalars(**overrides) -> dict:
    base = dict(A=0.4, A_bar=0.4, B1=0.4, B1_bar=0.4, B2=0.3, B2_bar=0.3,
                Q=0.4, Q_bar=0.4, R1=0.4, R1_bar=0.4, R2=0.4, R2_bar=0.4,
                gamma=0.9, noise=benchmark_noise())
    base.update(overrides)
    return base


@pytest.fixture
def model() -> ModelParams:
    """The scalar benchmark game used throughout the experiments."""
    return ModelParams.from_scalars(**benchmark_scalars())


@pytest.fixture
def zero_noise_model() -> ModelParams:
    return ModelParams.from_scalars(**benchmark_scalars(noise=NoiseSpec.zero()))


@pytest.fixture
def model_2d() -> ModelParams:
    """A small two-dimensional instance exercising the matrix paths."""
    A = np.array([[0.30, 0.10], [0.00, 0.25]])
    A_bar = np.array([[0.10, 0.00], [0.05, 0.10]])
    B1 = np.array([[0.40], [0.10]])
    B1_bar = np.array([[0.10], [0.00]])
    B2 = np.array([[0.20], [0.30]])
    B2_bar = np.array([[0.00], [0.10]])
    Q = np.array([[0.40, 0.05], [0.05, 0.30]])
    Q_bar = np.array([[0.20, 0.00], [0.00, 0.10]])
    return ModelParams(
        A=A, A_bar=A_bar, B1=B1, B1_bar=B1_bar, B2=B2, B2_bar=B2_bar,
        Q=Q, Q_bar=Q_bar,
        R1=np.array([[0.40]]), R1_bar=np.array([[0.10]]),
        R2=np.array([[0.50]]), R2_bar=np.array([[0.10]]),
        gamma=0.9, noise=benchmark_noise(), d=2, ell=1,
    )
