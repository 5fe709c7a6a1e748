"""Exception hierarchy shared across the package."""


class LqmfgError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LqmfgError):
    """Matrix or vector shapes are inconsistent with the declared dimensions."""


class NonSymmetric(LqmfgError):
    """A weight matrix that must be symmetric is not."""


class NonPositiveDefinite(LqmfgError):
    """A control-weight block failed the positive-definiteness check."""


class BadDiscount(LqmfgError):
    """Discount factor outside the open interval (0, 1)."""


class InvalidNoise(LqmfgError):
    """Noise specification violates its contract (e.g. nonzero step mean)."""


class NoConvergence(LqmfgError):
    """Fixed-point iteration exhausted its budget or diverged."""


class NonStabilizingSolution(LqmfgError):
    """A converged fixed point induces an unstable closed loop."""


class SingularR(LqmfgError):
    """A control-weight block is numerically singular."""


class IndefiniteInnerProblem(LqmfgError):
    """The one-player subproblem has an effective state weight so negative
    that its value diverges."""


class NoRoot(LqmfgError):
    """Root bracketing failed inside the stabilizing interval."""


class DegenerateProblem(NoRoot):
    """Every candidate is stationary (opponent has no control authority)."""


class NotStabilizing(LqmfgError):
    """Policy pair outside the stabilizing set; discounted moments diverge."""


class DegenerateDraw(LqmfgError):
    """Repeated all-zero Gaussian draws while sampling the sphere."""


class BenchmarkZero(LqmfgError):
    """Relative error requested against a zero benchmark utility."""


class NonFinite(LqmfgError):
    """An iterate became NaN or infinite."""


class ConfigError(LqmfgError):
    """Base class for experiment-configuration errors."""


class ParseError(ConfigError):
    """Config file failed to parse (syntax or field value)."""


class SchemaError(ConfigError):
    """Config is missing a required field, has an unknown field, or a field
    fails model validation."""


class CrossFieldError(ConfigError):
    """Fields are individually valid but jointly inconsistent."""
