class RegdiffError(Exception):
    """
    Base class for every error raised by the regdiff package.
    """

    iteration: int | None = None


# Network construction
class NotStronglyConnected(RegdiffError, ValueError):
    pass


class ColumnSumViolation(RegdiffError, ValueError):
    pass


class NoSelfLoop(RegdiffError, ValueError):
    pass


class SparsityViolation(RegdiffError, ValueError):
    pass


class AsymmetricGraph(RegdiffError, ValueError):
    pass


class NoConvergence(RegdiffError, RuntimeError):
    pass


# Smoothing
class NonPositiveDelta(RegdiffError, ValueError):
    pass


class NonSeparableSum(RegdiffError, ValueError):
    pass


class DimensionTooLargeForGenericProximity(RegdiffError, ValueError):
    pass


class ConjugateUnavailable(RegdiffError, ValueError):
    pass


# Simulation
class DivergenceDetected(RegdiffError, RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


# Oracles
class NonConvergence(NoConvergence):
    pass


class SubgradientInfeasible(RegdiffError, ValueError):
    pass


class UnsupportedRegularizer(RegdiffError, ValueError):
    pass


# Metrics
class TransientNotSettled(RegdiffError, RuntimeError):
    pass


class NonPositiveValue(RegdiffError, ValueError):
    pass


# Experiment configuration
class ConfigParse(RegdiffError, ValueError):
    pass


class ValidationFailure(RegdiffError, ValueError):
    pass
