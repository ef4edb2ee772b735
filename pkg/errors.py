"""Exceptions raised by the solver, the models, the metrics and the CLI."""


class NoFlowError(Exception):
    """Base class for every error this package raises."""


class ConfigInvalid(NoFlowError):
    """A scheme or experiment setting is out of range or unknown."""


# --------------------------------------------------------------------------- #
# Solver failures. A run stops at the first one.
# --------------------------------------------------------------------------- #

class SolverError(NoFlowError):
    """Base class for failures while advancing a solution."""


class NonFiniteSlope(SolverError):
    """A no-flow slope evaluated to NaN or infinity."""


class DegenerateCell(SolverError):
    """An evolved cell width fell below the positivity guard."""


class NegativeCoefficient(SolverError):
    """A projection weight became negative (timestep too large)."""


class NegativeRadius(SolverError):
    """The radius component of the Keyfitz-Kranzer state went negative."""


class NonConvexFlux(SolverError):
    """The Godunov baseline was asked to run on a flux it cannot handle."""


class KernelUnresolved(SolverError):
    """The nonlocal kernel support is not resolved by the grid."""


# --------------------------------------------------------------------------- #
# Metric failures
# --------------------------------------------------------------------------- #

class MetricError(NoFlowError):
    """Base class for errors while comparing solutions."""


class IncompatibleGrids(MetricError):
    """Two fields cannot be compared cell by cell."""


class MassMismatch(MetricError):
    """W1 was requested for two profiles of different mass."""


class NeedTwoPoints(MetricError):
    """A convergence fit needs at least two distinct grid sizes."""
