"""Projector-splitting integrators for dynamical low-rank approximation."""

from .errors import (ConfigError, DimensionError, GridMismatchError, NonFiniteError,
                     NotInNeighborhoodError, OrthonormalityError, SingularityError)
from .integrators import (FluxField, IntegratorConfig, TrajectoryRecord, chart_step, euler_step,
                          initial_state, integrate, ksl_step)
from .manifold import LowRankState, tangent_project

__version__ = "0.1.0"
