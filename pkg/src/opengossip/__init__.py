"""Expected-moment analysis and simulation of open multi-agent gossip systems."""
from .core import (
    AffineMap2,
    ArrivalDistribution,
    MomentVector,
    SystemState,
    Trajectory,
    apply_affine,
    empirical_moments,
)

__version__ = "0.1.0"
