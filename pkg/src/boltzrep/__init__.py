"""Replicator dynamics of Boltzmann Q-learning agents with continuous actions."""

__version__ = "0.1.0"

from boltzrep.core import (  # noqa: E402
    Density,
    Grid,
    LearningParams,
    entropy,
    free_energy,
    gibbs,
    integrate,
    ks_distance,
    normalize,
)
from boltzrep.games import (  # noqa: E402
    Bilinear,
    Investment,
    PayoffKernel,
    PoliticalAd,
    Quadratic,
    Tabulated,
    tabulate,
)

__all__ = [
    "Bilinear",
    "Density",
    "Grid",
    "Investment",
    "LearningParams",
    "PayoffKernel",
    "PoliticalAd",
    "Quadratic",
    "Tabulated",
    "entropy",
    "free_energy",
    "gibbs",
    "integrate",
    "ks_distance",
    "normalize",
    "tabulate",
]
