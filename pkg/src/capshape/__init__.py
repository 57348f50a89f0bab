"""Capacity-achieving input distributions and optimal prefix-free modulation codes."""

from capshape.constellation import (
    Constellation,
    feasible_energy_range,
    load_constellation,
    make_square_qam,
)
from capshape.errors import (
    BlockTooLargeError,
    ConvergenceError,
    InfeasibleError,
    InvalidInputError,
    NotFullCodeError,
)
from capshape.mi import NoiseModel, QuadratureSpec

__all__ = [
    "BlockTooLargeError",
    "Constellation",
    "ConvergenceError",
    "InfeasibleError",
    "InvalidInputError",
    "NoiseModel",
    "NotFullCodeError",
    "QuadratureSpec",
    "feasible_energy_range",
    "load_constellation",
    "make_square_qam",
]

__version__ = "0.1.0"
