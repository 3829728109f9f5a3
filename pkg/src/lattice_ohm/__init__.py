"""Linear-response charge transport of disordered lattice fermions.

Finite-volume, exactly diagonalised model of non-interacting fermions on
Z^d with a random potential, driven by a localized electric field.  The
modules compute the transport coefficients, drive the dynamics, check the
linear-response (Ohm/Joule) limits and the frequency measure of the
in-phase conductivity.
"""
from .errors import (CalibrationError, CapacityError, CheckpointError, ConfigError, ContractError,
                     GeometryError, LatticeOhmError, NumericalError)

__version__ = "0.1.0"

__all__ = ["CalibrationError", "CapacityError", "CheckpointError", "ConfigError", "ContractError",
           "GeometryError", "LatticeOhmError", "NumericalError", "__version__"]
