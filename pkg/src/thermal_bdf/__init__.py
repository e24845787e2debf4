"""Thermal Dirac sea at finite temperature: relative entropy, translation-invariant
vacuum, polarization kernel, linear Debye screening and a lattice SCF solver."""

from .momentum import ModelParams

__all__ = ["ModelParams"]
__version__ = "0.1.0"
