"""Finite-volume incompressible flow solver on moving overset quadrilateral meshes."""

from .kernels import USE_NUMBA, NUMBA_AVAILABLE

__version__ = "0.1.0"
