"""Simulation and analysis toolkit for photoelectrically detected magnetic resonance of NV ensembles."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
