"""Ising models on sparse random graphs and their tree limits."""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
