"""Baseband function placement in MEC sub-networks as a maze-walking DQN."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
