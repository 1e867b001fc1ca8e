"""Tensor-train quantum state tomography: simulation, recovery and diagnostics."""

from ttqst.tt import CapacityError, TensorTrain

__all__ = ["CapacityError", "TensorTrain"]
__version__ = "0.1.0"
