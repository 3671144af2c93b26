"""Minimal reverse-mode autodiff over dense numpy tensors"""

from engine.graph import ComputeGraph, Parameter, Tensor, backward
from engine.kernels import KERNELS
from engine.optim import OptState, PlateauState, adam_step, adamw_step, plateau_step

__all__ = [
    'ComputeGraph', 'Parameter', 'Tensor', 'backward', 'KERNELS',
    'OptState', 'PlateauState', 'adam_step', 'adamw_step', 'plateau_step',
]
