"""Minimal numpy neural-net framework with hand-written backward passes.

Small enough to finite-difference check end to end at 64-bit; fast enough at
float32 (im2col/col2im ride the selected kernel backend, matmuls go to BLAS).
"""

from .layers import (
    Module,
    Sequential,
    Linear,
    Conv2d,
    ConvTranspose2d,
    BatchNorm2d,
    LeakyReLU,
    ReLU,
    Tanh,
)
from .optim import Adam
from .gradcheck import numeric_gradients, max_relative_error

__all__ = [
    "Module",
    "Sequential",
    "Linear",
    "Conv2d",
    "ConvTranspose2d",
    "BatchNorm2d",
    "LeakyReLU",
    "ReLU",
    "Tanh",
    "Adam",
    "numeric_gradients",
    "max_relative_error",
]
