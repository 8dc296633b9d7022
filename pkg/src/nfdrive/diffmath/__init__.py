"""Differentiable-numerics substrate: tensors, layers, distributions, optimizer."""

from .tensor import (DiffError, Tensor, absolute, add, as_tensor, concat, constant,
                     div, exp, log, matmul, maximum, mul, reshape, sigmoid, softplus,
                     square, stack, sub, take, tanh, tmean, tsum)
from .params import ParamSet, value_and_grad
from .layers import affine, gru_step, init_affine, init_gru, init_mlp, mlp
from .distributions import (LOG_2PI, STDDEV_FLOOR, DiagGaussian, gaussian_kl,
                            stddev_from_raw)
from .optim import Adam

__all__ = [
    "DiffError", "Tensor", "ParamSet", "value_and_grad", "Adam", "DiagGaussian",
    "gaussian_kl", "stddev_from_raw", "STDDEV_FLOOR", "LOG_2PI",
    "add", "sub", "mul", "div", "matmul", "tanh", "sigmoid", "softplus", "exp",
    "log", "square", "absolute", "maximum", "tsum", "tmean", "reshape", "concat",
    "take", "stack", "as_tensor", "constant",
    "affine", "init_affine", "init_mlp", "mlp", "init_gru", "gru_step",
]
