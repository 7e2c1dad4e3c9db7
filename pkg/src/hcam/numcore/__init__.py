"""Differentiable tensor primitives, GRU kernels, optimizer and gradient checking."""
from . import _kernels
from .functional import (bias_add, conv1d, dropout, l2_normalize, layer_norm, linear,
                         log_softmax, masked_rows, softmax_rows)
from .gradcheck import GradCheckReport, grad_check
from .gru import BiGRU, GruCellParams, gru_cell, gru_sequence
from .module import FeedForward, LayerNorm, Linear, Module, uniform_init, zeros_param
from .optim import Adam, OptimizerState, adam_step, clip_gradients_l2, global_norm
from .tensor import (Tensor, add, as_tensor, concat, exp, getitem, log, matmul, mul, no_grad,
                     relu, reshape, sigmoid, sqrt, stack, sub, tanh, transpose)

__all__ = [
    "Tensor", "no_grad", "as_tensor", "add", "sub", "mul", "matmul", "exp", "log", "sqrt",
    "tanh", "sigmoid", "relu", "reshape", "transpose", "getitem", "concat", "stack",
    "softmax_rows", "log_softmax", "layer_norm", "linear", "conv1d", "l2_normalize",
    "dropout", "masked_rows", "bias_add",
    "GruCellParams", "gru_cell", "gru_sequence", "BiGRU",
    "Module", "Linear", "LayerNorm", "FeedForward", "uniform_init", "zeros_param",
    "Adam", "OptimizerState", "adam_step", "clip_gradients_l2", "global_norm",
    "grad_check", "GradCheckReport", "kernel_backend",
]


def kernel_backend():
    return _kernels.backend()
