from .tensor import (
    Tape, Tensor, add, as_tensor, concat, current_tape, diag, div, exp, getitem,
    leaky_relu, log, matmul, mean, mul, parameter, reshape, sigmoid, softplus,
    softplus_array, sqrt, square, stack, sub, tanh, transpose, tsum,
)
from .linalg import eigh_array, eigh_sym
from .optim import AdamState, adam_step, clip_by_global_norm, global_norm
from .gradcheck import GradCheckReport, grad_check, relative_error
