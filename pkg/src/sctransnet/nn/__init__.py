"""Numeric core: autodiff tensors, differentiable ops, layers, optimizer.

The gradient tape is implicit: ops record backward closures on their
output tensors, and ``Tensor.backward()`` (or ``nn.backward(loss)``)
replays them in reverse topological order.  One tape per training step;
tapes are never shared across threads.
"""

from .tensor import Tensor, backward, grad_enabled, no_grad
from . import functional
from .functional import ConvSpec
from .modules import (BatchNorm2d, ChannelConv1d, ChannelLayerNorm, Conv2d,
                      ConvBNReLU, Linear, Module, ModuleList, Parameter,
                      uniform_fan_in)
from .optim import Adam, cosine_lr
from .params import ParamStore, load_into, read_checkpoint

__all__ = [
    "Tensor", "backward", "grad_enabled", "no_grad", "functional", "ConvSpec",
    "BatchNorm2d", "ChannelConv1d", "ChannelLayerNorm", "Conv2d", "ConvBNReLU",
    "Linear", "Module", "ModuleList", "Parameter", "uniform_fan_in",
    "Adam", "cosine_lr", "ParamStore", "load_into", "read_checkpoint",
]
