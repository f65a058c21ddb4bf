"""Layer building blocks over the functional ops.

A ``Module`` tracks parameters, persistent buffers, and child modules by
attribute assignment, giving every tensor a stable hierarchical name
(``encoder.stage1.conv1.weight``).  Construction order is fixed, so a
seeded generator threaded through the constructors makes initialization
reproducible.
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigurationError
from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data, dtype=None, name=None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype):
    """Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, items=()):
        super().__init__()
        self._items = []
        for m in items:
            self.append(m)

    def append(self, m: Module):
        self._children[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 groups=1, bias=True, *, rng: np.random.Generator, dtype):
        super().__init__()
        k = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        s = (stride, stride) if isinstance(stride, int) else tuple(stride)
        p = (padding, padding) if isinstance(padding, int) else tuple(padding)
        self.spec = F.ConvSpec(in_channels, out_channels, k, s, p, groups, bias)
        fan_in = (in_channels // groups) * k[0] * k[1]
        self.weight = Parameter(
            uniform_fan_in(rng, self.spec.weight_shape(), fan_in, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.spec, self.weight, self.bias)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, *,
                 rng: np.random.Generator, dtype):
        super().__init__()
        self.weight = Parameter(
            uniform_fan_in(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class ChannelConv1d(Module):
    """Single shared k-tap filter slid along the channel axis (ECA style)."""

    def __init__(self, kernel_size=3, *, rng: np.random.Generator, dtype):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigurationError("channel conv kernel size must be odd")
        self.weight = Parameter(
            uniform_fan_in(rng, (kernel_size,), kernel_size, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d_channel(x, self.weight)


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1, *, dtype):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.normalize(x, "batch", self.gamma, self.beta, self.eps,
                           training=self.training,
                           running_mean=self.running_mean,
                           running_var=self.running_var,
                           momentum=self.momentum)


class ChannelLayerNorm(Module):
    """Layer norm over the channel axis, per (batch, spatial) position."""

    def __init__(self, channels, eps=1e-5, *, dtype):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.normalize(x, "layer", self.gamma, self.beta, self.eps)


class ConvBNReLU(Module):
    """CBL block: 3x3 conv (no bias), batch norm, ReLU."""

    def __init__(self, in_channels, out_channels, *, rng, dtype):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, padding=1, bias=False,
                           rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))
