"""Backbone: residual stages with 2x2 max pooling between them.

Stage i outputs E_i at (C_i, H/2^(i-1), W/2^(i-1)); a fifth bottleneck
stage pools once more and widens to the bottleneck channel count, giving
the deepest decoder input at (H/16, W/16).
"""

from __future__ import annotations

import numpy as np

from ..config import ModelConfig
from ..errors import ConfigurationError
from ..nn import BatchNorm2d, Conv2d, Module, ModuleList
from ..nn import functional as F
from ..nn.tensor import Tensor


class ResidualBlock(Module):
    """Basic block: two 3x3 conv+BN, ReLU between and after the add.
    Projection shortcut (1x1 conv+BN) only when channel counts differ."""

    def __init__(self, in_channels, out_channels, *, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(in_channels, out_channels, 3, padding=1, bias=False,
                            rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(out_channels, dtype=dtype)
        self.conv2 = Conv2d(out_channels, out_channels, 3, padding=1, bias=False,
                            rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(out_channels, dtype=dtype)
        if in_channels != out_channels:
            self.proj = Conv2d(in_channels, out_channels, 1, bias=False,
                               rng=rng, dtype=dtype)
            self.bn_proj = BatchNorm2d(out_channels, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        s = self.bn_proj(self.proj(x)) if self.proj is not None else x
        return F.relu(h + s)


class Encoder(Module):
    def __init__(self, cfg: ModelConfig, *, rng: np.random.Generator, dtype):
        super().__init__()
        chans = [1, *cfg.channels, cfg.bottleneck_channels]
        self.stages = ModuleList(
            ResidualBlock(cin, cout, rng=rng, dtype=dtype)
            for cin, cout in zip(chans[:-1], chans[1:]))

    def forward(self, image: Tensor):
        b, c, h, w = image.data.shape
        if c != 1:
            raise ConfigurationError(f"expected single-channel input, got {c}")
        if h % 16 or w % 16:
            raise ConfigurationError(
                f"input extents {h}x{w} must be divisible by 16; pad the "
                "image first (see data.prepare_eval)")
        feats = []
        x = image
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = F.maxpool2x2(x)
            x = stage(x)
            feats.append(x)
        return tuple(feats)  # (e1, e2, e3, e4, e5)
