"""Decoder: gated skip fusion, CBL decoding, supervision heads, loss."""

from __future__ import annotations

import math

import numpy as np

from ..config import ModelConfig
from ..errors import ConfigurationError
from ..nn import Conv2d, ConvBNReLU, Linear, Module, ModuleList
from ..nn import functional as F
from ..nn.tensor import Tensor


class CCAGate(Module):
    """Per-channel gate on the skip feature, driven by the pooled decoder
    feature: sigmoid(linear(GAP(up)))."""

    def __init__(self, decoder_channels, skip_channels, *, rng, dtype):
        super().__init__()
        self.fc = Linear(decoder_channels, skip_channels, rng=rng, dtype=dtype)

    def forward(self, decoder_feat: Tensor, skip: Tensor) -> Tensor:
        b, c = decoder_feat.shape[:2]
        pooled = F.reshape(F.gap(decoder_feat), (b, c))
        gate = F.sigmoid(self.fc(pooled))
        gate = F.reshape(gate, (b, skip.shape[1], 1, 1))
        return F.mul(gate, skip)


class DecoderStage(Module):
    def __init__(self, decoder_channels, skip_channels, *, rng, dtype):
        super().__init__()
        self.cca = CCAGate(decoder_channels, skip_channels, rng=rng, dtype=dtype)
        self.cbl1 = ConvBNReLU(decoder_channels + skip_channels, skip_channels,
                               rng=rng, dtype=dtype)
        self.cbl2 = ConvBNReLU(skip_channels, skip_channels, rng=rng, dtype=dtype)

    def forward(self, deeper: Tensor, skip: Tensor) -> Tensor:
        up = F.resample_bilinear(deeper, skip.shape[2], skip.shape[3])
        gated = self.cca(up, skip)
        return self.cbl2(self.cbl1(F.concat([up, gated], axis=1)))


class Decoder(Module):
    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        chans = [*cfg.channels, cfg.bottleneck_channels]
        # stage i consumes level i+1 output and skip i, deepest first
        self.stages = ModuleList(
            DecoderStage(chans[i + 1], chans[i], rng=rng, dtype=dtype)
            for i in reversed(range(4)))

    def forward(self, skips, bottleneck: Tensor):
        if len(skips) != 4:
            raise ConfigurationError(f"expected 4 skip levels, got {len(skips)}")
        feats = [bottleneck]  # f5
        x = bottleneck
        for stage, skip in zip(self.stages, reversed(skips)):
            x = stage(x, skip)
            feats.append(x)
        return tuple(reversed(feats))  # (f1, f2, f3, f4, f5)


# detection-prior bias: heads start predicting ~1% foreground, so the
# loss is not dominated by the easy background class early in training
PRIOR_LOGIT = -float(np.log(99.0))


class SupervisionHeads(Module):
    """Per-level 1x1 heads plus the fusion head over all five maps."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        chans = [*cfg.channels, cfg.bottleneck_channels]
        self.heads = ModuleList(Conv2d(c, 1, 1, rng=rng, dtype=dtype)
                                for c in chans)
        self.fuse = Conv2d(len(chans), 1, 1, rng=rng, dtype=dtype)
        for head in [*self.heads, self.fuse]:
            head.bias.data[...] = PRIOR_LOGIT

    def forward(self, feats, out_h: int, out_w: int):
        maps = [F.sigmoid(head(f)) for head, f in zip(self.heads, feats)]
        upsampled = [maps[0]]
        for m in maps[1:]:
            upsampled.append(F.resample_bilinear(m, out_h, out_w))
        fused = F.sigmoid(self.fuse(F.concat(upsampled, axis=1)))
        return maps, upsampled, fused


def total_loss(upsampled_maps, fused: Tensor, target,
               weights=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
               deep_supervision: bool = True):
    """Weighted sum of the six BCE terms (five auxiliary + fused).

    With deep supervision off, only the fused term contributes.
    Returns (loss tensor, {term name: float}).
    """
    if len(weights) != 6:
        raise ConfigurationError("expected 6 loss weights (5 levels + fused)")
    terms = {}
    total = None
    if deep_supervision:
        for i, (m, lam) in enumerate(zip(upsampled_maps, weights[:5]), start=1):
            term = F.bce(m, target)
            terms[f"l{i}"] = term.item()
            if lam != 0.0:
                scaled = F.mul(term, float(lam))
                total = scaled if total is None else total + scaled
    fused_term = F.bce(fused, target)
    terms["l_fused"] = fused_term.item()
    if weights[5] != 0.0:
        scaled = F.mul(fused_term, float(weights[5]))
        total = scaled if total is None else total + scaled
    if total is None:
        total = F.mul(fused_term, 0.0)
    return total, terms
