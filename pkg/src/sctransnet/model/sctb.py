"""Cross-transformer skip path.

All four encoder scales are patch-embedded onto a common (H/16, W/16)
grid, blended by a stack of spatial-channel cross transformer blocks, and
mapped back to their original scales where they merge residually with the
encoder features.

One block = channel-cross attention (each level's channels attend over
the channel concatenation of all levels) followed by a per-level
feed-forward network with two depthwise branches (3x3 / 5x5) and a
channel-attention gate.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import ModelConfig
from ..errors import ConfigurationError
from ..nn import (BatchNorm2d, ChannelConv1d, ChannelLayerNorm, Conv2d,
                  Module, ModuleList, Parameter)
from ..nn import functional as F
from ..nn.tensor import Tensor


class PatchEmbed(Module):
    """Per-level conv with kernel == stride, landing every level on the
    (H/16, W/16) grid.  Optionally adds a learned position tensor,
    bilinearly resampled when the input grid differs from the nominal one."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        self.embeds = ModuleList(
            Conv2d(c, c, cfg.patch_size >> i, stride=cfg.patch_size >> i,
                   rng=rng, dtype=dtype)
            for i, c in enumerate(cfg.channels))
        self.use_pe = cfg.positional_encoding
        if self.use_pe:
            self.pos = ModuleList()
            for c in cfg.channels:
                holder = Module()
                holder.embedding = Parameter(
                    (rng.standard_normal((1, c, cfg.pe_grid, cfg.pe_grid))
                     * 0.02).astype(dtype))
                self.pos.append(holder)

    def forward(self, feats):
        grid = (feats[0].shape[2] // self.embeds[0].spec.stride[0],
                feats[0].shape[3] // self.embeds[0].spec.stride[1])
        out = []
        for i, (f, emb) in enumerate(zip(feats, self.embeds)):
            x = emb(f)
            if x.shape[2:] != grid:
                raise ConfigurationError(
                    f"level {i + 1} embeds to {x.shape[2:]}, expected {grid}; "
                    "encoder shape ladder violated")
            if self.use_pe:
                pe = self.pos[i].embedding
                if pe.shape[2:] != grid:
                    pe = F.resample_bilinear(pe, *grid)
                x = x + pe
            out.append(x)
        return out


class SSCA(Module):
    """Channel-cross attention: level queries over concatenated keys/values.

    Query/key/value generators are a pointwise conv followed by a 3x3
    depthwise conv (the depthwise part is the spatial embedding and is
    dropped when ``spatial_embedding`` is off).  Attention logits are
    instance normalized per sample, tempered by sqrt(key channels), and
    softmaxed over the key-channel axis.  Single head by default."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        cs = cfg.channel_sum
        self.heads = cfg.num_heads
        self.spatial = cfg.spatial_embedding

        def gen(c):
            holder = Module()
            holder.pw = Conv2d(c, c, 1, bias=False, rng=rng, dtype=dtype)
            if self.spatial:
                holder.dw = Conv2d(c, c, 3, padding=1, groups=c, bias=False,
                                   rng=rng, dtype=dtype)
            return holder

        self.q_gens = ModuleList(gen(c) for c in cfg.channels)
        self.k_gen = gen(cs)
        self.v_gen = gen(cs)
        self.out_projs = ModuleList(
            Conv2d(c, c, 1, bias=False, rng=rng, dtype=dtype)
            for c in cfg.channels)

    def _apply_gen(self, gen, x):
        y = gen.pw(x)
        if self.spatial:
            y = gen.dw(y)
        return y

    def _flatten_heads(self, x):
        b, c, h, w = x.shape
        return F.reshape(x, (b, self.heads, c // self.heads, h * w))

    def forward(self, j_levels, j_sum):
        hw = j_sum.shape[2:]
        for j in j_levels:
            if j.shape[2:] != hw:
                raise ConfigurationError("attention inputs must share spatial "
                                         f"extents, got {j.shape[2:]} vs {hw}")
        b = j_sum.shape[0]
        cs = j_sum.shape[1]
        k = self._flatten_heads(self._apply_gen(self.k_gen, j_sum))
        v = self._flatten_heads(self._apply_gen(self.v_gen, j_sum))
        temp = math.sqrt(cs / self.heads)
        outs = []
        for j, q_gen, proj in zip(j_levels, self.q_gens, self.out_projs):
            c = j.shape[1]
            q = self._flatten_heads(self._apply_gen(q_gen, j))
            logits = F.mul(F.matmul(q, k, transpose_b=True), 1.0 / temp)
            logits = F.norm_axes(logits, (2, 3))
            attn = F.softmax_lastdim(logits)
            mixed = F.matmul(attn, v)  # (b, heads, c/heads, hw)
            mixed = F.reshape(mixed, (b, c, hw[0], hw[1]))
            outs.append(proj(mixed))
        return outs

    def attention_maps(self, j_levels, j_sum):
        """Post-softmax attention matrices, for inspection and tests."""
        k = self._flatten_heads(self._apply_gen(self.k_gen, j_sum))
        temp = math.sqrt(j_sum.shape[1] / self.heads)
        maps = []
        for j, q_gen in zip(j_levels, self.q_gens):
            q = self._flatten_heads(self._apply_gen(q_gen, j))
            logits = F.mul(F.matmul(q, k, transpose_b=True), 1.0 / temp)
            a = F.softmax_lastdim(F.norm_axes(logits, (2, 3)))
            b, heads, ch, cs = a.shape
            maps.append(F.reshape(a, (b, heads * ch, cs)) if heads > 1 else
                        F.reshape(a, (b, ch, cs)))
        return maps


class CFN(Module):
    """Feed-forward with two complementary paths: multi-scale depthwise
    spatial mixing, then a pooled channel-attention gate, residual in."""

    def __init__(self, channels: int, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        ce = cfg.expanded_channels(channels)
        self.half = ce // 2
        self.act = cfg.ffn_activation
        self.gslc = cfg.gslc
        self.gate_sigmoid = cfg.gate_sigmoid
        self.ln = ChannelLayerNorm(channels, dtype=dtype)
        self.expand = Conv2d(channels, ce, 1, bias=False, rng=rng, dtype=dtype)
        self.dw3 = Conv2d(self.half, self.half, 3, padding=1, groups=self.half,
                          bias=False, rng=rng, dtype=dtype)
        self.dw5 = Conv2d(self.half, self.half, 5, padding=2, groups=self.half,
                          bias=False, rng=rng, dtype=dtype)
        self.contract = Conv2d(ce, channels, 1, bias=False, rng=rng, dtype=dtype)
        if self.gslc:
            self.channel_att = ChannelConv1d(3, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = self.expand(self.ln(x))
        a = F.slice_axis(y, 1, 0, self.half)
        b = F.slice_axis(y, 1, self.half, 2 * self.half)
        a = F.activation(self.dw3(a), self.act)
        b = F.activation(self.dw5(b), self.act)
        sc = self.contract(F.concat([a, b], axis=1))
        if not self.gslc:
            return sc + x
        gate = self.channel_att(F.gap(sc))
        if self.gate_sigmoid:
            gate = F.sigmoid(gate)
        return F.mul(gate, sc) + x


class SCTB(Module):
    """One transformer block over the four embedded levels."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        self.lns = ModuleList(ChannelLayerNorm(c, dtype=dtype)
                              for c in cfg.channels)
        self.ln_sum = ChannelLayerNorm(cfg.channel_sum, dtype=dtype)
        self.ssca = SSCA(cfg, rng=rng, dtype=dtype)
        self.cfns = ModuleList(CFN(c, cfg, rng=rng, dtype=dtype)
                               for c in cfg.channels)

    def normed_inputs(self, levels):
        j_levels = [ln(x) for ln, x in zip(self.lns, levels)]
        j_sum = self.ln_sum(F.concat(list(levels), axis=1))
        return j_levels, j_sum

    def forward(self, levels):
        j_levels, j_sum = self.normed_inputs(levels)
        attended = self.ssca(j_levels, j_sum)
        blended = [ca + x for ca, x in zip(attended, levels)]
        return [cfn(p) for cfn, p in zip(self.cfns, blended)]


class FeatureMapper(Module):
    """Upsample a blended level back to its encoder scale: bilinear
    resize, then 3x3 conv + BN + ReLU."""

    def __init__(self, channels, *, rng, dtype):
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, padding=1, bias=False,
                           rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(channels, dtype=dtype)

    def forward(self, x: Tensor, out_h: int, out_w: int) -> Tensor:
        return F.relu(self.bn(self.conv(F.resample_bilinear(x, out_h, out_w))))


class SkipTransformer(Module):
    """Patch embed -> repeated SCTB -> feature mapping -> residual merge.

    The block stack applies ``num_sctb`` times; with ``sctb_shared`` (the
    default) all applications reuse one parameter set, which is what the
    11.2M parameter budget implies.
    """

    def __init__(self, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        self.num_sctb = cfg.num_sctb
        self.shared = cfg.sctb_shared
        self.patch_embed = PatchEmbed(cfg, rng=rng, dtype=dtype)
        if self.shared:
            self.block = SCTB(cfg, rng=rng, dtype=dtype)
        else:
            self.blocks = ModuleList(SCTB(cfg, rng=rng, dtype=dtype)
                                     for _ in range(cfg.num_sctb))
        self.mappers = ModuleList(FeatureMapper(c, rng=rng, dtype=dtype)
                                  for c in cfg.channels)

    def block_sequence(self):
        if self.shared:
            return [self.block] * self.num_sctb
        return list(self.blocks)

    def forward(self, encoder_feats):
        levels = self.patch_embed(encoder_feats[:4])
        for block in self.block_sequence():
            levels = block(levels)
        merged = []
        for e, o, fm in zip(encoder_feats, levels, self.mappers):
            merged.append(e + fm(o, e.shape[2], e.shape[3]))
        return merged, levels
