"""Analytic compute accounting and parameter breakdowns.

Multiply-accumulates are counted for convolutions, linear layers, and the
attention matrix products; elementwise work (norms, activations, pooling,
interpolation) is excluded.  The default reporting convention treats one
MAC as one reported FLOP, which matches how network complexity tables are
usually produced by profilers; ``convention="flop2"`` doubles the count
(separate multiply and add).
"""

from __future__ import annotations

from ..config import ModelConfig
from ..errors import ConfigurationError

CONVENTIONS = {"mac": 1, "flop2": 2}


def count_macs(cfg: ModelConfig, h: int = 256, w: int = 256) -> dict[str, int]:
    if h % 16 or w % 16:
        raise ConfigurationError("input extents must be divisible by 16")
    C = cfg.channels
    CB = cfg.bottleneck_channels
    CS = cfg.channel_sum
    spatial = [(h >> i) * (w >> i) for i in range(5)]
    hw = spatial[4]  # embedded grid

    encoder = 0
    chans = [1, *C, CB]
    for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
        s = spatial[min(i, 4)]
        encoder += (9 * cin * cout + 9 * cout * cout + cin * cout) * s

    patch_embed = sum(c * c * (cfg.patch_size >> i) ** 2 * hw
                      for i, c in enumerate(C))

    ssca = sum(c * c for c in C) * hw          # query pointwise
    ssca += 2 * CS * CS * hw                   # key/value pointwise
    if cfg.spatial_embedding:
        ssca += 9 * (sum(C) + 2 * CS) * hw     # depthwise spatial embedding
    ssca += 2 * CS * CS * hw // cfg.num_heads  # logits + attention*values
    ssca += sum(c * c for c in C) * hw         # output projections

    cfn = 0
    for c in C:
        ce = cfg.expanded_channels(c)
        cfn += (c * ce + 9 * (ce // 2) + 25 * (ce // 2) + ce * c) * hw
        if cfg.gslc:
            cfn += 3 * c
    sctb = cfg.num_sctb * (ssca + cfn)

    feature_mapping = sum(9 * c * c * spatial[i] for i, c in enumerate(C))

    decoder = 0
    for i in range(4):
        cs_, cd = chans[i + 1], chans[i + 2]
        s = spatial[i]
        decoder += cd * cs_                      # gate linear
        decoder += 9 * (cd + cs_) * cs_ * s      # first CBL
        decoder += 9 * cs_ * cs_ * s             # second CBL

    heads = sum(c * spatial[i] for i, c in enumerate(C)) + CB * spatial[4]
    heads += 5 * h * w  # fusion over the five stacked maps

    parts = {
        "encoder": encoder,
        "patch_embed": patch_embed,
        "sctb": sctb,
        "feature_mapping": feature_mapping,
        "decoder": decoder,
        "heads": heads,
    }
    parts["total"] = sum(parts.values())
    return parts


def count_flops(cfg: ModelConfig, h: int = 256, w: int = 256,
                convention: str = "mac") -> dict[str, int]:
    if convention not in CONVENTIONS:
        raise ConfigurationError(
            f"unknown FLOP convention {convention!r}; pick from "
            f"{sorted(CONVENTIONS)}")
    factor = CONVENTIONS[convention]
    return {k: factor * v for k, v in count_macs(cfg, h, w).items()}


def param_breakdown(model) -> dict[str, int]:
    """Learnable scalar count per top-level component, from live tensors."""
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        groups[top] = groups.get(top, 0) + p.data.size
    groups["total"] = sum(groups.values())
    return groups


def format_report(model, h: int = 256, w: int = 256,
                  convention: str = "mac") -> str:
    params = param_breakdown(model)
    flops = count_flops(model.cfg, h, w, convention)
    lines = [
        f"input {h}x{w}, flop convention: {convention} "
        f"({CONVENTIONS[convention]} per multiply-accumulate)",
        f"{'component':<18}{'params':>12}{'params(M)':>11}{'flops(G)':>11}",
    ]
    order = ["encoder", "skip", "decoder", "heads"]
    flop_of = {"encoder": flops["encoder"],
               "skip": flops["patch_embed"] + flops["sctb"]
                       + flops["feature_mapping"],
               "decoder": flops["decoder"],
               "heads": flops["heads"]}
    for key in order:
        p = params.get(key, 0)
        lines.append(f"{key:<18}{p:>12d}{p / 1e6:>11.4f}"
                     f"{flop_of[key] / 1e9:>11.4f}")
    lines.append(f"{'total':<18}{params['total']:>12d}"
                 f"{params['total'] / 1e6:>11.4f}{flops['total'] / 1e9:>11.4f}")
    return "\n".join(lines)
