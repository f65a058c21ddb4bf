from .analysis import count_flops, count_macs, format_report, param_breakdown
from .decoder import CCAGate, Decoder, DecoderStage, SupervisionHeads, total_loss
from .encoder import Encoder, ResidualBlock
from .network import SCTransNet, build_model
from .sctb import CFN, SSCA, SCTB, FeatureMapper, PatchEmbed, SkipTransformer

__all__ = [
    "CCAGate", "CFN", "Decoder", "DecoderStage", "Encoder", "FeatureMapper",
    "PatchEmbed", "ResidualBlock", "SCTB", "SCTransNet", "SSCA",
    "SkipTransformer", "SupervisionHeads", "build_model", "count_flops",
    "count_macs", "format_report", "param_breakdown", "total_loss",
]
