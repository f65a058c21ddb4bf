"""Full detector: encoder + transformer skip path + decoder + heads."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..config import ModelConfig
from ..errors import ConfigurationError
from ..nn import Module, ParamStore, load_into, no_grad
from ..nn.tensor import Tensor, as_tensor
from .decoder import Decoder, SupervisionHeads, total_loss
from .encoder import Encoder
from .sctb import SkipTransformer


class SCTransNet(Module):
    def __init__(self, cfg: Optional[ModelConfig] = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        self.encoder = Encoder(cfg, rng=rng, dtype=dtype)
        self.skip = SkipTransformer(cfg, rng=rng, dtype=dtype)
        self.decoder = Decoder(cfg, rng=rng, dtype=dtype)
        self.heads = SupervisionHeads(cfg, rng=rng, dtype=dtype)

    # -- forward --------------------------------------------------------

    def forward(self, image):
        """Returns (fused map, [six-term-ready upsampled maps])."""
        x = as_tensor(image, dtype=self.cfg.np_dtype)
        h, w = x.shape[2], x.shape[3]
        feats = self.encoder(x)
        merged, _ = self.skip(feats[:4])
        decoded = self.decoder(merged, feats[4])
        _, upsampled, fused = self.heads(decoded, h, w)
        return fused, upsampled

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Inference-mode saliency map as an ndarray (b, 1, h, w)."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                fused, _ = self.forward(image)
        finally:
            if was_training:
                self.train()
        return fused.data

    def loss(self, image, target, weights=(1.0,) * 6):
        fused, upsampled = self.forward(image)
        return total_loss(upsampled, fused, target, weights,
                          deep_supervision=self.cfg.deep_supervision)

    # -- bookkeeping ------------------------------------------------------

    def param_store(self) -> ParamStore:
        return ParamStore.from_module(self)

    def count_params(self) -> int:
        return self.param_store().count_params()

    def count_flops(self, h: int = 256, w: int = 256,
                    convention: str = "mac") -> int:
        from .analysis import count_flops
        return count_flops(self.cfg, h, w, convention)["total"]

    def save_checkpoint(self, path, meta: Optional[dict] = None) -> None:
        from ..config import run_config_to_dict, RunConfig
        import dataclasses
        full = dict(meta or {})
        full["model_config"] = dataclasses.asdict(self.cfg)
        full["model_config"]["channels"] = list(self.cfg.channels)
        self.param_store().save(path, full)

    def load_checkpoint(self, path) -> dict:
        return load_into(self.param_store(), path)


def build_model(cfg: Optional[ModelConfig] = None, seed: int = 0) -> SCTransNet:
    return SCTransNet(cfg, seed=seed)
