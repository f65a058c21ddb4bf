"""Training loop: Adam with cosine-annealed learning rate, deep-supervised
BCE loss, line-delimited structured logs, periodic and best checkpoints.

Everything is seeded; rerunning with the same seed reproduces the log
bitwise (same process count, same backend).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import TrainConfig
from .data import Sample, prepare_train
from .errors import ConfigurationError
from .evaluate import evaluate_model
from .model.decoder import total_loss
from .model.network import SCTransNet
from .nn import Adam, cosine_lr

log = logging.getLogger(__name__)


def _first_nonfinite(named_tensors) -> Optional[str]:
    for name, t in named_tensors:
        if not np.all(np.isfinite(t.data)):
            return name
    return None


def make_batches(n: int, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch] for i in range(0, n, batch)]


def train(model: SCTransNet, samples: list[Sample], cfg: TrainConfig,
          out_dir=None, val_samples: Optional[list[Sample]] = None,
          fixed_lr: Optional[float] = None) -> list[dict]:
    """Train in place; returns the per-step log records."""
    if not samples:
        raise ConfigurationError("training dataset is empty")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_fh = open(out_dir / "train_log.jsonl", "w") if out_dir else None

    rng = np.random.default_rng(cfg.seed)
    store = model.param_store()
    opt = Adam(store)
    weights = (1.0,) * 6
    history: list[dict] = []
    best_iou = -1.0
    step = 0
    try:
        for epoch in range(cfg.epochs):
            lr = fixed_lr if fixed_lr is not None else cosine_lr(
                epoch, cfg.epochs, cfg.lr0, cfg.lr_min)
            model.train()
            for batch_idx in make_batches(len(samples), cfg.batch, rng):
                imgs, masks = [], []
                for i in batch_idx:
                    img, mask = prepare_train(samples[i], cfg.crop, rng,
                                              augment=cfg.augment)
                    imgs.append(img[None])
                    masks.append(mask[None])
                x = np.stack(imgs).astype(model.cfg.np_dtype)
                y = np.stack(masks).astype(model.cfg.np_dtype)

                fused, upsampled = model.forward(x)
                loss, terms = total_loss(
                    upsampled, fused, y, weights,
                    deep_supervision=model.cfg.deep_supervision)
                if not np.isfinite(loss.item()):
                    named = [(f"m{i + 1}", m) for i, m in enumerate(upsampled)]
                    named.append(("m_fused", fused))
                    named += list(store.items())
                    culprit = _first_nonfinite(named) or "loss"
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} step {step}; first "
                        f"non-finite tensor: {culprit}")
                opt.zero_grad()
                loss.backward()
                store.ensure_grads()
                opt.step(lr)
                step += 1
                record = {"epoch": epoch, "step": step, "lr": lr,
                          "loss": loss.item(), **terms}
                history.append(record)
                if log_fh and (step % cfg.log_every == 0):
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()

            if (epoch + 1) % cfg.val_every == 0 and val_samples:
                results, _ = evaluate_model(model, val_samples,
                                            threshold=model.cfg.threshold,
                                            include_roc=False)
                log.info("epoch %d: loss=%.5f val IoU=%.4f", epoch,
                         history[-1]["loss"], results["IoU"])
                if out_dir is not None and results["IoU"] > best_iou:
                    best_iou = results["IoU"]
                    model.save_checkpoint(out_dir / "best.ckpt",
                                          {"epoch": epoch,
                                           "val_iou": results["IoU"]})
            if (out_dir is not None
                    and (epoch + 1) % cfg.checkpoint_every == 0):
                model.save_checkpoint(out_dir / "last.ckpt", {"epoch": epoch})
        if out_dir is not None:
            model.save_checkpoint(out_dir / "final.ckpt",
                                  {"epoch": cfg.epochs - 1})
            if best_iou < 0:  # no validation ran; keep best = final
                model.save_checkpoint(out_dir / "best.ckpt",
                                      {"epoch": cfg.epochs - 1})
    finally:
        if log_fh:
            log_fh.close()
    return history
