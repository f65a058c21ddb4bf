"""Evaluation drivers: run a model (or externally supplied prediction
maps) over a dataset and accumulate the full metric protocol.

Evaluation happens at original image extents: inputs are padded to the
network's 16-pixel granularity and the saliency maps are cropped back
before touching the accumulator.  Sharded evaluation splits the sample
list contiguously and merges the per-shard accumulators in order, which
reproduces single-pass results exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image

from .data import Sample, crop_back, prepare_eval
from .errors import DataError
from .metrics import EvalAccumulator
from .model.network import SCTransNet


def saliency_for_sample(model: SCTransNet, sample: Sample) -> np.ndarray:
    x, orig = prepare_eval(sample)
    out = model.predict(x.astype(model.cfg.np_dtype))
    return crop_back(out[0, 0], orig)


def evaluate_samples(saliency_fn: Callable[[Sample], np.ndarray],
                     samples: list[Sample], threshold: float = 0.5,
                     include_roc: bool = True,
                     connectivity: int = 8) -> EvalAccumulator:
    acc = EvalAccumulator(threshold=threshold, include_roc=include_roc,
                          connectivity=connectivity)
    for sample in samples:
        acc.add_sample(saliency_fn(sample), sample.mask)
    return acc


def evaluate_model(model: SCTransNet, samples: list[Sample],
                   threshold: float = 0.5, include_roc: bool = True,
                   shards: int = 1) -> tuple[dict, EvalAccumulator]:
    """Evaluate a model; ``shards`` > 1 exercises the merge path (results
    are identical to a single pass by construction)."""
    fn = lambda s: saliency_for_sample(model, s)
    if shards <= 1:
        acc = evaluate_samples(fn, samples, threshold, include_roc)
    else:
        bounds = np.linspace(0, len(samples), shards + 1).astype(int)
        acc = None
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            part = evaluate_samples(fn, samples[lo:hi], threshold, include_roc)
            acc = part if acc is None else acc.merge(part)
    return acc.results(), acc


def evaluate_pred_dir(pred_dir, samples: list[Sample], threshold: float = 0.5,
                      include_roc: bool = True) -> tuple[dict, EvalAccumulator]:
    """Evaluate externally produced saliency maps (<pred_dir>/<id>.png,
    8-bit, interpreted as value/255)."""
    pred_dir = Path(pred_dir)

    def fn(sample: Sample) -> np.ndarray:
        path = pred_dir / f"{sample.id}.png"
        if not path.exists():
            raise DataError(f"missing prediction for id {sample.id!r}: {path}")
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        if arr.shape != sample.mask.shape:
            raise DataError(
                f"prediction {path} has extents {arr.shape}, expected "
                f"{sample.mask.shape}")
        return arr

    acc = evaluate_samples(fn, samples, threshold, include_roc)
    return acc.results(), acc
