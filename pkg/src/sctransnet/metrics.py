"""IRSTD evaluation protocol.

Pixel metrics: IoU (dataset-aggregated), nIoU (mean of per-sample IoU),
F-measure from dataset precision/recall.  Target metrics: Pd and Fa via
8-connected components and greedy centroid matching with a strict
3-pixel Euclidean gate.  ROC curves sweep the 256-level threshold grid
{k/255} and are summarized by the truncated, cutoff-normalized AUC.

The accumulator is a value type: per-image results are accumulated
independently and merged associatively, so sharded evaluation reproduces
the single-pass numbers exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError

log = logging.getLogger(__name__)

CENTROID_GATE = 3.0  # strict: distance must be < 3 pixels
ROC_THRESHOLDS = np.arange(256) / 255.0

_STRUCT_8 = np.ones((3, 3), dtype=int)
_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


def binarize(saliency: np.ndarray, threshold: float) -> np.ndarray:
    """Pixel = 1 iff value > threshold (strictly)."""
    return (np.asarray(saliency) > threshold).astype(np.uint8)


@dataclass
class TargetComponent:
    coords: np.ndarray          # (n, 2) int pixel coordinates (y, x)
    centroid: tuple[float, float]
    count: int

    @classmethod
    def from_coords(cls, coords: np.ndarray) -> "TargetComponent":
        c = coords.astype(np.float64)
        return cls(coords=coords, centroid=(float(c[:, 0].mean()),
                                            float(c[:, 1].mean())),
                   count=len(coords))


def connected_components(mask: np.ndarray,
                         connectivity: int = 8) -> list[TargetComponent]:
    """Label a binary mask; centroids are plain coordinate means."""
    if connectivity not in (4, 8):
        raise ConfigurationError("connectivity must be 4 or 8")
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    labels, n = ndimage.label(np.asarray(mask) > 0, structure=structure)
    comps = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = np.nonzero(labels[sl] == idx)
        coords = np.stack([ys + sl[0].start, xs + sl[1].start], axis=1)
        comps.append(TargetComponent.from_coords(coords))
    return comps


def match_targets(pred: list[TargetComponent], gt: list[TargetComponent],
                  gate: float = CENTROID_GATE) -> tuple[int, int]:
    """Greedy distance-ordered one-to-one matching.

    Returns (number of detected gt targets, false pixel count from
    unmatched predicted components).
    """
    gate2 = gate * gate
    pairs = []
    for gi, g in enumerate(gt):
        for pi, p in enumerate(pred):
            dy = g.centroid[0] - p.centroid[0]
            dx = g.centroid[1] - p.centroid[1]
            d2 = dy * dy + dx * dx
            if d2 < gate2:  # strict: deviation must be below the gate
                pairs.append((d2, gi, pi))
    pairs.sort()
    used_g: set[int] = set()
    used_p: set[int] = set()
    for d2, gi, pi in pairs:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
    false_px = sum(p.count for pi, p in enumerate(pred) if pi not in used_p)
    return len(used_g), false_px


def _safe_div(num: float, den: float, what: str) -> float:
    if den == 0:
        log.warning("%s undefined (zero denominator); reporting 0", what)
        return 0.0
    return num / den


@dataclass
class EvalAccumulator:
    """Mergeable running state for all metrics of one evaluation run."""

    threshold: float = 0.5
    connectivity: int = 8
    include_roc: bool = True
    tp: int = 0
    t: int = 0
    p: int = 0
    sample_iou: list = field(default_factory=list)
    n_detected: int = 0
    n_targets: int = 0
    n_false_px: int = 0
    n_px: int = 0
    # per ROC threshold: detected, targets, false pixels, pixels
    roc_counts: np.ndarray = field(
        default_factory=lambda: np.zeros((len(ROC_THRESHOLDS), 4), dtype=np.int64))

    def add_sample(self, saliency: np.ndarray, gt_mask: np.ndarray) -> None:
        saliency = np.asarray(saliency)
        gt = (np.asarray(gt_mask) > 0).astype(np.uint8)
        if saliency.shape != gt.shape:
            raise ConfigurationError(
                f"saliency {saliency.shape} and mask {gt.shape} shapes differ")
        pred = binarize(saliency, self.threshold)
        tp = int(np.sum((pred == 1) & (gt == 1)))
        t = int(gt.sum())
        p = int(pred.sum())
        self.tp += tp
        self.t += t
        self.p += p
        union = t + p - tp
        self.sample_iou.append(tp / union if union else 0.0)

        gt_comps = connected_components(gt, self.connectivity)
        pred_comps = connected_components(pred, self.connectivity)
        detected, false_px = match_targets(pred_comps, gt_comps)
        self.n_detected += detected
        self.n_targets += len(gt_comps)
        self.n_false_px += false_px
        self.n_px += gt.size

        if self.include_roc:
            for k, thr in enumerate(ROC_THRESHOLDS):
                pc = connected_components(binarize(saliency, thr),
                                          self.connectivity)
                det_k, false_k = match_targets(pc, gt_comps)
                self.roc_counts[k] += (det_k, len(gt_comps), false_k, gt.size)

    def merge(self, other: "EvalAccumulator") -> "EvalAccumulator":
        if (self.threshold != other.threshold
                or self.connectivity != other.connectivity
                or self.include_roc != other.include_roc):
            raise ConfigurationError("cannot merge accumulators with "
                                     "different settings")
        out = EvalAccumulator(self.threshold, self.connectivity,
                              self.include_roc)
        out.tp = self.tp + other.tp
        out.t = self.t + other.t
        out.p = self.p + other.p
        out.sample_iou = self.sample_iou + other.sample_iou
        out.n_detected = self.n_detected + other.n_detected
        out.n_targets = self.n_targets + other.n_targets
        out.n_false_px = self.n_false_px + other.n_false_px
        out.n_px = self.n_px + other.n_px
        out.roc_counts = self.roc_counts + other.roc_counts
        return out

    # -- results ---------------------------------------------------------

    def pixel_metrics(self) -> dict[str, float]:
        if not self.sample_iou:
            raise ConfigurationError("no samples accumulated")
        iou = _safe_div(self.tp, self.t + self.p - self.tp, "IoU")
        niou = math.fsum(self.sample_iou) / len(self.sample_iou)
        prec = _safe_div(self.tp, self.p, "precision")
        rec = _safe_div(self.tp, self.t, "recall")
        f = _safe_div(2 * prec * rec, prec + rec, "F-measure")
        return {"IoU": iou, "nIoU": niou, "F": f, "Prec": prec, "Rec": rec}

    def target_metrics(self) -> dict[str, float]:
        pd = _safe_div(self.n_detected, self.n_targets, "Pd")
        fa = _safe_div(self.n_false_px, self.n_px, "Fa")
        return {"Pd": pd, "Fa": fa}

    def roc_points(self) -> list[tuple[float, float]]:
        """One (Fa, Pd) point per threshold, sorted by Fa."""
        if not self.include_roc:
            raise ConfigurationError("ROC accumulation was disabled")
        pts = []
        for det, tgt, false_px, px in self.roc_counts:
            pd = float(det) / float(tgt) if tgt else 0.0
            fa = float(false_px) / float(px) if px else 0.0
            pts.append((fa, pd))
        return sorted(pts)

    def results(self) -> dict[str, float]:
        out = self.pixel_metrics()
        out.update(self.target_metrics())
        if self.include_roc:
            pts = self.roc_points()
            out["AUC_fa0.5e-6"] = auc_truncated(pts, 0.5e-6)
            out["AUC_fa1e-6"] = auc_truncated(pts, 1e-6)
        return out


def auc_truncated(points: list[tuple[float, float]], fa_cutoff: float) -> float:
    """Trapezoid area under the (Fa, Pd) curve on [0, cutoff], divided by
    the cutoff so a perfect detector scores 1.

    The curve is the piecewise-linear interpolation of the sorted points,
    anchored at (0, 0) when no zero-Fa point exists and held constant past
    the last point; the final segment is linearly cut at the cutoff.
    """
    if fa_cutoff <= 0:
        raise ConfigurationError("Fa cutoff must be positive")
    pts = sorted(points)
    if not pts:
        return 0.0
    if pts[0][0] > 0:
        pts = [(0.0, 0.0)] + pts
    if pts[-1][0] < fa_cutoff:
        pts = pts + [(fa_cutoff, pts[-1][1])]
    area = 0.0
    for (f0, p0), (f1, p1) in zip(pts[:-1], pts[1:]):
        if f0 >= fa_cutoff:
            break
        if f1 > fa_cutoff:
            p1 = p0 + (p1 - p0) * (fa_cutoff - f0) / (f1 - f0)
            f1 = fa_cutoff
        area += 0.5 * (p0 + p1) * (f1 - f0)
    return float(area / fa_cutoff)


# -- report emission --------------------------------------------------------

METRIC_ORDER = ["IoU", "nIoU", "F", "Prec", "Rec", "Pd", "Fa",
                "AUC_fa0.5e-6", "AUC_fa1e-6"]


def format_table(results: dict[str, float]) -> str:
    lines = [f"{'metric':<14}{'value':>14}"]
    for name in METRIC_ORDER:
        if name in results:
            lines.append(f"{name:<14}{results[name]:>14.6f}")
    return "\n".join(lines)


def write_metrics_file(results: dict[str, float], path) -> None:
    with open(path, "w") as fh:
        for name in METRIC_ORDER:
            if name in results:
                fh.write(f"{name} {results[name]!r}\n")


def read_metrics_file(path) -> dict[str, float]:
    out = {}
    with open(path) as fh:
        for line in fh:
            name, value = line.split()
            out[name] = float(value)
    return out


def write_roc_file(points: list[tuple[float, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("# Fa Pd\n")
        for fa, pd in points:
            fh.write(f"{fa!r} {pd!r}\n")
