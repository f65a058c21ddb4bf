"""Dataset ingestion, preprocessing, augmentation, synthetic scenes.

Directory layout (the public IRSTD convention):

    <root>/images/<id>.png     8-bit grayscale
    <root>/masks/<id>.png      8-bit, binarized at >127 on load
    <root>/img_idx/train_<name>.txt, test_<name>.txt   one id per line

Training normalization is fixed: scale to [0, 1], then (x - 0.5) / 0.5.
Augmentation uses only lossless transforms (flips, 90-degree rotations)
so masks never need interpolation.  Evaluation inputs are reflect-padded
on the right/bottom to the next multiple of 16 and cropped back before
any metric is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, DataError

MASK_BINARIZE_LEVEL = 127  # 8-bit mask pixel counts as target iff value > 127


@dataclass
class Sample:
    id: str
    image: np.ndarray  # float in [0, 1], (h, w)
    mask: np.ndarray   # uint8 in {0, 1}, (h, w)

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise DataError(f"sample {self.id}: image {self.image.shape} and "
                            f"mask {self.mask.shape} extents differ")


def _read_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def load_dataset(root, split_file) -> list[Sample]:
    """Load samples listed in ``split_file`` (id per line), in order."""
    root = Path(root)
    split_path = Path(split_file)
    if not split_path.is_absolute() and not split_path.exists():
        split_path = root / "img_idx" / split_file
    if not split_path.exists():
        raise DataError(f"split file not found: {split_file}")
    ids = [line.strip() for line in split_path.read_text().splitlines()
           if line.strip()]
    samples = []
    for sid in ids:
        img_path = root / "images" / f"{sid}.png"
        mask_path = root / "masks" / f"{sid}.png"
        if not img_path.exists():
            raise DataError(f"missing image for id {sid!r}: {img_path}")
        if not mask_path.exists():
            raise DataError(f"missing mask for id {sid!r}: {mask_path}")
        image = _read_gray(img_path).astype(np.float32) / 255.0
        mask = (_read_gray(mask_path) > MASK_BINARIZE_LEVEL).astype(np.uint8)
        samples.append(Sample(sid, image, mask))
    return samples


def save_sample(sample: Sample, root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    img = np.round(np.clip(sample.image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(root / "images" / f"{sample.id}.png")
    Image.fromarray((sample.mask * 255).astype(np.uint8), mode="L").save(
        root / "masks" / f"{sample.id}.png")


def save_dataset(samples: list[Sample], root, name: str,
                 train_fraction: float = 0.5) -> tuple[Path, Path]:
    """Write samples plus train/test split files; returns the split paths."""
    root = Path(root)
    for s in samples:
        save_sample(s, root)
    idx_dir = root / "img_idx"
    idx_dir.mkdir(parents=True, exist_ok=True)
    n_train = max(1, int(round(len(samples) * train_fraction))) \
        if len(samples) > 1 else 1
    train_path = idx_dir / f"train_{name}.txt"
    test_path = idx_dir / f"test_{name}.txt"
    train_path.write_text("".join(s.id + "\n" for s in samples[:n_train]))
    test_ids = samples[n_train:] if len(samples) > n_train else samples
    test_path.write_text("".join(s.id + "\n" for s in test_ids))
    return train_path, test_path


# -- preprocessing -----------------------------------------------------------


def normalize_image(image: np.ndarray) -> np.ndarray:
    """[0,1] grayscale -> zero-centered: (x - 0.5) / 0.5."""
    return ((image.astype(np.float32) - 0.5) / 0.5)


def prepare_train(sample: Sample, crop: int,
                  rng: np.random.Generator,
                  augment: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Normalize, random-crop to crop x crop, and augment (flips + k*90
    rotation), applying the identical transform to image and mask."""
    img = normalize_image(sample.image)
    mask = sample.mask.astype(np.float32)
    h, w = img.shape
    if h < crop or w < crop:
        py, px = max(0, crop - h), max(0, crop - w)
        img = np.pad(img, ((0, py), (0, px)), mode="reflect")
        mask = np.pad(mask, ((0, py), (0, px)), mode="reflect")
        h, w = img.shape
    y0 = int(rng.integers(0, h - crop + 1))
    x0 = int(rng.integers(0, w - crop + 1))
    img = img[y0:y0 + crop, x0:x0 + crop]
    mask = mask[y0:y0 + crop, x0:x0 + crop]
    if augment:
        if rng.integers(0, 2):
            img, mask = img[:, ::-1], mask[:, ::-1]
        if rng.integers(0, 2):
            img, mask = img[::-1, :], mask[::-1, :]
        k = int(rng.integers(0, 4))
        if k:
            img, mask = np.rot90(img, k), np.rot90(mask, k)
    return np.ascontiguousarray(img), np.ascontiguousarray(mask)


def pad_to_multiple(image: np.ndarray, multiple: int = 16
                    ) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad right/bottom to the next multiple; returns the padded
    image and the original extents for crop-back."""
    h, w = image.shape
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    return np.pad(image, ((0, ph), (0, pw)), mode="reflect"), (h, w)


def prepare_eval(sample: Sample) -> tuple[np.ndarray, tuple[int, int]]:
    """Normalized, padded (1, 1, H', W') tensor plus the crop-back record."""
    padded, orig = pad_to_multiple(normalize_image(sample.image))
    return padded[None, None], orig


def crop_back(saliency: np.ndarray, orig: tuple[int, int]) -> np.ndarray:
    """Undo prepare_eval padding on a (..., H', W') map."""
    h, w = orig
    return saliency[..., :h, :w]


# -- synthetic scenes --------------------------------------------------------


@dataclass
class SynthSpec:
    height: int = 64
    width: int = 64
    count: int = 8
    targets: tuple[int, int] = (1, 3)       # inclusive range per image
    sigma: tuple[float, float] = (0.5, 3.0)  # Gaussian radius (pixels)
    amplitude: tuple[float, float] = (0.6, 1.0)
    clutter: float = 0.25                    # background structure strength
    noise: float = 0.02                      # pixel noise strength
    seed: int = 0

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ConfigurationError("synthetic scenes must be at least 16x16")
        if self.targets[0] < 0 or self.targets[1] < self.targets[0]:
            raise ConfigurationError(f"bad target count range {self.targets}")
        if self.sigma[0] <= 0 or self.sigma[1] < self.sigma[0]:
            raise ConfigurationError(f"bad sigma range {self.sigma}")


def _half_max_radius(sigma: float) -> float:
    return sigma * math.sqrt(2.0 * math.log(2.0))


def synth_generate(spec: SynthSpec) -> list[Sample]:
    """Seeded synthetic IR scenes: smoothed-noise background plus small
    Gaussian targets at integer pixel centers, placed non-overlapping.
    The mask marks pixels where a target term exceeds half its peak."""
    rng = np.random.default_rng(spec.seed)
    samples = []
    for n in range(spec.count):
        h, w = spec.height, spec.width
        bg = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=6.0)
        span = bg.max() - bg.min()
        if span > 0:
            bg = (bg - bg.min()) / span
        image = 0.15 + spec.clutter * bg + spec.noise * rng.standard_normal((h, w))
        mask = np.zeros((h, w), dtype=np.uint8)
        n_targets = int(rng.integers(spec.targets[0], spec.targets[1] + 1))
        centers: list[tuple[int, int, float]] = []
        for _ in range(n_targets):
            sigma = float(rng.uniform(*spec.sigma))
            amp = float(rng.uniform(*spec.amplitude))
            margin = int(math.ceil(3 * sigma)) + 1
            placed = False
            for _ in range(200):
                cy = int(rng.integers(margin, h - margin))
                cx = int(rng.integers(margin, w - margin))
                if all(math.hypot(cy - py, cx - px)
                       > 2.0 * (_half_max_radius(sigma) + _half_max_radius(ps)) + 2.0
                       for py, px, ps in centers):
                    placed = True
                    break
            if not placed:
                raise DataError(
                    f"could not place {n_targets} non-overlapping targets in "
                    f"{h}x{w} after bounded retries; reduce the count or sigma")
            centers.append((cy, cx, sigma))
            yy, xx = np.mgrid[0:h, 0:w]
            d2 = (yy - cy) ** 2 + (xx - cx) ** 2
            term = amp * np.exp(-d2 / (2.0 * sigma * sigma))
            image += term
            mask |= (term > amp / 2.0).astype(np.uint8)
        image = np.clip(image, 0.0, 1.0).astype(np.float32)
        # keep pixel values on the 8-bit grid so save/load roundtrips exactly
        image = np.round(image * 255.0).astype(np.float32) / 255.0
        samples.append(Sample(f"synth_{spec.seed:04d}_{n:04d}", image, mask))
    return samples
