"""Synthetic disc/cup images whose class label is a function of the mask.

Each sample is a textured background with two concentric elliptical plateaus
(disc and cup).  The label is 1 when the cup-to-disc diameter ratio exceeds
``ratio_threshold``.  Ratios are drawn from two bands separated by
``ratio_margin`` on either side of the threshold, so the label can be read
back from the rasterised mask without ambiguity.
"""
import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .pgm import read_pgm, write_pgm
from .rng import SplitMix

BACKGROUND, DISC, CUP = 0, 1, 2
MAX_REDRAWS = 100
SPLITS = ("train", "val", "test")
_SPLIT_STRIDE = 1_000_000
_NOISE_TAG = 0x6E6F697365
_SAMPLE_TAG = 0x73616D706C65
MASK_GRAY_STEP = 127


@dataclass(frozen=True)
class DataConfig:
    height: int = 64
    width: int = 64
    n_train: int = 512
    n_val: int = 128
    n_test: int = 128
    ratio_threshold: float = 0.6
    ratio_margin: float = 0.08
    ratio_min: float = 0.3
    ratio_max: float = 0.85
    disc_radius_min: float = 11.0
    disc_radius_max: float = 18.0
    aspect_jitter: float = 0.15
    background_level: tuple = (0.10, 0.30)
    disc_level: tuple = (0.45, 0.65)
    cup_contrast: tuple = (0.15, 0.30)
    edge_width: float = 1.0
    texture_amplitude: float = 0.04
    grain_sigma: float = 0.01
    master_seed: int = 0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.height % 8 or self.width % 8:
            raise ConfigurationError("image sizes must be positive multiples of 8")
        if not 0 < self.ratio_threshold < 1:
            raise ConfigurationError("ratio_threshold must lie in (0, 1)")
        lo = self.ratio_threshold - self.ratio_margin
        hi = self.ratio_threshold + self.ratio_margin
        if not (0 < self.ratio_min < lo and hi < self.ratio_max < 1):
            raise ConfigurationError("ratio bands must straddle the threshold inside (0, 1)")
        if not 0 < self.disc_radius_min <= self.disc_radius_max:
            raise ConfigurationError("invalid disc radius range")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigurationError("split sizes must be non-negative")
        if max(self.n_train, self.n_val, self.n_test) >= _SPLIT_STRIDE // 4:
            raise ConfigurationError("split too large for the seed layout")

    def split_sizes(self):
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}


@dataclass
class Sample:
    image: np.ndarray  # float32 (H, W) in [0, 1]
    mask: np.ndarray  # uint8 (H, W) in {0, 1, 2}
    label: int
    seed: int
    ratio: float = field(default=float("nan"))


def ratio_from_mask(mask):
    """Cup/disc diameter ratio of equal-area circles: sqrt(|cup| / |disc incl. cup|)."""
    mask = np.asarray(mask)
    disc = np.count_nonzero(mask >= DISC)
    if disc == 0:
        return 0.0
    return math.sqrt(np.count_nonzero(mask == CUP) / disc)


def label_from_mask(mask, ratio_threshold):
    return int(ratio_from_mask(mask) > ratio_threshold)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _draw_geometry(rng, cfg):
    label = int(rng.uniform() < 0.5)
    if label:
        ratio = rng.uniform(None, cfg.ratio_threshold + cfg.ratio_margin, cfg.ratio_max)
    else:
        ratio = rng.uniform(None, cfg.ratio_min, cfg.ratio_threshold - cfg.ratio_margin)
    radius = rng.uniform(None, cfg.disc_radius_min, cfg.disc_radius_max)
    aspect = rng.uniform(None, 1.0 - cfg.aspect_jitter, 1.0 + cfg.aspect_jitter)
    ry, rx = radius * math.sqrt(aspect), radius / math.sqrt(aspect)
    cy = rng.uniform(None, ry + 2.0, cfg.height - 3.0 - ry)
    cx = rng.uniform(None, rx + 2.0, cfg.width - 3.0 - rx)
    return label, ratio, (cy, cx, ry, rx)


def _render(rng, cfg, ratio, geom):
    cy, cx, ry, rx = geom
    yy, xx = np.indices((cfg.height, cfg.width), dtype=np.float64)
    rho = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    mask = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    mask[rho <= 1.0] = DISC
    mask[rho <= ratio] = CUP

    bg = rng.uniform(None, *cfg.background_level)
    disc = rng.uniform(None, *cfg.disc_level)
    cup = disc + rng.uniform(None, *cfg.cup_contrast)
    mean_r = math.sqrt(ry * rx)
    # signed distance to each boundary, in pixels (approximately)
    disc_w = _sigmoid((1.0 - rho) * mean_r / cfg.edge_width)
    cup_w = _sigmoid((ratio - rho) * mean_r / cfg.edge_width)
    image = bg + (disc - bg) * disc_w + (cup - disc) * cup_w

    texture = np.zeros_like(image)
    for _ in range(3):
        fy, fx = rng.uniform(2, 0.02, 0.15)
        phase = rng.uniform(None, 0.0, 2 * math.pi)
        texture += np.sin(2 * math.pi * (fy * yy + fx * xx) + phase)
    image += cfg.texture_amplitude / 3.0 * texture
    image += cfg.grain_sigma * rng.normal(image.size).reshape(image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


def generate_sample(seed, cfg=DataConfig()):
    """Deterministic sample for ``(seed, cfg)``.

    Draws that clip the image border, lose a class, or whose rasterised mask
    disagrees with the drawn label are redrawn from the same stream.
    """
    rng = SplitMix(_SAMPLE_TAG, seed)
    for _ in range(MAX_REDRAWS):
        label, ratio, geom = _draw_geometry(rng, cfg)
        cy, cx, ry, rx = geom
        if cy - ry < 1 or cx - rx < 1 or cy + ry > cfg.height - 2 or cx + rx > cfg.width - 2:
            continue
        image, mask = _render(rng, cfg, ratio, geom)
        counts = np.bincount(mask.ravel(), minlength=3)
        if (counts == 0).any():
            continue
        if label_from_mask(mask, cfg.ratio_threshold) != label:
            continue
        return Sample(image=image, mask=mask, label=label, seed=int(seed), ratio=ratio)
    raise ConfigurationError(f"seed {seed}: no valid geometry after {MAX_REDRAWS} draws")


def split_seed_base(cfg, split):
    return cfg.master_seed * 4 * _SPLIT_STRIDE + SPLITS.index(split) * _SPLIT_STRIDE


def _generate_split(cfg, split, n, workers):
    """Fill a split in seed order, skipping samples of an already-full class."""
    base = split_seed_base(cfg, split)
    cap = (n + 1) // 2
    counts = [0, 0]
    out = []
    next_seed = base
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(out) < n:
            chunk = range(next_seed, next_seed + max(n - len(out), 8))
            next_seed = chunk.stop
            if next_seed - base >= _SPLIT_STRIDE:
                raise ConfigurationError(f"{split}: exhausted seed range")
            if pool is None:
                candidates = (generate_sample(s, cfg) for s in chunk)
            else:
                candidates = pool.map(generate_sample, chunk, [cfg] * len(chunk))
            for sample in candidates:
                if len(out) == n:
                    break
                if counts[sample.label] >= cap:
                    continue
                counts[sample.label] += 1
                out.append(sample)
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def make_dataset(cfg=DataConfig(), workers=1):
    """Train/val/test lists drawn from disjoint seed ranges, class-balanced to within one."""
    sizes = cfg.split_sizes()
    return tuple(_generate_split(cfg, split, sizes[split], workers) for split in SPLITS)


def add_gaussian_noise(image, sigma, seed):
    """i.i.d. zero-mean Gaussian noise of std ``sigma`` on [0, 1] images, clamped."""
    if not sigma >= 0:
        raise InvalidInputError(f"sigma must be non-negative, got {sigma}")
    image = np.asarray(image)
    if sigma == 0:
        return image.copy()
    noise = SplitMix(_NOISE_TAG, seed).normal(image.size).reshape(image.shape)
    return np.clip(image + sigma * noise, 0.0, 1.0).astype(image.dtype)


def split_fingerprint(samples):
    """Short hash identifying a split by its seeds and labels."""
    h = hashlib.sha256()
    for s in samples:
        h.update(b"%d:%d;" % (s.seed, s.label))
    return h.hexdigest()[:16]


def export_dataset(splits, out_dir, cfg=None):
    """Write one directory per split: ``NNNNN.pgm`` images, ``NNNNN_mask.pgm``
    masks (class index times 127) and ``manifest.csv`` (filename, label, seed)."""
    os.makedirs(out_dir, exist_ok=True)
    for name, samples in zip(SPLITS, splits):
        split_dir = os.path.join(out_dir, name)
        os.makedirs(split_dir, exist_ok=True)
        with open(os.path.join(split_dir, "manifest.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "label", "seed"])
            for i, s in enumerate(samples):
                stem = f"{i:05d}"
                write_pgm(os.path.join(split_dir, stem + ".pgm"), np.round(s.image * 255).astype(np.uint8))
                write_pgm(os.path.join(split_dir, stem + "_mask.pgm"), s.mask * MASK_GRAY_STEP)
                writer.writerow([stem + ".pgm", s.label, s.seed])
    if cfg is not None:
        from .config import dump_config

        with open(os.path.join(out_dir, "data_config.txt"), "w", encoding="utf-8") as fh:
            fh.write(dump_config(asdict(cfg), prefix="data."))


def import_dataset(out_dir):
    """Inverse of :func:`export_dataset`; images come back quantised to 1/255."""
    splits = []
    for name in SPLITS:
        split_dir = os.path.join(out_dir, name)
        samples = []
        with open(os.path.join(split_dir, "manifest.csv"), newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                stem = os.path.splitext(row["filename"])[0]
                image = read_pgm(os.path.join(split_dir, row["filename"])).astype(np.float32) / 255
                mask = read_pgm(os.path.join(split_dir, stem + "_mask.pgm")) // MASK_GRAY_STEP
                samples.append(Sample(image, mask.astype(np.uint8), int(row["label"]), int(row["seed"])))
        splits.append(samples)
    return tuple(splits)
