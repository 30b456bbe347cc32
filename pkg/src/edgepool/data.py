"""Labeled image sets: synthetic shapes, directory loading and writing."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor import ShapeError

__all__ = ["ImageSet", "SHAPE_KINDS", "synth_dataset", "load_image_dir", "write_image_dir", "IMAGE_SUFFIXES"]

SHAPE_KINDS = {
    "shapes2": ("circle", "square"),
    "shapes4": ("circle", "cross", "square", "triangle"),  # sorted: labels survive a directory round trip
}
IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class ImageSet:
    """Images (N, 3, H, W) with values in [0, 1] and integer labels."""

    images: np.ndarray
    labels: np.ndarray
    classes: tuple[str, ...]
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N, C, H, W), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def subset(self, idx) -> "ImageSet":
        idx = np.asarray(idx)
        return ImageSet(self.images[idx], self.labels[idx], self.classes)

    def split(self, n_first: int) -> tuple["ImageSet", "ImageSet"]:
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, len(self)))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.classes))


def _mask(kind: str, yy: np.ndarray, xx: np.ndarray, cy: float, cx: float, r: float) -> np.ndarray:
    dy, dx = yy - cy, xx - cx
    if kind == "circle":
        return dy * dy + dx * dx <= r * r
    if kind == "square":
        h = r * 0.85  # roughly the circle's area
        return (np.abs(dy) <= h) & (np.abs(dx) <= h)
    if kind == "triangle":
        # apex up, base at cy + r/2
        return (dy <= r / 2) & (dy >= -r) & (np.abs(dx) <= (dy + r) / np.sqrt(3))
    if kind == "cross":
        arm = r / 3
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | ((np.abs(dy) <= arm) & (np.abs(dx) <= r))
    raise ValueError(f"unknown shape {kind!r}")


def synth_dataset(kind: str = "shapes2", n: int = 200, size: int = 32, seed: int = 0) -> ImageSet:
    """Filled shapes at random position and scale on a flat background.

    Classes are exactly balanced.  Foreground and background gray levels are
    drawn per image so brightness alone does not identify the class.
    """
    if kind not in SHAPE_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {sorted(SHAPE_KINDS)}")
    if size < 16:
        raise ValueError(f"image size must be >= 16, got {size}")
    classes = SHAPE_KINDS[kind]
    k = len(classes)
    if n <= 0 or n % k:
        raise ValueError(f"n must be a positive multiple of {k} for {kind}, got {n}")

    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % k)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i, label in enumerate(labels):
        r = rng.uniform(0.15, 0.3) * size
        cy, cx = rng.uniform(r + 1, size - 1 - r, size=2)
        bg = rng.uniform(0.0, 0.35)
        fg = rng.uniform(0.65, 1.0)
        img = np.where(_mask(classes[label], yy, xx, cy, cx, r), fg, bg)
        images[i] = img[None]
    return ImageSet(images, labels.astype(np.int64), classes)


def _decode(path: Path, resize: int | None, crop: int | None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if resize is not None:
            # shorter side to `resize`, aspect kept
            w, h = im.size
            s = resize / min(w, h)
            im = im.resize((max(1, round(w * s)), max(1, round(h * s))), Image.BILINEAR)
        if crop is not None:
            w, h = im.size
            if crop > min(w, h):
                raise ShapeError(f"{path}: center crop {crop} larger than image {w}x{h}")
            left, top = (w - crop) // 2, (h - crop) // 2
            im = im.crop((left, top, left + crop, top + crop))
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def load_image_dir(root, resize: int | None = None, crop: int | None = None) -> ImageSet:
    """Read ``root/<class_name>/*.png|ppm``.

    Labels follow sorted class-directory names and files are read in sorted
    path order.  Files that fail to decode are skipped and listed in
    ``skipped``.  All decoded images must share one size (after resize/crop).
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    classes = tuple(sorted(d.name for d in root.iterdir() if d.is_dir()))
    if not classes:
        raise ValueError(f"{root}: no class subdirectories")

    images, labels, skipped = [], [], []
    for label, name in enumerate(classes):
        files = sorted(p for p in (root / name).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        count = 0
        for path in files:
            try:
                arr = _decode(path, resize, crop)
            except (OSError, ValueError, SyntaxError):
                skipped.append(str(path))
                continue
            if images and arr.shape != images[0].shape:
                raise ShapeError(f"{path}: size {arr.shape[1:]} differs from {images[0].shape[1:]}; "
                                 "set a resize/crop")
            images.append(arr)
            labels.append(label)
            count += 1
        if count == 0:
            raise ValueError(f"{root / name}: class {name!r} has no readable images")
    return ImageSet(np.stack(images), np.array(labels, dtype=np.int64), classes, skipped)


def write_image_dir(data: ImageSet, root) -> Path:
    """Write ``data`` as 8-bit PNGs in the layout :func:`load_image_dir` reads."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise PermissionError(f"{root} is not writable")
    for name in data.classes:
        (root / name).mkdir(exist_ok=True)
    pixels = np.clip(np.rint(data.images * 255), 0, 255).astype(np.uint8)
    for i, (img, label) in enumerate(zip(pixels, data.labels)):
        Image.fromarray(img.transpose(1, 2, 0)).save(root / data.classes[label] / f"{i:05d}.png")
    return root
