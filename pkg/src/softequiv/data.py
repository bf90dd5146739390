"""Dataset handling: IDX files, the rotated-digit toy task, synthetic glyphs.

The toy binary task takes images of a rotation-asymmetric glyph (the digit 6,
or a rendered stand-in), rotates half of them by 180 degrees, and asks which
ones were rotated.  The 180-degree rotation is an exact array reversal, never
an interpolation, so a strictly rotation-invariant classifier provably cannot
beat chance on it.  The synthetic glyphs keep the whole suite runnable with
no downloads; real MNIST IDX files plug in through the same interface.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    """Base class for dataset loading problems."""


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class CountMismatchError(DataError):
    pass


@dataclass(eq=False)
class LabeledImageSet:
    images: np.ndarray  # (n, H, W) grayscale in [0, 1]
    labels: np.ndarray  # (n,) integer classes
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels)
        if self.images.ndim != 3:
            raise DataError("images must be (n, H, W)")
        if len(self.labels) != len(self.images):
            raise CountMismatchError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise DataError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, idx: np.ndarray, split: str | None = None) -> "LabeledImageSet":
        return LabeledImageSet(self.images[idx], self.labels[idx], split or self.split)


def _read_header(f, path):
    head = f.read(8)
    if len(head) < 8:
        raise IdxTruncatedError(f"{path}: file shorter than the IDX header")
    magic, count = struct.unpack(">ii", head)
    return magic, count


def load_idx_images(path) -> np.ndarray:
    """Raw uint8 images from an IDX file (big-endian, magic 0x803)."""
    with open(path, "rb") as f:
        magic, count = _read_header(f, path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(f"{path}: magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")
        dims = f.read(8)
        if len(dims) < 8:
            raise IdxTruncatedError(f"{path}: missing image dimensions")
        rows, cols = struct.unpack(">ii", dims)
        payload = f.read()
    if len(payload) < count * rows * cols:
        raise IdxTruncatedError(
            f"{path}: payload holds {len(payload)} bytes, need {count * rows * cols}"
        )
    return np.frombuffer(payload, dtype=np.uint8, count=count * rows * cols).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, count = _read_header(f, path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(f"{path}: magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}")
        payload = f.read()
    if len(payload) < count:
        raise IdxTruncatedError(f"{path}: payload holds {len(payload)} labels, need {count}")
    return np.frombuffer(payload, dtype=np.uint8, count=count).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx_pair(images_path, labels_path, split: str = "train") -> LabeledImageSet:
    """Image/label IDX pair as a labeled set with pixels scaled to [0, 1]."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    return LabeledImageSet(images.astype(np.float64) / 255.0, labels.astype(np.int64), split)


def rotate180(images: np.ndarray) -> np.ndarray:
    """Exact 180-degree rotation: index reversal on both pixel axes."""
    return images[..., ::-1, ::-1]


def _apply_rotation_protocol(images: np.ndarray, rng: np.random.Generator, split: str) -> LabeledImageSet:
    coins = rng.integers(0, 2, size=len(images))
    out = np.where(coins[:, None, None] == 1, rotate180(images), images)
    return LabeledImageSet(out, coins.astype(np.int64), split)


def build_mnist6_180(source: LabeledImageSet, seed: int = 0, split: str | None = None) -> LabeledImageSet:
    """Keep the 6s, rotate a fair-coin half by 180 degrees, label rotated as 1."""
    sixes = source.images[source.labels == 6]
    if len(sixes) == 0:
        raise DataError("source set contains no images labeled 6")
    rng = np.random.default_rng(seed)
    return _apply_rotation_protocol(np.ascontiguousarray(sixes), rng, split or source.split)


# glyph geometry jitter ranges, in pixels on the 28x28 canvas
_LOOP_CENTER = ((12.0, 16.0), (15.5, 19.5))
_LOOP_RADIUS = (3.6, 5.2)
_STROKE = (1.1, 1.7)
_STEM_TILT = (0.25, 0.75)  # radians away from vertical, leaning right
_STEM_LEN = (9.0, 13.0)
_MIN_ASYMMETRY = 0.5


def _render_glyph(rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """One 6-like glyph: a loop with a stem rising to the upper right."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    cx = rng.uniform(*_LOOP_CENTER[0])
    cy = rng.uniform(*_LOOP_CENTER[1])
    r = rng.uniform(*_LOOP_RADIUS)
    w = rng.uniform(*_STROKE)
    ring_d = np.abs(np.hypot(xs - cx, ys - cy) - r)
    ring = np.clip((w - ring_d) / 0.8 + 1.0, 0.0, 1.0)

    tilt = rng.uniform(*_STEM_TILT)
    length = rng.uniform(*_STEM_LEN)
    bend = rng.uniform(-0.12, 0.04)
    t = np.linspace(0.0, 1.0, 24)
    sx = cx + r * 0.85 + np.sin(tilt) * length * t + bend * length * t * t
    sy = cy - r * 0.35 - np.cos(tilt) * length * t
    stem_d = np.min(np.hypot(xs[..., None] - sx, ys[..., None] - sy), axis=-1)
    stem = np.clip((w - stem_d) / 0.8 + 1.0, 0.0, 1.0)

    glyph = np.maximum(ring, stem) * rng.uniform(0.75, 1.0)
    return np.clip(glyph, 0.0, 1.0)


def synth_glyph_set(n: int, seed: int = 0, split: str = "train", size: int = 28) -> LabeledImageSet:
    """Rotation-asymmetric synthetic glyphs under the 180-degree labeling protocol.

    Every rendered glyph is guaranteed to differ from its own 180-degree
    rotation by more than an L2 distance of 0.5, measured at generation time,
    so the task is information-theoretically solvable without symmetry
    constraints.
    """
    if n < 2:
        raise DataError("need at least two glyphs")
    rng = np.random.default_rng(seed)
    glyphs = np.empty((n, size, size))
    for i in range(n):
        for _ in range(100):
            g = _render_glyph(rng, size)
            if np.linalg.norm(g - rotate180(g)) > _MIN_ASYMMETRY:
                glyphs[i] = g
                break
        else:
            raise DataError("could not render an asymmetric glyph")
    return _apply_rotation_protocol(glyphs, rng, split)


def split_set(dataset: LabeledImageSet, sizes: dict[str, int], seed: int = 0) -> dict[str, LabeledImageSet]:
    """Disjoint seed-deterministic splits of the given sizes."""
    total = sum(sizes.values())
    if total > len(dataset):
        raise DataError(f"requested {total} items from a set of {len(dataset)}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    out = {}
    start = 0
    for name, count in sizes.items():
        out[name] = dataset.subset(order[start : start + count], split=name)
        start += count
    return out


def downsample(images: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsampling; commutes with 180-degree rotation exactly."""
    if factor == 1:
        return images
    n, H, W = images.shape
    if H % factor or W % factor:
        raise DataError(f"image size {H}x{W} not divisible by {factor}")
    return images.reshape(n, H // factor, factor, W // factor, factor).mean(axis=(2, 4))


def save_cache(dataset: LabeledImageSet, directory) -> None:
    """Raw little-endian arrays plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "split": dataset.split,
        "images": {"shape": list(dataset.images.shape), "dtype": dataset.images.dtype.name},
        "labels": {"shape": list(dataset.labels.shape), "dtype": dataset.labels.dtype.name},
    }
    dataset.images.astype(dataset.images.dtype.newbyteorder("<")).tofile(os.path.join(directory, "images.bin"))
    dataset.labels.astype(dataset.labels.dtype.newbyteorder("<")).tofile(os.path.join(directory, "labels.bin"))
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)


def load_cache(directory) -> LabeledImageSet:
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)

    def read(name, meta):
        dtype = np.dtype(meta["dtype"]).newbyteorder("<")
        arr = np.fromfile(os.path.join(directory, name), dtype=dtype)
        return arr.reshape(meta["shape"]).astype(meta["dtype"])

    return LabeledImageSet(read("images.bin", manifest["images"]), read("labels.bin", manifest["labels"]), manifest["split"])
