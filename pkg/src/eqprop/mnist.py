"""IDX container reading/writing and dataset plumbing.

IDX layout (big endian):
    images: i32 magic 2051 | i32 count | i32 rows | i32 cols | u8 pixels row-wise
    labels: i32 magic 2049 | i32 count | u8 labels

Gzip-compressed files are detected by their two magic bytes and decompressed
transparently. Pixels are scaled to [0, 1] so the clamped inputs live in the
active range of the firing rate.
"""

from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, FormatError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
GZIP_MAGIC = b"\x1f\x8b"


def _open_maybe_gzip(source):
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    if data[:2] == GZIP_MAGIC:
        data = gzip.decompress(data)
    return io.BytesIO(data)


def _read_be32(buf, what):
    raw = buf.read(4)
    if len(raw) != 4:
        raise FormatError(f"truncated IDX file while reading {what}")
    return struct.unpack(">i", raw)[0]


def load_idx_images(source):
    """Read an IDX image file into a uint8 array of shape (count, rows, cols)."""
    buf = _open_maybe_gzip(source)
    magic = _read_be32(buf, "magic")
    if magic != IMAGE_MAGIC:
        raise FormatError(f"bad image magic: expected {IMAGE_MAGIC}, got {magic}")
    count = _read_be32(buf, "count")
    rows = _read_be32(buf, "rows")
    cols = _read_be32(buf, "cols")
    payload = buf.read()
    expected = count * rows * cols
    if len(payload) < expected:
        raise FormatError(f"truncated image payload: expected {expected} bytes, got {len(payload)}")
    return np.frombuffer(payload[:expected], dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(source):
    """Read an IDX label file into a uint8 vector; labels must be digits 0-9."""
    buf = _open_maybe_gzip(source)
    magic = _read_be32(buf, "magic")
    if magic != LABEL_MAGIC:
        raise FormatError(f"bad label magic: expected {LABEL_MAGIC}, got {magic}")
    count = _read_be32(buf, "count")
    payload = buf.read()
    if len(payload) < count:
        raise FormatError(f"truncated label payload: expected {count} bytes, got {len(payload)}")
    labels = np.frombuffer(payload[:count], dtype=np.uint8)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise DataError(f"label {int(labels[bad[0]])} at index {int(bad[0])} is out of range 0-9")
    return labels


def write_idx_images(path, images):
    """Inverse of load_idx_images, for synthetic fixtures and round-trip checks."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataError(f"images must be (count, rows, cols), got shape {images.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise DataError(f"labels must be a vector, got shape {labels.shape}")
    if labels.size and labels.max() > 9:
        raise DataError("labels must be digits 0-9")
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


@dataclass
class Dataset:
    """Flattened images in [0, 1], integer labels, and a train/validation split index."""

    images: np.ndarray
    labels: np.ndarray
    split: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )
        if not 0 <= self.split <= self.images.shape[0]:
            raise DataError(f"split {self.split} out of range for {self.images.shape[0]} examples")

    @property
    def n_examples(self):
        return self.images.shape[0]

    @property
    def train_indices(self):
        return np.arange(0, self.split)

    @property
    def val_indices(self):
        return np.arange(self.split, self.n_examples)


def load_dataset(images_path, labels_path, split=None, dtype=np.float64):
    """Load an IDX image/label pair into a Dataset, scaling pixels by 1/255.

    The split defaults to the final 10,000 examples held out for validation
    (or none, for files smaller than that).
    """
    raw = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if raw.shape[0] != labels.shape[0]:
        raise DataError(f"{raw.shape[0]} images vs {labels.shape[0]} labels")
    images = raw.reshape(raw.shape[0], -1).astype(dtype) / 255.0
    if split is None:
        split = raw.shape[0] - 10_000 if raw.shape[0] > 10_000 else raw.shape[0]
    return Dataset(images=images, labels=labels.astype(np.int64), split=int(split))


def one_hot(label, n_classes=10, dtype=np.float64):
    """Unit vector (or batch of rows) with a 1 at each label position."""
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= n_classes):
        raise DataError(f"label out of range 0-{n_classes - 1}")
    out = np.zeros(label.shape + (n_classes,), dtype=dtype)
    np.put_along_axis(out.reshape(-1, n_classes), label.reshape(-1, 1), 1.0, axis=-1)
    return out


def minibatches(indices, batch_size, rng_seed, epoch):
    """Deterministic shuffled batches of the given index set.

    The permutation is seeded by (rng_seed, epoch), so every epoch reshuffles
    but identical runs shuffle identically. The final short batch is kept.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    indices = np.asarray(indices)
    if indices.ndim == 0:
        indices = np.arange(int(indices))
    rng = np.random.default_rng([int(rng_seed) & 0xFFFFFFFFFFFFFFFF, int(epoch)])
    perm = indices[rng.permutation(indices.shape[0])]
    return [perm[i : i + batch_size] for i in range(0, perm.shape[0], batch_size)]
