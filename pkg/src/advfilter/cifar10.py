"""CIFAR-10 binary-format dataset ingestion.

The binary layout is fixed: each record is 3073 bytes, a label byte in [0, 10)
followed by 3072 pixel bytes (1024 R, 1024 G, 1024 B, each row-major 32x32).
Training data lives in data_batch_1.bin .. data_batch_5.bin, evaluation data
in test_batch.bin.

The split rule: all 50000 training records form the train split, the first
500 test records the validation split (model selection), the remaining 9500
the test split (evaluation).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LabeledImage", "Dataset", "load_cifar10", "RECORD_BYTES", "CLASS_COUNT"]

RECORD_BYTES = 3073
CLASS_COUNT = 10
_SIDE = 32

TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    label: int


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of equally-sized labeled images.

    Pixels are stored as uint8 (the on-disk representation) and converted on
    access; ``image(i)`` maps bytes to [0, 1] by v / 255.
    """

    pixels: np.ndarray  # (N, H, W, 3) uint8
    labels: np.ndarray  # (N,) int64
    class_count: int = CLASS_COUNT
    split_tag: str = "test"

    def __post_init__(self):
        if self.pixels.ndim != 4 or self.pixels.shape[3] != 3:
            raise ValueError(f"expected (N, H, W, 3) pixels, got {self.pixels.shape}")
        if len(self.labels) != len(self.pixels):
            raise ValueError("pixels/labels length mismatch")
        if len(self.labels) and int(self.labels.max()) >= self.class_count:
            raise ValueError("label out of range")
        self.pixels.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.image(i), int(self.labels[i]))

    @property
    def image_shape(self):
        return self.pixels.shape[1:3]

    def image(self, i: int) -> np.ndarray:
        """The i-th image as float64 in [0, 1]."""
        return self.pixels[i].astype(np.float64) / 255.0

    def float_images(self, indices=None, dtype=np.float32) -> np.ndarray:
        """A (B, H, W, 3) float batch in [0, 1]; all images when indices is None."""
        block = self.pixels if indices is None else self.pixels[indices]
        return block.astype(dtype) / dtype(255)

    def subset(self, indices, split_tag=None) -> "Dataset":
        return Dataset(
            pixels=self.pixels[indices].copy(),
            labels=self.labels[indices].copy(),
            class_count=self.class_count,
            split_tag=split_tag or self.split_tag,
        )


def _read_batch_file(path) -> tuple[np.ndarray, np.ndarray]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing CIFAR-10 batch file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: file length {raw.size} is not a positive multiple of {RECORD_BYTES}"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if int(labels.max()) >= CLASS_COUNT:
        raise ValueError(f"{path}: label byte >= {CLASS_COUNT}")
    # planar R, G, B planes of 1024 bytes each -> HWC
    planes = records[:, 1:].reshape(-1, 3, _SIDE, _SIDE)
    pixels = np.ascontiguousarray(planes.transpose(0, 2, 3, 1))
    return pixels, labels


def load_cifar10(directory) -> tuple[Dataset, Dataset, Dataset]:
    """Load the CIFAR-10 binary batches under ``directory``.

    Returns (train, val, test): 50000 training records, the first 500 test
    records as validation, and the remaining 9500 as test.
    """
    parts = [_read_batch_file(os.path.join(directory, name)) for name in TRAIN_FILES]
    train_pixels = np.concatenate([p for p, _ in parts])
    train_labels = np.concatenate([l for _, l in parts])
    test_pixels, test_labels = _read_batch_file(os.path.join(directory, TEST_FILE))

    train = Dataset(train_pixels, train_labels, split_tag="train")
    val = Dataset(test_pixels[:500].copy(), test_labels[:500].copy(), split_tag="val")
    test = Dataset(test_pixels[500:].copy(), test_labels[500:].copy(), split_tag="test")
    return train, val, test
