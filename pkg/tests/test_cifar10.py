"""Binary dataset format: record decoding, split rule, error handling.

Fixture bytes are constructed by hand so the decoder is checked against the
format definition rather than against the package's own writer.
"""

import numpy as np
import pytest

from advfilter import Dataset, load_cifar10
from advfilter.cifar10 import RECORD_BYTES, TRAIN_FILES, TEST_FILE, _read_batch_file


def make_record(label, r=0, g=0, b=0):
    """One 3073-byte record with constant channel planes."""
    rec = bytearray(RECORD_BYTES)
    rec[0] = label
    rec[1 : 1025] = bytes([r]) * 1024
    rec[1025 : 2049] = bytes([g]) * 1024
    rec[2049 : 3073] = bytes([b]) * 1024
    return bytes(rec)


def test_record_decoding_planes_and_order(tmp_path):
    # pixel (row 1, col 2) gets a distinct red byte: plane offset 1*32 + 2
    rec = bytearray(make_record(3, r=10, g=20, b=30))
    rec[1 + 1 * 32 + 2] = 99
    path = tmp_path / "batch.bin"
    path.write_bytes(bytes(rec) + make_record(7, r=1, g=2, b=3))

    pixels, labels = _read_batch_file(path)
    assert pixels.shape == (2, 32, 32, 3)
    assert labels.tolist() == [3, 7]
    assert pixels[0, 0, 0].tolist() == [10, 20, 30]
    assert pixels[0, 1, 2, 0] == 99
    assert pixels[1, 5, 5].tolist() == [1, 2, 3]


def test_loader_split_rule(tmp_path):
    for i, name in enumerate(TRAIN_FILES):
        (tmp_path / name).write_bytes(b"".join(make_record(i) for _ in range(4)))
    (tmp_path / TEST_FILE).write_bytes(
        b"".join(make_record(j % 10) for j in range(600))
    )
    train, val, test = load_cifar10(tmp_path)
    assert len(train) == 20
    assert len(val) == 500
    assert len(test) == 100
    # validation is the head of the test file, test the remainder
    assert val.labels[0] == 0 and val.labels[1] == 1
    assert test.labels[0] == 500 % 10
    assert train.split_tag == "train" and val.split_tag == "val" and test.split_tag == "test"


def test_loader_error_cases(tmp_path):
    with pytest.raises(FileNotFoundError):
        _read_batch_file(tmp_path / "missing.bin")
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\x00" * (RECORD_BYTES + 5))
    with pytest.raises(ValueError):
        _read_batch_file(bad)
    bad.write_bytes(b"")
    with pytest.raises(ValueError):
        _read_batch_file(bad)
    rec = bytearray(make_record(0))
    rec[0] = 10  # label byte out of range
    bad.write_bytes(bytes(rec))
    with pytest.raises(ValueError):
        _read_batch_file(bad)


def test_dataset_access_and_scaling():
    pixels = np.zeros((3, 32, 32, 3), dtype=np.uint8)
    pixels[1, 4, 5] = [255, 128, 1]
    ds = Dataset(pixels, np.array([0, 1, 2], dtype=np.int64))
    assert len(ds) == 3
    img = ds.image(1)
    assert img.dtype == np.float64
    assert img[4, 5, 0] == 1.0
    assert img[4, 5, 1] == 128.0 / 255.0
    item = ds[1]
    assert item.label == 1
    assert np.array_equal(item.image, img)

    batch = ds.float_images([0, 1])
    assert batch.dtype == np.float32 and batch.shape == (2, 32, 32, 3)
    assert batch[1, 4, 5, 0] == 1.0
    full = ds.float_images()
    assert full.shape == (3, 32, 32, 3)

    sub = ds.subset([2, 0], split_tag="probe")
    assert sub.labels.tolist() == [2, 0]
    assert sub.split_tag == "probe"


def test_dataset_is_immutable():
    ds = Dataset(np.zeros((2, 4, 4, 3), dtype=np.uint8), np.zeros(2, dtype=np.int64))
    with pytest.raises(ValueError):
        ds.pixels[0, 0, 0, 0] = 1
    with pytest.raises(ValueError):
        ds.labels[0] = 1


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 4, 4, 1), dtype=np.uint8), np.zeros(2, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 4, 4, 3), dtype=np.uint8), np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 4, 4, 3), dtype=np.uint8), np.array([0, 10]))
