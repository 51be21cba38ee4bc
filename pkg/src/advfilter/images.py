"""Image representation, quantization, and PPM (P6) interchange.

An image is a plain numpy array of shape (H, W, 3) with float64 intensities
in [0, 1], pixel-major (HWC, RGB channel order). All public functions accept
and return arrays in this layout.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_image",
    "validate_image",
    "quantize",
    "read_ppm",
    "write_ppm",
]


def as_image(data) -> np.ndarray:
    """Coerce ``data`` to a valid float64 HWC image, validating its range."""
    img = np.asarray(data, dtype=np.float64)
    validate_image(img)
    return img


def validate_image(img: np.ndarray) -> None:
    """Raise ValueError unless ``img`` is (H, W, 3) float with values in [0, 1]."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have height >= 1 and width >= 1")
    if not np.issubdtype(img.dtype, np.floating):
        raise ValueError(f"expected float image, got dtype {img.dtype}")
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"intensities out of [0, 1]: min={lo}, max={hi}")


def quantize(img: np.ndarray) -> np.ndarray:
    """Snap every intensity to the nearest 8-bit representable level.

    Each value becomes round(v * 255) / 255 with round-half-up, so the result
    is exactly what survives an 8-bit export. Idempotent.
    """
    # floor(x + 0.5) is round-half-up for x >= 0 (np.round would round half
    # to even, which disagrees with common codec behaviour at the midpoints)
    levels = np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(levels, 0.0, 255.0) / 255.0


def _to_bytes(img: np.ndarray) -> np.ndarray:
    levels = np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(levels, 0, 255).astype(np.uint8)


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM file with maxval 255 into a float64 HWC image."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, pos = _next_token(raw, 0)
    if magic != b"P6":
        raise ValueError(f"not a P6 PPM file: magic {magic!r}")
    width, pos = _next_token(raw, pos)
    height, pos = _next_token(raw, pos)
    maxval, pos = _next_token(raw, pos)
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError as exc:
        raise ValueError("malformed PPM header") from exc
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval} (require 255)")
    if width < 1 or height < 1:
        raise ValueError("PPM dimensions must be positive")
    # header tokens are followed by exactly one whitespace byte, then payload
    payload = raw[pos:]
    need = width * height * 3
    if len(payload) < need:
        raise ValueError(f"truncated pixel payload: need {need} bytes, have {len(payload)}")
    pixels = np.frombuffer(payload[:need], dtype=np.uint8)
    return pixels.reshape(height, width, 3).astype(np.float64) / 255.0


def _next_token(raw: bytes, pos: int):
    """Scan the next whitespace-delimited header token, skipping # comments."""
    n = len(raw)
    while pos < n:
        c = raw[pos : pos + 1]
        if c == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not raw[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("malformed PPM header")
    return raw[start:pos], pos + 1  # consume the single separator byte


def write_ppm(img: np.ndarray, path) -> None:
    """Write an image as canonical binary P6 with maxval 255.

    Intensities are quantized with round-half-up on write. Reading a file
    produced here and writing it again is byte-identical.
    """
    validate_image(np.asarray(img, dtype=np.float64))
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_to_bytes(img).tobytes())


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two [0, 1] images.

    Identical images give ``inf``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(mse))
