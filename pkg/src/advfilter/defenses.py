"""Input-transformation defenses applied to images before classification.

All transformations accept a float RGB image in [0, 1] and return a new
image of the same shape and range.  Randomized defenses take an optional
``rng``; passing the same generator state reproduces the transformation.
"""

from __future__ import annotations

import numpy as np

from .images import as_image

# Rec. 601 luma weights, also used by the JPEG color transform below.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


def grayscale(image: np.ndarray) -> np.ndarray:
    """Replace each pixel by its luma, replicated across the three channels."""
    img = as_image(image)
    luma = _LUMA_R * img[..., 0] + _LUMA_G * img[..., 1] + _LUMA_B * img[..., 2]
    return np.repeat(luma[..., None], 3, axis=2)


def median_filter3(image: np.ndarray) -> np.ndarray:
    """3x3 median filter per channel with reflected borders."""
    img = as_image(image)
    h, w = img.shape[:2]
    # 'reflect' is undefined on length-1 axes; 'symmetric' coincides with it
    # in spirit there (the only neighbor is the pixel itself).
    mode = "reflect" if h >= 2 and w >= 2 else "symmetric"
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode=mode)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(0, 1))
    return np.median(windows, axis=(-2, -1))


# ---------------------------------------------------------------------------
# JPEG round trip
# ---------------------------------------------------------------------------

# Base quantization tables from the JPEG standard (Annex K).
_LUMA_BASE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_CHROMA_BASE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def jpeg_quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the (luma, chroma) quantization tables for a quality setting.

    Uses the conventional quality scaling: ``scale = 5000 / Q`` below 50,
    ``200 - 2 Q`` at or above, with each entry ``clip(floor((base * scale
    + 50) / 100), 1, 255)``.
    """
    q = int(quality)
    if q != quality or not 1 <= q <= 100:
        raise ValueError(f"jpeg quality must be an integer in [1, 100], got {quality!r}")
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q

    def scaled(base: np.ndarray) -> np.ndarray:
        return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)

    return scaled(_LUMA_BASE), scaled(_CHROMA_BASE)


def _dct_matrix() -> np.ndarray:
    u = np.arange(8.0)[:, None]
    x = np.arange(8.0)[None, :]
    mat = np.cos((2.0 * x + 1.0) * u * np.pi / 16.0) * 0.5
    mat[0, :] = np.sqrt(1.0 / 8.0)
    return mat


_DCT = _dct_matrix()


def _code_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Forward DCT, quantize, dequantize, inverse DCT on one 0..255 plane."""
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3) - 128.0
    coef = np.einsum("ux,bcxy,vy->bcuv", _DCT, blocks, _DCT)
    # Round half away from zero, like a scalar (int)(v + 0.5) with sign.
    coef = np.sign(coef) * np.floor(np.abs(coef) / table + 0.5) * table
    blocks = np.einsum("ux,bcuv,vy->bcxy", _DCT, coef, _DCT) + 128.0
    return blocks.transpose(0, 2, 1, 3).reshape(h, w)


def jpeg_roundtrip(image: np.ndarray, quality: int = 30) -> np.ndarray:
    """Encode and decode the image with a self-contained baseline JPEG model.

    The pipeline is the standard one: RGB -> YCbCr, 4:2:0 chroma
    subsampling (2x2 box mean down, pixel replication up), 8x8 block DCT,
    quantization with quality-scaled Annex K tables, then the inverse.
    Edges are replicated out to whole 16x16 macroblocks and cropped back.
    """
    luma_tbl, chroma_tbl = jpeg_quant_tables(quality)
    img = as_image(image)
    x = img * 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    cb = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b

    h, w = y.shape
    pad_h, pad_w = (-h) % 16, (-w) % 16
    y, cb, cr = (
        np.pad(plane, ((0, pad_h), (0, pad_w)), mode="edge") for plane in (y, cb, cr)
    )
    hp, wp = y.shape

    y = _code_plane(y, luma_tbl)
    sub = lambda c: c.reshape(hp // 2, 2, wp // 2, 2).mean(axis=(1, 3))
    cb = _code_plane(sub(cb), chroma_tbl)
    cr = _code_plane(sub(cr), chroma_tbl)
    up = lambda c: np.repeat(np.repeat(c, 2, axis=0), 2, axis=1)
    cb, cr = up(cb) - 128.0, up(cr) - 128.0

    out = np.stack(
        [
            y + 1.402 * cr,
            y - 0.344136 * cb - 0.714136 * cr,
            y + 1.772 * cb,
        ],
        axis=-1,
    )
    return np.clip(out[:h, :w] / 255.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Random resize and pad
# ---------------------------------------------------------------------------


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-aligned sample centers.

    Resizing to the input size returns an exact copy.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    top = img[np.ix_(y0c, x0c)] * (1.0 - fx) + img[np.ix_(y0c, x1c)] * fx
    bottom = img[np.ix_(y1c, x0c)] * (1.0 - fx) + img[np.ix_(y1c, x1c)] * fx
    return top * (1.0 - fy) + bottom * fy


def random_resize_pad(image: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Randomly resize a square image, pad it onto a larger canvas, resize back.

    For side ``S`` the image is bilinearly resized to a random side
    ``r in [S, S + ceil(S / 9)]``, placed on a zero canvas of side
    ``S + ceil(S / 9)`` at a random offset, then resized back to ``S``.
    The generator is consumed in the order (side, row offset, col offset).
    """
    img = as_image(image)
    h, w = img.shape[:2]
    if h != w:
        raise ValueError(f"random_resize_pad requires a square image, got {h}x{w}")
    if rng is None:
        rng = np.random.default_rng(0)
    side = h
    canvas_side = side + -(-side // 9)
    r = int(rng.integers(side, canvas_side + 1))
    top = int(rng.integers(0, canvas_side - r + 1))
    left = int(rng.integers(0, canvas_side - r + 1))
    canvas = np.zeros((canvas_side, canvas_side, 3), dtype=np.float64)
    canvas[top : top + r, left : left + r] = resize_bilinear(img, r, r)
    return np.clip(resize_bilinear(canvas, side, side), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Name registry
# ---------------------------------------------------------------------------

DEFENSE_NAMES = ("identity", "grayscale", "median3", "resize_pad", "jpeg:Q")


def defense_by_name(name: str):
    """Resolve a defense name to a callable ``transform(image, rng=None)``.

    Recognized names: ``identity``, ``grayscale``, ``median3``,
    ``resize_pad``, and ``jpeg:Q`` with an integer quality (plain ``jpeg``
    means quality 30).
    """
    spec = str(name).strip()
    if spec == "identity":
        return lambda image, rng=None: as_image(image).copy()
    if spec == "grayscale":
        return lambda image, rng=None: grayscale(image)
    if spec == "median3":
        return lambda image, rng=None: median_filter3(image)
    if spec == "resize_pad":
        return lambda image, rng=None: random_resize_pad(image, rng)
    if spec == "jpeg" or spec.startswith("jpeg:"):
        quality = 30 if spec == "jpeg" else int(spec.split(":", 1)[1])
        tables_ok = jpeg_quant_tables(quality)  # validate eagerly
        del tables_ok
        return lambda image, rng=None: jpeg_roundtrip(image, quality)
    raise ValueError(f"unknown defense name: {name!r}")
