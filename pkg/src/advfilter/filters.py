"""Piecewise-linear color filter: forward map, parameter gradients, clipping,
and uniform random sampling.

The filter splits [0, 1] into K equal pieces per channel. A pixel x in piece
k (1-based) maps to

    F(x) = [ sum_{i<k} w_i  +  (K*x - (k-1)) * w_k ] / w_sum,

where w is that channel's K-vector of non-negative weights and w_sum its sum.
Uniform weights w = 1/K give the identity map; F(0) = 0 and F(1) = 1 for any
strictly positive w, and F is monotone whenever w >= 0. The three RGB
channels carry independent weight vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FilterParams",
    "identity_params",
    "apply_filter",
    "filter_param_gradient",
    "clip_params",
    "sample_params_uniform",
    "params_to_text",
    "params_from_text",
    "PRESET_CURVES",
    "preset_params",
]


@dataclass(frozen=True)
class FilterParams:
    """Per-channel filter weights with their clipping bound.

    theta is a (3, K) float64 matrix, one row per RGB channel. epsilon is the
    bound used by clip_params: every weight is kept in [1/K, epsilon/K], so
    epsilon = 1 pins the filter at identity.
    """

    theta: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != 3 or theta.shape[1] < 2:
            raise ValueError(f"theta must be (3, K) with K >= 2, got {theta.shape}")
        if np.any(theta < 0):
            raise ValueError("filter weights must be non-negative")
        if self.epsilon < 1.0:
            raise ValueError(f"epsilon must be >= 1, got {self.epsilon}")
        object.__setattr__(self, "theta", theta)

    @property
    def pieces(self) -> int:
        return self.theta.shape[1]


def identity_params(pieces: int, epsilon: float = 1.0) -> FilterParams:
    """Uniform weights 1/K: the identity filter and the attack's start point."""
    if pieces < 2:
        raise ValueError("pieces must be >= 2")
    return FilterParams(np.full((3, pieces), 1.0 / pieces), epsilon=epsilon)


def _piece_index(x: np.ndarray, pieces: int) -> np.ndarray:
    # 0-based piece = floor(K*x), with x = 1 folded into the top piece
    return np.minimum((pieces * x).astype(np.int64), pieces - 1)


def apply_filter(image: np.ndarray, params: FilterParams) -> np.ndarray:
    """Apply the filter channel-wise; output clamped to [0, 1].

    The clamp is a numerical safeguard only: the map itself sends [0, 1] to
    [0, 1] exactly (the per-channel normalization telescopes to 1 at x = 1).
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {x.shape}")
    theta = params.theta
    k = params.pieces
    sums = theta.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("filter weight sum must be positive on every channel")

    out = np.empty_like(x)
    for c in range(3):
        w = theta[c]
        prefix = np.concatenate(([0.0], np.cumsum(w)))  # prefix[p] = sum_{i<p} w_i
        xc = x[:, :, c]
        p = _piece_index(xc, k)
        t = k * xc - p
        out[:, :, c] = (prefix[p] + t * w[p]) / sums[c]
    return np.clip(out, 0.0, 1.0)


def filter_param_gradient(
    image: np.ndarray, params: FilterParams, upstream: np.ndarray
) -> np.ndarray:
    """Accumulate dL/dtheta (3, K) from per-pixel upstream gradients dL/dF.

    With F the filtered value of pixel x in (0-based) piece p, t = K*x - p,
    and S the channel weight sum, the per-pixel sensitivity is

        dF/dw_j = (1 - F)/S  for j < p,   (t - F)/S  for j = p,
                  (-F)/S     for j > p,

    summed over all pixels of the channel weighted by ``upstream``. The sum
    is grouped by piece (bincount), so the whole reduction is O(pixels + K)
    and runs in float64 regardless of the image dtype.
    """
    x = np.asarray(image, dtype=np.float64)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != x.shape:
        raise ValueError(f"upstream shape {u.shape} != image shape {x.shape}")
    theta = params.theta
    k = params.pieces
    sums = theta.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("filter weight sum must be positive on every channel")

    grad = np.empty((3, k))
    for c in range(3):
        w = theta[c]
        s = sums[c]
        prefix = np.concatenate(([0.0], np.cumsum(w)))
        xc = x[:, :, c].ravel()
        uc = u[:, :, c].ravel()
        p = _piece_index(xc, k)
        t = k * xc - p
        f = (prefix[p] + t * w[p]) / s

        # dL/dw_j = [ sum_{pixels with piece > j} u  +  sum_{piece = j} u*t
        #             - sum_all u*F ] / S
        a = np.bincount(p, weights=uc, minlength=k)  # sum of u per piece
        b = np.bincount(p, weights=uc * t, minlength=k)  # sum of u*t per piece
        total_uf = float(np.dot(uc, f))
        # suffix[j] = sum of u over pixels whose piece index exceeds j
        suffix = a[::-1].cumsum()[::-1]
        above = np.concatenate((suffix[1:], [0.0]))
        grad[c] = (above + b - total_uf) / s
    return grad


def clip_params(params: FilterParams) -> FilterParams:
    """Clamp every weight into [1/K, epsilon/K] element-wise."""
    k = params.pieces
    clipped = np.clip(params.theta, 1.0 / k, params.epsilon / k)
    return FilterParams(clipped, epsilon=params.epsilon)


def sample_params_uniform(
    pieces: int, epsilon: float, rng: np.random.Generator
) -> FilterParams:
    """Draw each weight independently uniform on [1/K, epsilon/K]."""
    if pieces < 2:
        raise ValueError("pieces must be >= 2")
    if epsilon < 1.0:
        raise ValueError(f"epsilon must be >= 1, got {epsilon}")
    theta = rng.uniform(1.0 / pieces, epsilon / pieces, size=(3, pieces))
    return FilterParams(theta, epsilon=epsilon)


def params_to_text(params: FilterParams) -> str:
    """Serialize to the plain-text interchange record.

    First line: K and epsilon; then one line of K decimal weights per RGB
    channel. repr-precision floats, so the round trip is exact.
    """
    lines = [f"{params.pieces} {float(params.epsilon)!r}"]
    for c in range(3):
        lines.append(" ".join(repr(float(v)) for v in params.theta[c]))
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> FilterParams:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) != 4:
        raise ValueError("expected a header line plus 3 channel lines")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("header must be 'K epsilon'")
    pieces, epsilon = int(head[0]), float(head[1])
    theta = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if theta.shape != (3, pieces):
        raise ValueError(f"expected 3 rows of {pieces} weights, got {theta.shape}")
    return FilterParams(theta, epsilon=epsilon)


def _ramp(pieces: int, start: float, stop: float) -> np.ndarray:
    return np.linspace(start, stop, pieces)


def _preset_theta(pieces: int, kind: str) -> np.ndarray:
    """Fixed stylistic curves used as style targets (applied, not optimized)."""
    flat = np.full(pieces, 1.0 / pieces)
    if kind == "warm":
        # lift red midtones, sink blue: descending red weights brighten R,
        # ascending blue weights darken B
        r = _ramp(pieces, 1.3, 0.78)
        g = flat * pieces
        b = _ramp(pieces, 0.82, 1.25)
    elif kind == "cool":
        r = _ramp(pieces, 0.82, 1.25)
        g = flat * pieces
        b = _ramp(pieces, 1.3, 0.78)
    elif kind == "fade":
        # washed-out look: steep toe and shoulder, soft midtones, all channels
        u = np.abs(np.linspace(-1.0, 1.0, pieces))
        r = g = b = 0.7 + 0.9 * u * u
    else:
        raise KeyError(f"unknown preset {kind!r}")
    theta = np.stack([r, g, b]).astype(np.float64)
    return theta / theta.sum(axis=1, keepdims=True) * 1.0


PRESET_CURVES = ("warm", "cool", "fade")


def preset_params(name: str, pieces: int = 16) -> FilterParams:
    """One of the built-in style curves as FilterParams (normalized weights)."""
    if name not in PRESET_CURVES:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_CURVES}")
    theta = _preset_theta(pieces, name)
    # epsilon recorded for provenance only; presets are never clipped
    bound = float(np.max(theta * pieces))
    return FilterParams(theta, epsilon=max(1.0, bound))
