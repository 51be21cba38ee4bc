"""Shared numerical oracles for the test suite.

Central finite differences are computed here, independently of any library
gradient code, so gradient tests compare two genuinely separate derivations.
"""

import numpy as np


def central_diff(f, x, h=1e-6, coords=None):
    """Central finite-difference gradient of scalar f at array x.

    coords limits the check to a subset of flat indices (for expensive f).
    Returns an array shaped like x, with untouched coordinates set to NaN
    when coords is given.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    idx = range(flat.size) if coords is None else coords
    grad = np.full(flat.size, np.nan)
    for j in idx:
        hi = flat.copy()
        lo = flat.copy()
        hi[j] += h
        lo[j] -= h
        grad[j] = (f(hi.reshape(x.shape)) - f(lo.reshape(x.shape))) / (2.0 * h)
    return grad.reshape(x.shape)


def rel_err(a, b, floor=1e-8):
    """Element-wise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
