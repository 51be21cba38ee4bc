"""Piecewise-linear color filters: the attack's search space.

A filter is a per-channel monotone tone curve built from K equal pieces.
Weights of 1/K give the identity map; the bound epsilon caps any weight at
epsilon/K. This script walks the algebra: identity, presets, random
sampling, text round trips.
"""

import numpy as np

from advfilter import (
    FilterParams,
    PRESET_CURVES,
    apply_filter,
    identity_params,
    params_from_text,
    params_to_text,
    preset_params,
    quantize,
    sample_params_uniform,
)

rng = np.random.default_rng(7)
image = rng.uniform(size=(32, 32, 3))

print("== identity ==")
ident = identity_params(pieces=8)
print("theta row 0:", ident.theta[0])
out = apply_filter(image, ident)
print("max |filter(x) - x| =", np.abs(out - image).max())

print("\n== presets ==")
for name in PRESET_CURVES:
    params = preset_params(name, pieces=16)
    styled = apply_filter(image, params)
    shift = (styled - image).mean(axis=(0, 1))
    print(f"{name:5s} mean channel shift (R,G,B): "
          f"{shift[0]:+.3f} {shift[1]:+.3f} {shift[2]:+.3f}")

print("\n== random filters inside the epsilon box ==")
for eps in (1.0, 4.0, 16.0):
    params = sample_params_uniform(pieces=64, epsilon=eps, rng=np.random.default_rng(0))
    moved = np.abs(apply_filter(image, params) - image).max()
    print(f"epsilon={eps:4g}: max pixel move {moved:.3f}")

print("\n== text round trip ==")
params = sample_params_uniform(pieces=4, epsilon=8.0, rng=rng)
text = params_to_text(params)
print(text.strip())
back = params_from_text(text)
print("round trip exact:", np.array_equal(back.theta, params.theta))

print("\n== quantization ==")
styled = apply_filter(image, preset_params("warm"))
q = quantize(styled)
print("8-bit grid:", sorted(set(np.unique((q * 255).round() - (q * 255)))) == [0.0])
print("max |quantize(x) - x| =", np.abs(q - styled).max(), "(<= 1/510)")
