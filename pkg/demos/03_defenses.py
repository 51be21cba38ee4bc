"""Input-transformation defenses and what they do to images.

Each defense maps an image to an image; attacks are judged "surviving" a
defense when the transformed adversarial image still fools the model.
This script shows the transforms themselves and their distortion (PSNR),
plus the JPEG quality knob.
"""

import numpy as np

from advfilter import (
    DEFENSE_NAMES,
    defense_by_name,
    ensure_corpus,
    grayscale,
    jpeg_roundtrip,
    load_cifar10,
    median_filter3,
    psnr,
    random_resize_pad,
)

_, _, test_set = load_cifar10(ensure_corpus())
image = test_set.float_images(np.arange(1))[0].astype(np.float64)

print("registered defenses:", ", ".join(DEFENSE_NAMES))

print("\n== distortion on a clean test image ==")
rows = [
    ("grayscale", grayscale(image)),
    ("median3", median_filter3(image)),
    ("jpeg Q30", jpeg_roundtrip(image, quality=30)),
    ("jpeg Q90", jpeg_roundtrip(image, quality=90)),
    ("resize_pad", random_resize_pad(image, rng=np.random.default_rng(0))),
]
for name, out in rows:
    print(f"{name:10s} PSNR {psnr(out, image):6.2f} dB")

print("\n== JPEG quality is monotone in fidelity ==")
for q in (5, 30, 60, 95):
    print(f"Q={q:3d}: PSNR {psnr(jpeg_roundtrip(image, quality=q), image):6.2f} dB")

print("\n== grayscale collapses channels ==")
g = grayscale(image)
print("R==G==B everywhere:", np.array_equal(g[..., 0], g[..., 1])
      and np.array_equal(g[..., 1], g[..., 2]))

print("\n== name registry ==")
fn = defense_by_name("jpeg:55")
print("jpeg:55 resolves, PSNR", round(psnr(fn(image), image), 2), "dB")
print("identity is exact:",
      np.array_equal(defense_by_name("identity")(image), image))
