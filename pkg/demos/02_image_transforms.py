"""The image perturbation catalogue.

Eleven semantic-preserving transforms in three families — pointwise,
affine, and convolutional — applied to a synthetic test card. Every
transform maps [0,1] images to [0,1] images of the same shape and is
deterministic given its rng_seed.
"""

import os

import numpy as np

from modelprobe import imaging
from modelprobe.imaging import TransformSpec, apply_transform

# A synthetic color test card: gradient plus a bright square.
h, w = 64, 64
yy, xx = np.mgrid[0:h, 0:w]
img = np.stack([xx / w, yy / h, 0.5 * np.ones((h, w))], axis=2)
img[20:44, 20:44] = (0.9, 0.9, 0.2)

out_dir = os.path.join(os.path.dirname(__file__), "_out", "transforms")
os.makedirs(out_dir, exist_ok=True)
imaging.save_png(img, os.path.join(out_dir, "original.png"))

for kind in imaging.ALL_KINDS:
    spec = TransformSpec(kind, dict(imaging.DEFAULT_PARAMS[kind]), rng_seed=0)
    out = apply_transform(spec, img)
    imaging.save_png(out, os.path.join(out_dir, "%s.png" % kind))
    print("%-15s params=%-28s range=[%.3f, %.3f]"
          % (kind, spec.params, out.min(), out.max()))

print("\nWrote originals and perturbed copies to", out_dir)

# Identity parameters reproduce the input bit-exactly:
ident = apply_transform(TransformSpec("brightness", {"offset": 0.0}), img)
print("brightness(offset=0) bit-exact:", np.array_equal(ident, img))
