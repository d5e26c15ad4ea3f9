"""Static image transforms for metamorphic robustness testing.

All transforms are pure functions on H x W x C float arrays with
intensities in [0, 1], grouped as pointwise, affine and convolutional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .errors import ParameterError, UnsupportedTransformError, ValidationError

POINTWISE_KINDS = ("inverse", "brightness", "contrast", "saturation", "gaussian_noise")
AFFINE_KINDS = ("scale", "rotate", "shear")
CONVOLUTIONAL_KINDS = ("gaussian_blur", "fog", "zoom_blur")
ALL_KINDS = POINTWISE_KINDS + AFFINE_KINDS + CONVOLUTIONAL_KINDS

# Mild-corruption defaults for robustness runs.
DEFAULT_PARAMS = {
    "inverse": {},
    "brightness": {"offset": 0.2},
    "contrast": {"factor": 1.5},
    "saturation": {"factor": 1.5},
    "gaussian_noise": {"sigma": 0.08},
    "rotate": {"angle": 15.0},
    "shear": {"angle": 10.0},
    "scale": {"factor": 1.2},
    "gaussian_blur": {"sigma": 1.5},
    "fog": {"intensity": 0.4},
    "zoom_blur": {"max_factor": 1.3},
}


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValidationError("unknown transform kind %r" % self.kind)


def _check_image(img):
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValidationError("image must be HxWx1 or HxWx3, got shape %s" % (arr.shape,))
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError("image dimensions must be >= 1")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("image intensities must lie in [0, 1]")
    return arr


def _clamp(arr):
    return np.clip(arr, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Colour helpers (hexcone RGB<->HSV)
# ---------------------------------------------------------------------------

def rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    # hue in [0, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rc = np.where(delta > 0, (maxc - r) / np.where(delta > 0, delta, 1.0), 0.0)
        gc = np.where(delta > 0, (maxc - g) / np.where(delta > 0, delta, 1.0), 0.0)
        bc = np.where(delta > 0, (maxc - b) / np.where(delta > 0, delta, 1.0), 0.0)
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


# ---------------------------------------------------------------------------
# Pointwise transforms
# ---------------------------------------------------------------------------

def apply_pointwise(spec, img):
    arr = _check_image(img)
    kind, params = spec.kind, spec.params
    if kind == "inverse":
        return 1.0 - arr
    if kind == "brightness":
        b = float(params["offset"])
        if not -1.0 <= b <= 1.0:
            raise ParameterError("brightness offset must be in [-1, 1]")
        if b == 0.0:
            return arr.copy()
        return _clamp(arr + b)
    if kind == "contrast":
        c = float(params["factor"])
        if not 0.0 < c <= 4.0:
            raise ParameterError("contrast factor must be in (0, 4]")
        if c == 1.0:
            return arr.copy()
        return _clamp((arr - 0.5) * c + 0.5)
    if kind == "saturation":
        s = float(params["factor"])
        if not 0.0 <= s <= 4.0:
            raise ParameterError("saturation factor must be in [0, 4]")
        if arr.shape[2] != 3:
            raise UnsupportedTransformError("saturation requires an RGB image")
        if s == 1.0:
            return arr.copy()
        hsv = rgb_to_hsv(arr)
        hsv[..., 1] = np.clip(hsv[..., 1] * s, 0.0, 1.0)
        return _clamp(hsv_to_rgb(hsv))
    if kind == "gaussian_noise":
        sigma = float(params["sigma"])
        if not 0.0 <= sigma <= 1.0:
            raise ParameterError("noise sigma must be in [0, 1]")
        if sigma == 0.0:
            return arr.copy()
        rng = np.random.default_rng(spec.rng_seed)
        return _clamp(arr + rng.normal(0.0, sigma, size=arr.shape))
    raise ValidationError("%r is not a pointwise transform" % kind)


# ---------------------------------------------------------------------------
# Affine transforms (inverse mapping, bilinear, zero fill)
# ---------------------------------------------------------------------------

def _bilinear_sample(arr, xs, ys):
    """Sample arr at float coords (xs, ys); out-of-bounds sources read as 0."""
    h, w, c = arr.shape
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros(xs.shape + (c,))
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.zeros(xs.shape + (c,))
            vals[valid] = arr[yi[valid], xi[valid]]
            out += vals * wgt[..., None]
    return out


def _warp(arr, m):
    """Apply inverse-mapping 2x3 matrix m (output coords -> source coords)."""
    h, w, _ = arr.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    u, v = xs - cx, ys - cy
    src_x = m[0, 0] * u + m[0, 1] * v + m[0, 2] + cx
    src_y = m[1, 0] * u + m[1, 1] * v + m[1, 2] + cy
    return _bilinear_sample(arr, src_x, src_y)


def apply_affine(spec, img):
    arr = _check_image(img)
    kind, params = spec.kind, spec.params
    if kind == "rotate":
        theta = float(params["angle"])
        if not -180.0 < theta <= 180.0:
            raise ParameterError("rotation angle must be in (-180, 180]")
        if theta == 0.0:
            return arr.copy()
        t = math.radians(theta)
        m = np.array([[math.cos(t), -math.sin(t), 0.0],
                      [math.sin(t), math.cos(t), 0.0]])
    elif kind == "shear":
        phi = float(params["angle"])
        if not -180.0 < phi <= 180.0:
            raise ParameterError("shear angle must be in (-180, 180]")
        if phi == 0.0:
            return arr.copy()
        m = np.array([[1.0, math.tan(math.radians(phi)), 0.0],
                      [0.0, 1.0, 0.0]])
    elif kind == "scale":
        s = float(params["factor"])
        if not 0.0 < s <= 4.0:
            raise ParameterError("scale factor must be in (0, 4]")
        if s == 1.0:
            return arr.copy()
        m = np.array([[1.0 / s, 0.0, 0.0],
                      [0.0, 1.0 / s, 0.0]])
    else:
        raise ValidationError("%r is not an affine transform" % kind)
    return _clamp(_warp(arr, m))


# ---------------------------------------------------------------------------
# Convolutional transforms
# ---------------------------------------------------------------------------

def _gaussian_kernel(sigma):
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _separable_blur(arr, sigma):
    k = _gaussian_kernel(sigma)
    r = (len(k) - 1) // 2
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        # reflect-pad then correlate along rows, then columns
        plane = np.pad(arr[:, :, c], r, mode="symmetric")
        plane = np.apply_along_axis(lambda row: np.convolve(row, k, mode="valid"), 1, plane)
        plane = np.apply_along_axis(lambda col: np.convolve(col, k, mode="valid"), 0, plane)
        out[:, :, c] = plane
    return out


def plasma_fractal(size_pow2, roughness=0.6, rng=None):
    """Diamond-square heightmap of side 2**size_pow2 + 1, scaled to [0, 1]."""
    rng = rng or np.random.default_rng(0)
    n = 2 ** size_pow2 + 1
    grid = np.zeros((n, n))
    grid[0, 0], grid[0, -1], grid[-1, 0], grid[-1, -1] = rng.uniform(0, 1, 4)
    step = n - 1
    amp = 1.0
    while step > 1:
        half = step // 2
        # diamond step
        for y in range(half, n, step):
            for x in range(half, n, step):
                avg = (grid[y - half, x - half] + grid[y - half, x + half]
                       + grid[y + half, x - half] + grid[y + half, x + half]) / 4.0
                grid[y, x] = avg + rng.uniform(-amp, amp)
        # square step
        for y in range(0, n, half):
            for x in range((y + half) % step, n, step):
                vals = []
                if y - half >= 0:
                    vals.append(grid[y - half, x])
                if y + half < n:
                    vals.append(grid[y + half, x])
                if x - half >= 0:
                    vals.append(grid[y, x - half])
                if x + half < n:
                    vals.append(grid[y, x + half])
                grid[y, x] = sum(vals) / len(vals) + rng.uniform(-amp, amp)
        step = half
        amp *= roughness
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        grid = (grid - lo) / (hi - lo)
    else:
        grid = np.zeros_like(grid)
    return grid


def apply_convolutional(spec, img):
    arr = _check_image(img)
    kind, params = spec.kind, spec.params
    if kind == "gaussian_blur":
        sigma = float(params["sigma"])
        if not 0.0 < sigma <= 10.0:
            raise ParameterError("blur sigma must be in (0, 10]")
        return _clamp(_separable_blur(arr, sigma))
    if kind == "fog":
        w = float(params["intensity"])
        if not 0.0 <= w <= 1.0:
            raise ParameterError("fog intensity must be in [0, 1]")
        if w == 0.0:
            return arr.copy()
        h, wid, c = arr.shape
        p = 0
        while 2 ** p + 1 < max(h, wid):
            p += 1
        layer = plasma_fractal(max(p, 1), rng=np.random.default_rng(spec.rng_seed))[:h, :wid]
        return _clamp((1.0 - w) * arr + w * layer[:, :, None])
    if kind == "zoom_blur":
        z_max = float(params["max_factor"])
        if not 1.0 < z_max <= 2.0:
            raise ParameterError("zoom max factor must be in (1, 2]")
        n = 10
        acc = arr.copy()
        for k in range(1, n + 1):
            f = 1.0 + k * (z_max - 1.0) / n
            acc += apply_affine(TransformSpec("scale", {"factor": f}), arr)
        return _clamp(acc / (n + 1))
    raise ValidationError("%r is not a convolutional transform" % kind)


def apply_transform(spec, img):
    """Dispatch a TransformSpec to its transform family."""
    if spec.kind in POINTWISE_KINDS:
        return apply_pointwise(spec, img)
    if spec.kind in AFFINE_KINDS:
        return apply_affine(spec, img)
    return apply_convolutional(spec, img)


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def load_png(path):
    pil = PILImage.open(path)
    if pil.mode not in ("L", "RGB"):
        pil = pil.convert("RGB")
    arr = np.asarray(pil, dtype=float) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_png(img, path):
    arr = _check_image(img)
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if u8.shape[2] == 1:
        u8 = u8[:, :, 0]
    PILImage.fromarray(u8).save(path, format="PNG")
