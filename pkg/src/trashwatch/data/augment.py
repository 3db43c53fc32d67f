"""HSV color augmentation and bilinear resize.

Augmentation is geometry-free: hue shifts and saturation/value scaling
never move a box, so annotations pass through untouched.
"""

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv


def augment_hsv(image: np.ndarray, cfg, rng: np.random.Generator) -> np.ndarray:
    """Randomly perturb hue, saturation and value.

    Hue shifts by Uniform(-hue, +hue) as a fraction of the hue circle;
    saturation and value scale by factors drawn log-uniformly from
    [1/s, s] with s = cfg.saturation and s = cfg.exposure respectively.
    """
    if cfg.hue == 0.0 and cfg.saturation == 1.0 and cfg.exposure == 1.0:
        return image
    shift = rng.uniform(-cfg.hue, cfg.hue)
    sat_factor = float(np.exp(rng.uniform(-np.log(cfg.saturation), np.log(cfg.saturation)))) \
        if cfg.saturation != 1.0 else 1.0
    val_factor = float(np.exp(rng.uniform(-np.log(cfg.exposure), np.log(cfg.exposure)))) \
        if cfg.exposure != 1.0 else 1.0
    hsv = rgb_to_hsv(image.astype(np.float64) / 255.0)
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_factor, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * val_factor, 0.0, 1.0)
    rgb = hsv_to_rgb(hsv)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def resize_bilinear(image: np.ndarray, out_width: int, out_height: int) -> np.ndarray:
    """Standard bilinear resampling with half-pixel centers."""
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("source image must be at least 1x1")
    if (w, h) == (out_width, out_height):
        return image.copy()

    def axis_coords(src, dst):
        centers = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        lo = np.floor(centers).astype(np.int64)
        frac = centers - lo
        lo = np.clip(lo, 0, src - 1)
        hi = np.clip(lo + 1, 0, src - 1)
        # Clamped edges interpolate a pixel with itself.
        frac = np.where(centers < 0, 0.0, np.where(centers > src - 1, 0.0, frac))
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_height)
    x0, x1, fx = axis_coords(w, out_width)
    img = image.astype(np.float64)
    top = img[y0][:, x0] * (1 - fx)[None, :, None] + img[y0][:, x1] * fx[None, :, None]
    bot = img[y1][:, x0] * (1 - fx)[None, :, None] + img[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
