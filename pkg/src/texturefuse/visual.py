"""Texture image preprocessing: half-size bilinear resize, random square
patch sampling, right-angle rotation augmentation and per-channel mean
subtraction. Images are (3, H, W) float arrays in [0, 1], RGB.
"""

from __future__ import annotations

import numpy as np

ROTATE_MODES = ("right-angle", "any")


def load_image(path) -> np.ndarray:
    """Decode PNG/JPEG into a (3, H, W) float32 array in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path, pixels: np.ndarray) -> None:
    from PIL import Image

    arr = (np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr).save(path)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel-center bilinear sampling grid
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (src - lo).astype(np.float64)
    return lo, hi, frac


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with half-pixel centers; output values are
    convex combinations of inputs, so the [0, 1] range is preserved.
    """
    c, h, w = pixels.shape
    lo_h, hi_h, fh = _axis_weights(h, out_h)
    lo_w, hi_w, fw = _axis_weights(w, out_w)
    x = pixels.astype(np.float64)
    rows = x[:, lo_h, :] * (1.0 - fh)[None, :, None] + x[:, hi_h, :] * fh[None, :, None]
    out = rows[:, :, lo_w] * (1.0 - fw)[None, None, :] + rows[:, :, hi_w] * fw[None, None, :]
    return out.astype(pixels.dtype, copy=False)


def half_resize(pixels: np.ndarray) -> np.ndarray:
    """Resize to (ceil(H/2), ceil(W/2)) with bilinear interpolation."""
    c, h, w = pixels.shape
    if h < 2 or w < 2:
        raise ValueError(f"cannot half-resize a degenerate {h}x{w} image")
    return resize_bilinear(pixels, (h + 1) // 2, (w + 1) // 2)


def sample_patch(pixels: np.ndarray, size: int, rng) -> np.ndarray:
    """Uniformly random size x size crop."""
    c, h, w = pixels.shape
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} is smaller than the requested {size}x{size} patch")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return pixels[:, top : top + size, left : left + size]


def random_rotate(pixels: np.ndarray, rng, mode: str = "right-angle") -> np.ndarray:
    """Rotate a square image by a random multiple of 90 degrees
    (counterclockwise). ``mode="any"`` instead rotates by a uniform angle and
    takes the largest safe central crop, resized back to the input extent.
    """
    c, h, w = pixels.shape
    if h != w:
        raise ValueError(f"rotation needs a square image, got {h}x{w} (crop first)")
    if mode == "right-angle":
        k = int(rng.integers(0, 4))
        return np.ascontiguousarray(np.rot90(pixels, k, axes=(1, 2)))
    if mode != "any":
        raise ValueError(f"unknown rotate mode {mode!r}")
    angle = float(rng.uniform(0.0, 360.0))
    return _rotate_any(pixels, angle)


def _rotate_any(pixels: np.ndarray, angle_deg: float) -> np.ndarray:
    c, h, w = pixels.shape
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    # largest axis-aligned square fully inside the rotated square
    inner = int(np.floor(h / (abs(cos) + abs(sin))))
    inner = max(inner, 1)
    ys, xs = np.meshgrid(np.arange(inner), np.arange(inner), indexing="ij")
    cy = cx = (inner - 1) / 2.0
    oy, ox = ys - cy, xs - cx
    sy = cos * oy - sin * ox + (h - 1) / 2.0
    sx = sin * oy + cos * ox + (w - 1) / 2.0
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 2)
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 2)
    fy = np.clip(sy - y0, 0.0, 1.0)
    fx = np.clip(sx - x0, 0.0, 1.0)
    p = pixels.astype(np.float64)
    out = (
        p[:, y0, x0] * (1 - fy) * (1 - fx)
        + p[:, y0 + 1, x0] * fy * (1 - fx)
        + p[:, y0, x0 + 1] * (1 - fy) * fx
        + p[:, y0 + 1, x0 + 1] * fy * fx
    )
    return resize_bilinear(out.astype(pixels.dtype), h, w)


def mean_subtract(pixels: np.ndarray, channel_means) -> np.ndarray:
    means = np.asarray(channel_means, pixels.dtype)
    if not np.all(np.isfinite(means)):
        raise ValueError("channel means must be finite")
    return pixels - means[:, None, None]
