"""Raster operations on grayscale and RGB images.

Grayscale images are ``(H, W)`` float64 arrays with values in [0, 1]; RGB
images are ``(H, W, 3)``.  Sample location (x, y) means the center of the
pixel in column x, row y.  Warping is inverse mapping with bilinear
interpolation; samples falling outside the source raster contribute zero,
so warping a constant-one image yields a validity mask.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from . import geometry, kernels
from .errors import ImageTooSmall, OutOfBounds, SizeMismatch

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise SizeMismatch(f"expected (H, W, 3) RGB image, got {img.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def warp(img: np.ndarray, h: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Warp so output pixel (x, y) samples ``img`` at ``invert(h)(x, y)``.

    With the package's direction convention this moves image content forward
    through ``h``: ``warp(i1, H)`` lands on top of ``i2`` when H maps i1
    coordinates to i2 coordinates.
    """
    img = np.asarray(img, dtype=np.float64)
    hinv = geometry.invert(h)
    out = kernels.warp_bilinear(img, hinv, out_h, out_w)
    # bilinear weights can overshoot [0,1] by a few ulp
    return np.clip(out, 0.0, 1.0)


def warp_any(img: np.ndarray, h: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Warp without the [0,1] clamp, for data that is not intensity."""
    img = np.asarray(img, dtype=np.float64)
    hinv = geometry.invert(h)
    return kernels.warp_bilinear(img, hinv, out_h, out_w)


def downscale_half(img: np.ndarray) -> np.ndarray:
    """2x2 box average; an odd trailing row/column is averaged over the
    pixels that exist."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h < 2 or w < 2:
        raise ImageTooSmall(f"cannot halve a {w}x{h} image")
    oh = (h + 1) // 2
    ow = (w + 1) // 2
    out = np.zeros((oh, ow), dtype=np.float64)
    he, we = (h // 2) * 2, (w // 2) * 2
    even = img[:he, :we].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    out[:h // 2, :w // 2] = even
    if h % 2:
        out[-1, :w // 2] = img[-1, :we].reshape(w // 2, 2).mean(axis=1)
    if w % 2:
        out[:h // 2, -1] = img[:he, -1].reshape(h // 2, 2).mean(axis=1)
    if h % 2 and w % 2:
        out[-1, -1] = img[-1, -1]
    return out


def build_pyramid(img: np.ndarray, n_levels: int) -> list[np.ndarray]:
    """Level 0 is the image itself; level k+1 halves level k."""
    if n_levels < 1:
        raise ValueError("need at least one pyramid level")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    top_h = -(-h // (2 ** (n_levels - 1)))
    top_w = -(-w // (2 ** (n_levels - 1)))
    if top_h < 16 or top_w < 16:
        raise ImageTooSmall(
            f"coarsest level would be {top_w}x{top_h}; minimum is 16 per side")
    levels = [img]
    for _ in range(n_levels - 1):
        levels.append(downscale_half(levels[-1]))
    return levels


def crop_patch(img: np.ndarray, x: int, y: int, size: int) -> np.ndarray:
    img = np.asarray(img)
    h, w = img.shape[:2]
    if x < 0 or y < 0 or x + size > w or y + size > h:
        raise OutOfBounds(
            f"crop [{x}:{x + size}) x [{y}:{y + size}) leaves the {w}x{h} raster")
    return img[y:y + size, x:x + size].copy()


def anaglyph(reference: np.ndarray, warped: np.ndarray) -> np.ndarray:
    """Red channel from the reference, cyan (G and B) from the warped image.
    Aligned static content comes out gray; misalignment shows color fringes.
    """
    reference = np.asarray(reference, dtype=np.float64)
    warped = np.asarray(warped, dtype=np.float64)
    if reference.shape != warped.shape:
        raise SizeMismatch(f"{reference.shape} vs {warped.shape}")
    return np.stack([reference, warped, warped], axis=2)


def resize(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize mapping pixel centers to centers, edges replicated."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if out_w == w and out_h == h:
        return img.copy()
    # source coordinate for output center x: (x + 0.5) * w/out_w - 0.5
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[None, :]
    fy = (sy - y0)[:, None]
    out = ((1 - fy) * ((1 - fx) * img[np.ix_(y0, x0)] + fx * img[np.ix_(y0, x1)])
           + fy * ((1 - fx) * img[np.ix_(y1, x0)] + fx * img[np.ix_(y1, x1)]))
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PNG I/O: 8-bit, values mapped linearly between [0, 255] and [0, 1],
# round half up on write.
# ---------------------------------------------------------------------------

def _quantize(img: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_gray(path, img: np.ndarray) -> None:
    Image.fromarray(_quantize(np.asarray(img, dtype=np.float64)), mode="L").save(path)


def save_rgb(path, img: np.ndarray) -> None:
    Image.fromarray(_quantize(np.asarray(img, dtype=np.float64)), mode="RGB").save(path)


def load_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0
