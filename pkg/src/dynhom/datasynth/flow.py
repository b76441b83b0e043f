"""Block-matching optical flow and flow-derived dynamics masks.

A flow field is an ``(H, W, 2)`` float64 array holding per-pixel (u, v)
displacement in pixels, u along x (columns), v along y (rows).
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import SizeMismatch


def _dense_from_grid(grid_u, grid_v, block, by0, bx0, h, w):
    """Bilinear interpolation of per-block flow to per-pixel, clamped to the
    block-center hull at the borders."""
    ngy, ngx = grid_u.shape
    cy0 = by0 + (block - 1) / 2.0
    cx0 = bx0 + (block - 1) / 2.0
    gy = np.clip((np.arange(h) - cy0) / block, 0.0, ngy - 1.0)
    gx = np.clip((np.arange(w) - cx0) / block, 0.0, ngx - 1.0)
    y0 = np.minimum(gy.astype(np.int64), ngy - 2) if ngy > 1 else np.zeros(h, np.int64)
    x0 = np.minimum(gx.astype(np.int64), ngx - 2) if ngx > 1 else np.zeros(w, np.int64)
    y1 = np.minimum(y0 + 1, ngy - 1)
    x1 = np.minimum(x0 + 1, ngx - 1)
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]

    def interp(g):
        return ((1 - fy) * ((1 - fx) * g[np.ix_(y0, x0)] + fx * g[np.ix_(y0, x1)])
                + fy * ((1 - fx) * g[np.ix_(y1, x0)] + fx * g[np.ix_(y1, x1)]))

    return np.stack([interp(grid_u), interp(grid_v)], axis=2)


def block_matching_flow(frame_a: np.ndarray, frame_b: np.ndarray,
                        block: int = 16, radius: int = 8) -> np.ndarray:
    """Exhaustive SAD search per block-center grid point, densified bilinearly.

    Ties resolve toward the smallest displacement magnitude, then
    lexicographically by (u, v), so identical frames give exactly zero flow.
    """
    frame_a = np.asarray(frame_a, dtype=np.float64)
    frame_b = np.asarray(frame_b, dtype=np.float64)
    if frame_a.shape != frame_b.shape:
        raise SizeMismatch(f"{frame_a.shape} vs {frame_b.shape}")
    if block < 4:
        raise ValueError("block must be at least 4")
    if radius < 1:
        raise ValueError("radius must be at least 1")
    h, w = frame_a.shape
    if h < block or w < block:
        raise SizeMismatch(f"frames {w}x{h} smaller than block {block}")
    grid_u, grid_v, by0, bx0 = kernels.block_match_grid(frame_a, frame_b, block, radius)
    return _dense_from_grid(grid_u, grid_v, block, by0, bx0, h, w)


def flow_magnitude(flow: np.ndarray) -> np.ndarray:
    return np.hypot(flow[:, :, 0], flow[:, :, 1])


def moving_area_ratio(flow: np.ndarray) -> float:
    """Fraction of pixels displaced by more than one pixel."""
    return float((flow_magnitude(flow) > 1.0).mean())


def mask_from_flow(flow: np.ndarray) -> np.ndarray:
    """Binary mask marking pixels whose flow magnitude exceeds one pixel."""
    return (flow_magnitude(flow) > 1.0).astype(np.float64)
