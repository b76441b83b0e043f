"""Static-clip detection on 256x256 frame sequences.

A clip counts as static when the camera does not move; scene motion inside
the frame is allowed.  Camera motion is detected from the 5-pixel outer
boundary: the boundary is split into 32 blocks of 32x5 pixels (8 per side,
the 5x5 corners belonging to both adjacent sides), a block is unchanged when
more than 90% of its pixels change intensity by at most 6.67 on the 0..255
scale, and a frame pair has no camera motion when more than 25% of blocks
are unchanged.  The detector deliberately favors precision over recall.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SizeMismatch
from .flow import block_matching_flow, moving_area_ratio

FRAME_SIZE = 256
_BOUNDARY_THICKNESS = 5
_BLOCK_LEN = 32
_DELTA_C = 6.67 / 255.0
_PIXEL_FRACTION = 0.90
_BLOCK_FRACTION = 0.25
FLOW_SKIP = 7
MAX_MOVING_RATIO = 0.65
MIN_CLIP_LEN = 10


def _boundary_blocks(img: np.ndarray):
    t = _BOUNDARY_THICKNESS
    n = FRAME_SIZE // _BLOCK_LEN
    for i in range(n):
        lo = i * _BLOCK_LEN
        hi = lo + _BLOCK_LEN
        yield img[:t, lo:hi]            # top
        yield img[-t:, lo:hi]           # bottom
        yield img[lo:hi, :t]            # left
        yield img[lo:hi, -t:]           # right


def boundary_unchanged_fraction(frame_a: np.ndarray, frame_b: np.ndarray) -> float:
    """Fraction of the 32 boundary blocks that are unchanged between frames."""
    frame_a = np.asarray(frame_a, dtype=np.float64)
    frame_b = np.asarray(frame_b, dtype=np.float64)
    if frame_a.shape != (FRAME_SIZE, FRAME_SIZE) or frame_b.shape != (FRAME_SIZE, FRAME_SIZE):
        raise SizeMismatch(
            f"boundary test requires {FRAME_SIZE}x{FRAME_SIZE} frames, "
            f"got {frame_a.shape} and {frame_b.shape}")
    diff = np.abs(frame_a - frame_b)
    unchanged = 0
    total = 0
    for block_a in _boundary_blocks(diff):
        total += 1
        if (block_a <= _DELTA_C).mean() > _PIXEL_FRACTION:
            unchanged += 1
    return unchanged / total


def boundary_static(frame_a: np.ndarray, frame_b: np.ndarray) -> bool:
    """True when more than 25% of boundary blocks stay the same."""
    return boundary_unchanged_fraction(frame_a, frame_b) > _BLOCK_FRACTION


@dataclass
class ClipManifest:
    """One detected static clip: frame indices plus per-pair motion stats."""

    clip_id: int
    frames: list[int]
    static: bool = True
    boundary_fractions: list[float] = field(default_factory=list)
    flow_ratios: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "frames": list(self.frames),
            "static": self.static,
            "boundary_unchanged_fractions": [round(f, 6) for f in self.boundary_fractions],
            "flow_moving_ratios": [round(f, 6) for f in self.flow_ratios],
        }


def extract_static_clips(frames: list[np.ndarray], *, block: int = 16,
                         radius: int = 8) -> list[ClipManifest]:
    """Greedy scan for static clips of length >= 10.

    A clip grows while (a) each consecutive pair is boundary-static,
    (b) every frame is also boundary-static against the clip's first frame
    (guards against drift), and (c) block-matching flow across a 7-frame
    skip keeps the moving-area ratio at or below 0.65.  The scan restarts
    at the frame that broke the clip.
    """
    clips: list[ClipManifest] = []
    n = len(frames)
    i = 0
    clip_id = 0
    while i < n:
        boundary_fracs: list[float] = []
        flow_ratios: list[float] = []
        end = i + 1
        while end < n:
            frac_pair = boundary_unchanged_fraction(frames[end - 1], frames[end])
            if frac_pair <= _BLOCK_FRACTION:
                break
            if not boundary_static(frames[i], frames[end]):
                break
            if end - i >= FLOW_SKIP:
                flow = block_matching_flow(frames[end - FLOW_SKIP], frames[end],
                                           block=block, radius=radius)
                ratio = moving_area_ratio(flow)
                if ratio > MAX_MOVING_RATIO:
                    break
                flow_ratios.append(ratio)
            boundary_fracs.append(frac_pair)
            end += 1
        if end - i >= MIN_CLIP_LEN:
            clips.append(ClipManifest(
                clip_id=clip_id,
                frames=list(range(i, end)),
                boundary_fractions=boundary_fracs,
                flow_ratios=flow_ratios,
            ))
            clip_id += 1
        i = end
    return clips
