"""Training-pair generation: crop, perturb corners, warp, crop again.

The ground-truth homography H of a sample is expressed in patch-local
coordinates and satisfies ``warp(patch_b, H) ~ patch_a`` on static content.
Equivalently: H maps patch_b pixel coordinates to the coordinates of the
corresponding content in patch_a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ConfigInvalid, DegenerateCorners, SizeMismatch
from ..geometry import PatchFrame, displacement_to_homography, normalize, translation


@dataclass
class TrainingSample:
    patch_a: np.ndarray          # (s, s) in [0, 1]
    patch_b: np.ndarray          # (s, s) in [0, 1]
    gt_displacement: np.ndarray  # (8,) corner offsets, patch-local
    gt_homography: np.ndarray    # (3, 3), patch-local, normalized
    mask_a: np.ndarray           # (s, s) binary
    mask_b: np.ndarray           # (s, s) binary
    dynamic_area_ratio: float    # mean of mask_a

    @property
    def patch_size(self) -> int:
        return self.patch_a.shape[0]


def generate_pair(frame_j: np.ndarray, frame_k: np.ndarray,
                  gt_mask_j: np.ndarray, gt_mask_k: np.ndarray,
                  rng_seed: int, perturb_range: float,
                  patch_size: int = 128, max_retries: int = 16) -> TrainingSample:
    """Build one training sample from two frames of a static clip.

    Crops ``patch_a`` at a random location leaving a margin of the perturb
    range on all sides, draws eight i.i.d. uniform corner offsets in
    [-perturb_range, +perturb_range], solves for the homography, samples
    ``patch_b`` from ``frame_k`` through that homography at the same
    location, and carries both masks through the identical crop/warp.
    """
    frame_j = np.asarray(frame_j, dtype=np.float64)
    frame_k = np.asarray(frame_k, dtype=np.float64)
    gt_mask_j = np.asarray(gt_mask_j, dtype=np.float64)
    gt_mask_k = np.asarray(gt_mask_k, dtype=np.float64)
    if not (frame_j.shape == frame_k.shape == gt_mask_j.shape == gt_mask_k.shape):
        raise SizeMismatch("frames and masks must share dimensions")
    h, w = frame_j.shape
    margin = int(np.ceil(perturb_range)) + 1
    if patch_size + 2 * margin > min(h, w):
        raise ConfigInvalid(
            f"patch {patch_size} plus margin {margin} does not fit in {w}x{h} frames")

    rng = np.random.default_rng(rng_seed)
    x_p = int(rng.integers(margin, w - patch_size - margin + 1))
    y_p = int(rng.integers(margin, h - patch_size - margin + 1))
    frame = PatchFrame(patch_size, patch_size)

    h_local = None
    d = None
    for _ in range(max_retries):
        d = rng.uniform(-perturb_range, perturb_range, size=8)
        try:
            h_local = displacement_to_homography(d, frame)
            break
        except DegenerateCorners:
            continue
    if h_local is None:
        raise DegenerateCorners(
            f"no valid corner perturbation found in {max_retries} draws")

    patch_a = frame_j[y_p:y_p + patch_size, x_p:x_p + patch_size].copy()
    mask_a = gt_mask_j[y_p:y_p + patch_size, x_p:x_p + patch_size].copy()

    # sample frame_k through the full-image homography, directly on the crop
    # window: output pixel c reads frame_k at H_full(c + p) with
    # H_full = T(p) H_local T(-p), i.e. at (H_local(c) + p).
    h_full = normalize(translation(x_p, y_p) @ h_local @ translation(-x_p, -y_p))
    sampler = h_full @ translation(x_p, y_p)
    patch_b = np.clip(
        kernels.warp_bilinear(frame_k, sampler, patch_size, patch_size), 0.0, 1.0)
    mask_b = (kernels.warp_bilinear(gt_mask_k, sampler, patch_size, patch_size)
              >= 0.5).astype(np.float64)

    return TrainingSample(
        patch_a=patch_a,
        patch_b=patch_b,
        gt_displacement=d,
        gt_homography=h_local,
        mask_a=mask_a,
        mask_b=mask_b,
        dynamic_area_ratio=float(mask_a.mean()),
    )
