"""Four-point RANSAC over block-matching correspondences.

Serves as the non-learned comparison baseline: robust to moving objects by
consensus, limited by the integer-pixel resolution of the block matcher.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import DegenerateCorners, InsufficientCorrespondences
from ..geometry import apply_points, normalize, solve_four_point


def _sad(a, b, y0, x0, ty, tx, block):
    return float(np.abs(a[y0:y0 + block, x0:x0 + block]
                        - b[ty:ty + block, tx:tx + block]).sum())


def _refine_subpixel(a, b, grid_u, grid_v, by0, bx0, block):
    """Parabolic sub-pixel refinement of integer SAD minima, one axis at a
    time; refinements are clamped to half a pixel."""
    h, w = a.shape
    ngy, ngx = grid_u.shape
    out_u = grid_u.astype(np.float64).copy()
    out_v = grid_v.astype(np.float64).copy()
    for gy in range(ngy):
        for gx in range(ngx):
            y0 = by0 + gy * block
            x0 = bx0 + gx * block
            ty = y0 + int(grid_v[gy, gx])
            tx = x0 + int(grid_u[gy, gx])
            if not (0 <= ty and ty + block <= h and 0 <= tx and tx + block <= w):
                continue
            s0 = _sad(a, b, y0, x0, ty, tx, block)
            if 0 <= tx - 1 and tx + 1 + block <= w:
                sm = _sad(a, b, y0, x0, ty, tx - 1, block)
                sp = _sad(a, b, y0, x0, ty, tx + 1, block)
                den = sm - 2.0 * s0 + sp
                if den > 1e-12:
                    out_u[gy, gx] += float(np.clip(0.5 * (sm - sp) / den, -0.5, 0.5))
            if 0 <= ty - 1 and ty + 1 + block <= h:
                sm = _sad(a, b, y0, x0, ty - 1, tx, block)
                sp = _sad(a, b, y0, x0, ty + 1, tx, block)
                den = sm - 2.0 * s0 + sp
                if den > 1e-12:
                    out_v[gy, gx] += float(np.clip(0.5 * (sm - sp) / den, -0.5, 0.5))
    return out_u, out_v


def _fit_least_squares(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT over all correspondences (SVD on the 2n x 9 system)."""
    def normalizer(pts):
        c = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.sqrt(((pts - c) ** 2).sum(axis=1)).mean(), 1e-12)
        t = np.array([[scale, 0, -scale * c[0]],
                      [0, scale, -scale * c[1]],
                      [0, 0, 1.0]])
        return t

    t1 = normalizer(src)
    t2 = normalizer(dst)
    s = apply_points(t1, src)
    d = apply_points(t2, dst)
    rows = []
    for (x, y), (xp, yp) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, xp * x, xp * y, xp])
        rows.append([0, 0, 0, -x, -y, -1, yp * x, yp * y, yp])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    return normalize(np.linalg.inv(t2) @ h @ t1)


def ransac_baseline(i1: np.ndarray, i2: np.ndarray, iters: int = 500,
                    inlier_tol: float = 1.0,
                    rng: np.random.Generator | int = 0,
                    block: int = 8, radius: int = 12) -> np.ndarray:
    """Estimate H with ``warp(i1, H) ~ i2`` from grid correspondences.

    Block-matching flow provides one correspondence per block center;
    classic 4-point RANSAC scores candidates by inlier count (reprojection
    within ``inlier_tol`` pixels) and the winner is refit by least squares
    on its consensus set.  Deterministic for a fixed seed.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    i1 = np.asarray(i1, dtype=np.float64)
    i2 = np.asarray(i2, dtype=np.float64)
    if min(i1.shape) < 2 * block:
        raise InsufficientCorrespondences(
            f"image {i1.shape} too small for block {block}")
    grid_u, grid_v, by0, bx0 = kernels.block_match_grid(i1, i2, block, radius)
    grid_u, grid_v = _refine_subpixel(i1, i2, grid_u, grid_v, by0, bx0, block)
    ngy, ngx = grid_u.shape
    cy = by0 + (block - 1) / 2.0 + np.arange(ngy) * block
    cx = bx0 + (block - 1) / 2.0 + np.arange(ngx) * block
    gx, gy = np.meshgrid(cx, cy)
    src = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dst = src + np.stack([grid_u.ravel(), grid_v.ravel()], axis=1)
    n = src.shape[0]
    if n < 4:
        raise InsufficientCorrespondences(f"only {n} grid correspondences")

    best_inliers = None
    best_count = -1
    best_err = np.inf
    for _ in range(iters):
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = solve_four_point(src[idx], dst[idx])
        except DegenerateCorners:
            continue
        # score without apply_points: a wild minimal-sample homography may
        # send grid points to infinity, which simply means "not an inlier"
        den = h[2, 0] * src[:, 0] + h[2, 1] * src[:, 1] + h[2, 2]
        ok = np.abs(den) > 1e-12
        safe = np.where(ok, den, 1.0)
        px = (h[0, 0] * src[:, 0] + h[0, 1] * src[:, 1] + h[0, 2]) / safe
        py = (h[1, 0] * src[:, 0] + h[1, 1] * src[:, 1] + h[1, 2]) / safe
        err = np.where(ok, np.hypot(px - dst[:, 0], py - dst[:, 1]), np.inf)
        inliers = err < inlier_tol
        count = int(inliers.sum())
        mean_err = float(err[inliers].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count = count
            best_err = mean_err
            best_inliers = inliers
    if best_inliers is None or best_count < 4:
        raise InsufficientCorrespondences(
            f"no consensus set of 4+ inliers in {iters} iterations")
    h = _fit_least_squares(src[best_inliers], dst[best_inliers])
    # re-qualify inliers against the refit and fit once more
    for _ in range(2):
        den = h[2, 0] * src[:, 0] + h[2, 1] * src[:, 1] + h[2, 2]
        ok = np.abs(den) > 1e-12
        safe = np.where(ok, den, 1.0)
        px = (h[0, 0] * src[:, 0] + h[0, 1] * src[:, 1] + h[0, 2]) / safe
        py = (h[1, 0] * src[:, 0] + h[1, 1] * src[:, 1] + h[1, 2]) / safe
        err = np.where(ok, np.hypot(px - dst[:, 0], py - dst[:, 1]), np.inf)
        inliers = err < inlier_tol
        if inliers.sum() < 4:
            break
        h = _fit_least_squares(src[inliers], dst[inliers])
    return h


def ransac_estimator(iters: int = 500, inlier_tol: float = 1.0, seed: int = 0,
                     block: int = 8, radius: int = 12):
    def est(i1, i2):
        return ransac_baseline(i1, i2, iters=iters, inlier_tol=inlier_tol,
                               rng=np.random.default_rng(seed),
                               block=block, radius=radius)

    return est
