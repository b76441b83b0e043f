"""Exact projective algebra on 3x3 homographies.

A homography is a plain ``(3, 3)`` float64 array, normalized so ``h[2, 2] == 1``
when that entry is non-negligible (Frobenius norm 1 otherwise).  A corner
displacement is an ``(8,)`` array ordered ``(du, dv)`` per corner, corners
fixed as top-left, top-right, bottom-right, bottom-left at pixel centers
``(0, 0), (W-1, 0), (W-1, H-1), (0, H-1)``.

Direction convention used throughout the package: the homography estimated
for an image pair ``(i1, i2)`` re-aligns the first image to the second, i.e.
``warp(i1, H) ~ i2``.  Equivalently H maps i1 pixel coordinates to the
coordinates of the corresponding content in i2.

All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCorners, PointAtInfinity, SingularMatrix

_EPS = 1e-12

# Fixed cross-scale matrix: halves pixel coordinates (one pyramid level down).
SCALE_DOWN = np.diag([0.5, 0.5, 1.0])
SCALE_UP = np.diag([2.0, 2.0, 1.0])


@dataclass(frozen=True)
class PatchFrame:
    """Pixel frame whose four corners parameterize a homography."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"frame must be at least 2x2, got {self.width}x{self.height}")

    def corners(self) -> np.ndarray:
        """(4, 2) corner coordinates in TL, TR, BR, BL order."""
        w, h = self.width - 1.0, self.height - 1.0
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def normalize(h: np.ndarray) -> np.ndarray:
    """Scale so h[2,2] == 1, or to unit Frobenius norm when h[2,2] ~ 0.

    Normalizing an already-normalized matrix is an exact no-op (division
    by 1.0).  The Frobenius branch fixes the sign so the first entry with
    magnitude above tolerance is positive, making the result unique.
    """
    h = np.asarray(h, dtype=np.float64).reshape(3, 3)
    if abs(h[2, 2]) > _EPS:
        return h / h[2, 2]
    norm = np.linalg.norm(h)
    if norm <= _EPS:
        raise SingularMatrix("zero homography matrix")
    if abs(norm - 1.0) > _EPS:  # keep re-normalization an exact no-op
        h = h / norm
    flat = h.ravel()
    lead = flat[np.abs(flat) > _EPS]
    if lead.size and lead[0] < 0:
        h = -h
    return h


def apply(h: np.ndarray, p) -> np.ndarray:
    """Map one point (x, y) through the homography with perspective divide."""
    x, y = float(p[0]), float(p[1])
    den = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if abs(den) <= _EPS:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
    return np.array([
        (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / den,
        (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / den,
    ])


def apply_points(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Map an (N, 2) array of points; raises if any denominator vanishes."""
    pts = np.asarray(pts, dtype=np.float64)
    den = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
    if np.any(np.abs(den) <= _EPS):
        raise PointAtInfinity("a point maps to infinity")
    out = np.empty_like(pts)
    out[:, 0] = (h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]) / den
    out[:, 1] = (h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]) / den
    return out


def _solve_partial_pivot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; raises DegenerateCorners
    when the largest available pivot falls below tolerance."""
    a = a.copy()
    b = b.copy()
    n = a.shape[0]
    for col in range(n):
        piv = col + np.argmax(np.abs(a[col:, col]))
        if abs(a[piv, col]) < _EPS:
            raise DegenerateCorners("singular corner-correspondence system")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        inv = 1.0 / a[col, col]
        for row in range(col + 1, n):
            f = a[row, col] * inv
            if f != 0.0:
                a[row, col:] -= f * a[col, col:]
                b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def solve_four_point(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Homography mapping four source points exactly onto four destinations.

    Solves the 8x8 linear system for (h11..h32) with h33 = 1.  Coordinates
    are shifted to their centroid first to keep the system well conditioned.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    center = src.mean(axis=0)
    s = src - center
    d = dst - center
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = s[i]
        xp, yp = d[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y]
        b[2 * i] = xp
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -yp * x, -yp * y]
        b[2 * i + 1] = yp
    sol = _solve_partial_pivot(a, b)
    hc = np.array([[sol[0], sol[1], sol[2]],
                   [sol[3], sol[4], sol[5]],
                   [sol[6], sol[7], 1.0]])
    t_fwd = np.array([[1.0, 0.0, center[0]], [0.0, 1.0, center[1]], [0.0, 0.0, 1.0]])
    t_back = np.array([[1.0, 0.0, -center[0]], [0.0, 1.0, -center[1]], [0.0, 0.0, 1.0]])
    return normalize(t_fwd @ hc @ t_back)


def displacement_to_homography(d: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Homography mapping the frame corners onto corners + displacement."""
    d = np.asarray(d, dtype=np.float64).reshape(4, 2)
    corners = frame.corners()
    return solve_four_point(corners, corners + d)


def homography_to_displacement(h: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Per-corner displacement (8,) induced by the homography on the frame."""
    corners = frame.corners()
    return (apply_points(h, corners) - corners).reshape(8)


def invert(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if abs(np.linalg.det(h)) <= _EPS:
        raise SingularMatrix("homography is singular")
    return normalize(np.linalg.inv(h))


def compose_across_scale(h_fine: np.ndarray, h_coarse: np.ndarray) -> np.ndarray:
    """Combine a refinement at the fine level with the coarse-level estimate:
    ``h_fine @ S^-1 @ h_coarse @ S`` where S halves pixel coordinates."""
    return normalize(h_fine @ SCALE_UP @ h_coarse @ SCALE_DOWN)


def to_finer_level(h: np.ndarray) -> np.ndarray:
    """Re-express a homography one pyramid level finer (coordinates doubled)."""
    return normalize(SCALE_UP @ h @ SCALE_DOWN)


def to_coarser_level(h: np.ndarray, steps: int = 1) -> np.ndarray:
    """Re-express a homography ``steps`` pyramid levels coarser."""
    out = np.asarray(h, dtype=np.float64)
    for _ in range(steps):
        out = SCALE_DOWN @ out @ SCALE_UP
    return normalize(out)


def mean_corner_error(h_est: np.ndarray, h_gt: np.ndarray, frame: PatchFrame) -> float:
    """Mean Euclidean distance between the four frame corners mapped by the
    estimated and by the reference homography."""
    corners = frame.corners()
    pe = apply_points(h_est, corners)
    pg = apply_points(h_gt, corners)
    return float(np.sqrt(((pe - pg) ** 2).sum(axis=1)).mean())


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def identity() -> np.ndarray:
    return np.eye(3)
