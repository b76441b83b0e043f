"""Procedural dynamic-scene clips with exact per-frame dynamics masks.

Each clip is a static, value-noise textured background with opaque textured
sprites moving across it at constant speed, bouncing off the frame borders.
The mask of frame t is the exact union of sprite supports at time t, so
mask ground truth is exact by construction rather than estimated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid


@dataclass(frozen=True)
class SceneConfig:
    frame_size: int = 256
    n_frames: int = 12
    bg_octaves: int = 4
    n_sprites: int = 2
    sprite_area_frac: float = 0.2   # total coverage target, all sprites combined
    sprite_speed: float = 5.0       # pixels per frame
    bg_lo: float = 0.05
    bg_hi: float = 0.95

    def validate(self) -> None:
        if self.frame_size < 32:
            raise ConfigInvalid(f"frame_size {self.frame_size} < 32")
        if self.n_frames < 10:
            raise ConfigInvalid(f"clip length {self.n_frames} < 10")
        if self.bg_octaves < 1:
            raise ConfigInvalid("need at least one background octave")
        if not 0 <= self.n_sprites <= 4:
            raise ConfigInvalid(f"sprite count {self.n_sprites} outside 0..4")
        if not 0.0 <= self.sprite_area_frac <= 0.6:
            raise ConfigInvalid(f"sprite area fraction {self.sprite_area_frac} outside [0, 0.6]")
        if not 0.0 <= self.sprite_speed <= 25.0:
            raise ConfigInvalid(f"sprite speed {self.sprite_speed} outside [0, 25]")
        if not 0.0 <= self.bg_lo < self.bg_hi <= 1.0:
            raise ConfigInvalid("background range must satisfy 0 <= lo < hi <= 1")


def _bilinear_upsample(grid: np.ndarray, size: int) -> np.ndarray:
    gh, gw = grid.shape
    sy = np.linspace(0.0, gh - 1.0, size)
    sx = np.linspace(0.0, gw - 1.0, size)
    y0 = np.minimum(sy.astype(np.int64), gh - 2)
    x0 = np.minimum(sx.astype(np.int64), gw - 2)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    return ((1 - fy) * ((1 - fx) * grid[np.ix_(y0, x0)] + fx * grid[np.ix_(y0, x0 + 1)])
            + fy * ((1 - fx) * grid[np.ix_(y0 + 1, x0)] + fx * grid[np.ix_(y0 + 1, x0 + 1)]))


def value_noise(rng: np.random.Generator, size: int, octaves: int) -> np.ndarray:
    """Sum of bilinearly upsampled random lattices, halving amplitude per
    octave, normalized to [0, 1]."""
    img = np.zeros((size, size))
    for i in range(octaves):
        nodes = min(4 * 2 ** i + 1, size)
        img += 0.5 ** i * _bilinear_upsample(rng.random((nodes, nodes)), size)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.full((size, size), 0.5)
    return (img - lo) / (hi - lo)


# sprites bounce inside this margin so they never enter the 5-px boundary
# band that static-clip detection inspects
_EDGE_MARGIN = 8


class _Sprite:
    def __init__(self, rng: np.random.Generator, frame_size: int, area: float,
                 speed: float):
        self.shape = "disk" if rng.random() < 0.5 else "square"
        if self.shape == "disk":
            self.radius = max(2.0, np.sqrt(area / np.pi))
        else:
            self.radius = max(2.0, np.sqrt(area) / 2.0)  # half side
        self.lo = self.radius + _EDGE_MARGIN
        self.hi = frame_size - 1 - self.radius - _EDGE_MARGIN
        if self.lo >= self.hi:
            raise ConfigInvalid("sprite too large for the frame")
        self.cx = rng.uniform(self.lo, self.hi)
        self.cy = rng.uniform(self.lo, self.hi)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        self.vx = speed * np.cos(theta)
        self.vy = speed * np.sin(theta)
        tex_size = int(np.ceil(2 * self.radius)) + 3
        self.tex = 0.25 + 0.5 * value_noise(rng, tex_size, 3)
        self.tex_offset = rng.uniform(-0.2, 0.2)

    def step(self) -> None:
        self.cx += self.vx
        self.cy += self.vy
        if self.cx < self.lo:
            self.cx = 2 * self.lo - self.cx
            self.vx = -self.vx
        elif self.cx > self.hi:
            self.cx = 2 * self.hi - self.cx
            self.vx = -self.vx
        if self.cy < self.lo:
            self.cy = 2 * self.lo - self.cy
            self.vy = -self.vy
        elif self.cy > self.hi:
            self.cy = 2 * self.hi - self.cy
            self.vy = -self.vy

    def support(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        if self.shape == "disk":
            return (xs - self.cx) ** 2 + (ys - self.cy) ** 2 <= self.radius ** 2
        return (np.abs(xs - self.cx) <= self.radius) & (np.abs(ys - self.cy) <= self.radius)

    def paint(self, frame: np.ndarray, ys: np.ndarray, xs: np.ndarray,
              mask: np.ndarray) -> None:
        sup = self.support(ys, xs)
        th, tw = self.tex.shape
        ty = np.clip(np.round(ys - self.cy + self.radius).astype(np.int64), 0, th - 1)
        tx = np.clip(np.round(xs - self.cx + self.radius).astype(np.int64), 0, tw - 1)
        vals = np.clip(self.tex[ty, tx] + self.tex_offset, 0.0, 1.0)
        frame[sup] = vals[sup]
        mask[sup] = 1.0


def synth_dynamic_clip(rng_seed: int, config: SceneConfig):
    """Render one clip; returns (frames, masks), both lists of (S, S) arrays.
    Deterministic for a fixed seed."""
    config.validate()
    rng = np.random.default_rng(rng_seed)
    size = config.frame_size
    background = config.bg_lo + (config.bg_hi - config.bg_lo) * value_noise(
        rng, size, config.bg_octaves)
    per_sprite_area = (config.sprite_area_frac * size * size / config.n_sprites
                       if config.n_sprites else 0.0)
    sprites = [_Sprite(rng, size, per_sprite_area, config.sprite_speed)
               for _ in range(config.n_sprites)]
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    frames = []
    masks = []
    for t in range(config.n_frames):
        if t > 0:
            for sp in sprites:
                sp.step()
        frame = background.copy()
        mask = np.zeros((size, size))
        for sp in sprites:
            sp.paint(frame, ys, xs, mask)
        frames.append(frame)
        masks.append(mask)
    return frames, masks
