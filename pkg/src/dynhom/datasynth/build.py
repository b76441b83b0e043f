"""Dataset synthesis orchestration: clips to pairs to the on-disk container.

Per-clip and per-sample seeds derive from (master_seed, clip_index[, sample,
attempt]) so a build is reproducible and independent of any worker
scheduling.  Static builds pair each patch with itself across an identical
frame (the fully-alignable regime); dynamic builds sample two frames up to
five apart from a sprite clip.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ConfigInvalid
from .pairs import TrainingSample, generate_pair
from .scenes import SceneConfig, synth_dynamic_clip
from .store import write_dataset

_MAX_ATTEMPTS = 500


def _seed_from(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1)[0])


def build_dataset(out_path, *, n_samples: int, patch_size: int,
                  perturb_range: float, master_seed: int, dynamic: bool,
                  samples_per_clip: int = 10, frames_per_clip: int = 12,
                  frame_size: int = 256, bg_octaves: int = 4,
                  sprite_count_range: tuple[int, int] = (1, 3),
                  sprite_area_range: tuple[float, float] = (0.05, 0.35),
                  speed_range: tuple[float, float] = (2.0, 12.0),
                  ratio_range: tuple[float, float] | None = None,
                  preset: str = "desk") -> Path:
    """Generate ``n_samples`` training samples and write the container.

    ``ratio_range`` optionally constrains each sample's dynamic-area ratio
    (patch-level); crops and perturbations are redrawn deterministically
    until the constraint holds.
    """
    if n_samples <= 0 or samples_per_clip <= 0:
        raise ConfigInvalid("sample counts must be positive")
    n_clips = -(-n_samples // samples_per_clip)
    samples: list[TrainingSample] = []
    for ci in range(n_clips):
        crng = np.random.default_rng(_seed_from(master_seed, ci, 0xC11F))
        if dynamic:
            cfg = SceneConfig(
                frame_size=frame_size,
                n_frames=frames_per_clip,
                bg_octaves=bg_octaves,
                n_sprites=int(crng.integers(sprite_count_range[0],
                                            sprite_count_range[1] + 1)),
                sprite_area_frac=float(crng.uniform(*sprite_area_range)),
                sprite_speed=float(crng.uniform(*speed_range)),
            )
        else:
            cfg = SceneConfig(frame_size=frame_size, n_frames=frames_per_clip,
                              bg_octaves=bg_octaves, n_sprites=0,
                              sprite_area_frac=0.0, sprite_speed=0.0)
        frames, masks = synth_dynamic_clip(_seed_from(master_seed, ci, 0x5CE2E),
                                           cfg)
        n_frames = len(frames)
        for si in range(samples_per_clip):
            if len(samples) == n_samples:
                break
            srng = np.random.default_rng(_seed_from(master_seed, ci, si))
            j = int(srng.integers(0, n_frames))
            if dynamic:
                dk = int(srng.integers(1, 6)) * (1 if srng.random() < 0.5 else -1)
                k = min(max(j + dk, 0), n_frames - 1)
                if k == j:
                    k = j + 1 if j + 1 < n_frames else j - 1
            else:
                k = j
            sample = None
            for attempt in range(_MAX_ATTEMPTS):
                cand = generate_pair(
                    frames[j], frames[k], masks[j], masks[k],
                    rng_seed=_seed_from(master_seed, ci, si, attempt),
                    perturb_range=perturb_range, patch_size=patch_size)
                if ratio_range is None or (
                        ratio_range[0] <= cand.dynamic_area_ratio <= ratio_range[1]):
                    sample = cand
                    break
            if sample is None:
                raise ConfigInvalid(
                    f"clip {ci} sample {si}: no crop satisfied the ratio "
                    f"range {ratio_range} in {_MAX_ATTEMPTS} attempts")
            samples.append(sample)
    meta = {
        "preset": preset,
        "seed": master_seed,
        "dynamic": dynamic,
        "patch_size": patch_size,
        "perturb_range": perturb_range,
        "frame_size": frame_size,
        "n_clips": n_clips,
        "samples_per_clip": samples_per_clip,
        "ratio_range": list(ratio_range) if ratio_range else None,
    }
    write_dataset(out_path, samples, meta)
    return Path(out_path)
