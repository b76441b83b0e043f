import numpy as np
import pytest

from dynhom import imaging
from dynhom.datasynth import (
    SceneConfig,
    boundary_static,
    block_matching_flow,
    extract_static_clips,
    generate_pair,
    load_dataset,
    mask_from_flow,
    moving_area_ratio,
    synth_dynamic_clip,
    write_dataset,
)
from dynhom.datasynth.scenes import value_noise
from dynhom.errors import ConfigInvalid, SizeMismatch
from dynhom.geometry import PatchFrame, displacement_to_homography, homography_to_displacement


def noise256(seed, octaves=5):
    return value_noise(np.random.default_rng(seed), 256, octaves)


def paint_disk(frame, cx, cy, radius, rng):
    ys, xs = np.mgrid[0:frame.shape[0], 0:frame.shape[1]]
    sup = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    out = frame.copy()
    out[sup] = 0.2 + 0.6 * rng.random(int(sup.sum()))
    return out, sup


# --- boundary_static -------------------------------------------------------

def test_boundary_identical_frames_static():
    f = noise256(0)
    assert boundary_static(f, f)


def test_boundary_global_shift_not_static():
    big = value_noise(np.random.default_rng(1), 300, 5)
    a = big[:256, :256]
    b = big[:256, 4:260]
    assert not boundary_static(a, b)


def test_boundary_center_sprite_static():
    bg = noise256(2)
    rng = np.random.default_rng(3)
    a, _ = paint_disk(bg, 128, 128, 40, rng)
    b, _ = paint_disk(bg, 140, 140, 40, rng)
    assert boundary_static(a, b)


def test_boundary_size_mismatch():
    with pytest.raises(SizeMismatch):
        boundary_static(np.zeros((128, 128)), np.zeros((128, 128)))


# --- block_matching_flow ---------------------------------------------------

def test_flow_identical_frames_zero():
    f = noise256(4)
    flow = block_matching_flow(f, f, block=16, radius=4)
    assert (flow == 0).all()


def test_flow_global_shift_recovered():
    big = value_noise(np.random.default_rng(5), 280, 5)
    a = big[:256, 3:259]
    b = big[:256, :256]  # content of a appears 3 px to the right in b
    flow = block_matching_flow(a, b, block=16, radius=6)
    inner = flow[16:-16, 16:-16]
    frac = ((inner[:, :, 0] == 3.0) & (inner[:, :, 1] == 0.0)).mean()
    assert frac >= 0.9


def test_flow_sprite_motion_localized():
    bg = noise256(6)
    rng = np.random.default_rng(7)
    a, sup_a = paint_disk(bg, 100, 100, 30, rng)
    rng = np.random.default_rng(7)
    b, sup_b = paint_disk(bg, 106, 106, 30, rng)
    flow = block_matching_flow(a, b, block=8, radius=8)
    mag = np.hypot(flow[:, :, 0], flow[:, :, 1])
    moving = mag > 1.0
    near = sup_a | sup_b
    # dilate the sprite support by ~1.5 block widths
    for _ in range(12):
        near = (near | np.roll(near, 1, 0) | np.roll(near, -1, 0)
                | np.roll(near, 1, 1) | np.roll(near, -1, 1))
    assert not (moving & ~near).any()
    assert (moving & sup_a).sum() >= 0.5 * sup_a.sum()


def test_flow_size_mismatch():
    with pytest.raises(SizeMismatch):
        block_matching_flow(np.zeros((64, 64)), np.zeros((64, 65)))


# --- moving_area_ratio / mask_from_flow ------------------------------------

def test_moving_ratio_zero_flow():
    assert moving_area_ratio(np.zeros((32, 32, 2))) == 0.0


def test_moving_ratio_uniform_displacement():
    flow = np.full((32, 32, 2), [2.0, 0.0])
    assert moving_area_ratio(flow) == 1.0


def test_moving_ratio_sprite_fraction():
    bg = noise256(8)
    rng = np.random.default_rng(9)
    radius = np.sqrt(0.2 * 256 * 256 / np.pi)
    a, _ = paint_disk(bg, 128, 128, radius, rng)
    rng = np.random.default_rng(9)
    b, _ = paint_disk(bg, 131, 132, radius, rng)
    flow = block_matching_flow(a, b, block=8, radius=8)
    assert abs(moving_area_ratio(flow) - 0.2) <= 0.05


def test_mask_from_flow_zero():
    assert (mask_from_flow(np.zeros((16, 16, 2))) == 0).all()


def test_mask_from_flow_subpixel_magnitude():
    flow = np.full((16, 16, 2), 0.5)  # magnitude ~0.707
    assert (mask_from_flow(flow) == 0).all()


def test_mask_from_flow_marks_large_flow():
    flow = np.zeros((16, 16, 2))
    flow[4:8, 4:8] = [6.0, 6.0]
    mask = mask_from_flow(flow)
    assert (mask[4:8, 4:8] == 1).all()
    assert mask.sum() == 16


# --- extract_static_clips --------------------------------------------------

def test_extract_identical_frames_single_clip():
    f = noise256(10)
    clips = extract_static_clips([f] * 20)
    assert len(clips) == 1
    assert clips[0].frames == list(range(20))


def test_extract_panning_sequence_rejected():
    big = value_noise(np.random.default_rng(11), 360, 5)
    frames = []
    off = 0
    for i in range(20):
        if i >= 9:
            off += 4  # camera pans 4 px per frame from frame 9 on
        frames.append(big[:256, off:off + 256])
    clips = extract_static_clips(frames)
    assert clips == []


def test_extract_sprite_clip_kept():
    frames, _ = synth_dynamic_clip(12, SceneConfig(
        n_frames=15, n_sprites=1, sprite_area_frac=0.1, sprite_speed=4.0))
    clips = extract_static_clips(frames)
    assert len(clips) == 1
    assert len(clips[0]) == 15
    assert all(r <= 0.65 for r in clips[0].flow_ratios)


# --- synth_dynamic_clip ----------------------------------------------------

def test_synth_no_sprites_static():
    frames, masks = synth_dynamic_clip(13, SceneConfig(n_sprites=0, n_frames=10))
    for f, m in zip(frames, masks):
        assert (f == frames[0]).all()
        assert (m == 0).all()


def test_synth_sprite_area_fraction():
    cfg = SceneConfig(n_frames=10, n_sprites=1, sprite_area_frac=0.2, sprite_speed=5.0)
    _, masks = synth_dynamic_clip(14, cfg)
    for m in masks:
        assert abs(m.mean() - 0.2) < 0.03


def test_synth_deterministic():
    cfg = SceneConfig(n_frames=10, n_sprites=3, sprite_area_frac=0.3)
    f1, m1 = synth_dynamic_clip(15, cfg)
    f2, m2 = synth_dynamic_clip(15, cfg)
    for a, b in zip(f1 + m1, f2 + m2):
        assert (a == b).all()


def test_synth_config_validation():
    with pytest.raises(ConfigInvalid):
        synth_dynamic_clip(0, SceneConfig(n_frames=5))
    with pytest.raises(ConfigInvalid):
        synth_dynamic_clip(0, SceneConfig(n_sprites=7))
    with pytest.raises(ConfigInvalid):
        synth_dynamic_clip(0, SceneConfig(sprite_area_frac=0.9))
    with pytest.raises(ConfigInvalid):
        synth_dynamic_clip(0, SceneConfig(sprite_speed=40.0))


# --- generate_pair ---------------------------------------------------------

def test_pair_identity_case():
    f = noise256(16)
    zeros = np.zeros_like(f)
    s = generate_pair(f, f, zeros, zeros, rng_seed=1, perturb_range=0.0,
                      patch_size=64)
    assert (s.patch_a == s.patch_b).all()
    assert np.allclose(s.gt_homography, np.eye(3), atol=1e-12)
    assert s.dynamic_area_ratio == 0.0


def test_pair_alignment_oracle_static():
    f = noise256(17)
    zeros = np.zeros_like(f)
    errs = []
    for seed in range(10):
        s = generate_pair(f, f, zeros, zeros, rng_seed=seed, perturb_range=8.0,
                          patch_size=64)
        realigned = imaging.warp(s.patch_b, s.gt_homography, 64, 64)
        valid = imaging.warp_any(np.ones((64, 64)), s.gt_homography, 64, 64) > 0.999
        valid[:2, :] = valid[-2:, :] = False
        valid[:, :2] = valid[:, -2:] = False
        errs.append(np.abs(realigned - s.patch_a)[valid].mean())
    assert max(errs) < 0.02


def test_pair_round_trip_displacement():
    f = noise256(18)
    zeros = np.zeros_like(f)
    frame = PatchFrame(64, 64)
    for seed in range(20):
        s = generate_pair(f, f, zeros, zeros, rng_seed=seed, perturb_range=8.0,
                          patch_size=64)
        back = homography_to_displacement(
            displacement_to_homography(s.gt_displacement, frame), frame)
        assert np.abs(back - s.gt_displacement).max() < 1e-7


def test_pair_sprite_ratio_and_background_alignment():
    frames, masks = synth_dynamic_clip(19, SceneConfig(
        n_frames=10, n_sprites=1, sprite_area_frac=0.06, sprite_speed=5.0))
    # 0.06 of a 256-frame is ~25% of a 128 patch; search for a seed whose crop
    # actually contains the sprite at roughly that coverage
    hit = None
    for seed in range(50):
        s = generate_pair(frames[0], frames[3], masks[0], masks[3],
                          rng_seed=seed, perturb_range=16.0, patch_size=128)
        if abs(s.dynamic_area_ratio - 0.25) <= 0.05:
            hit = s
            break
    assert hit is not None
    realigned = imaging.warp(hit.patch_b, hit.gt_homography, 128, 128)
    valid = imaging.warp_any(np.ones((128, 128)), hit.gt_homography, 128, 128) > 0.999
    valid[:2, :] = valid[-2:, :] = False
    valid[:, :2] = valid[:, -2:] = False
    background = valid & (hit.mask_a < 0.5) & (hit.mask_b < 0.5)
    # the sprite moved between the frames; the static background still aligns
    err = np.abs(realigned - hit.patch_a)[background]
    assert err.mean() < 0.03


def test_pair_ratio_equals_mask_mean_bit_exact():
    frames, masks = synth_dynamic_clip(20, SceneConfig(
        n_frames=10, n_sprites=2, sprite_area_frac=0.2))
    s = generate_pair(frames[1], frames[4], masks[1], masks[4],
                      rng_seed=3, perturb_range=8.0, patch_size=64)
    assert s.dynamic_area_ratio == s.mask_a.mean()


def test_pair_margin_rule_enforced():
    f = np.zeros((96, 96))
    with pytest.raises(ConfigInvalid):
        generate_pair(f, f, f, f, rng_seed=0, perturb_range=32.0, patch_size=64)


# --- dataset container -----------------------------------------------------

def build_small_dataset(seed=21, n=4):
    frames, masks = synth_dynamic_clip(seed, SceneConfig(
        n_frames=10, n_sprites=1, sprite_area_frac=0.1, sprite_speed=3.0))
    return [generate_pair(frames[i], frames[i + 2], masks[i], masks[i + 2],
                          rng_seed=100 + i, perturb_range=8.0, patch_size=64)
            for i in range(n)]


def test_dataset_write_load_round_trip(tmp_path):
    samples = build_small_dataset()
    write_dataset(tmp_path / "ds", samples, {"seed": 21, "preset": "desk"})
    ds = load_dataset(tmp_path / "ds")
    assert len(ds) == 4
    assert ds.patch_size == 64
    assert np.allclose(ds.displacement[0], samples[0].gt_displacement)
    assert np.allclose(ds.homography[2], samples[2].gt_homography)
    # 8-bit quantization bounds the raster round-trip error
    assert np.abs(ds.patch_a[1] - samples[1].patch_a).max() <= 0.5 / 255 + 1e-12
    assert set(np.unique(ds.mask_a)) <= {0.0, 1.0}
    assert ds.meta["preset"] == "desk"


def test_dataset_rebuild_bit_identical(tmp_path):
    samples = build_small_dataset()
    write_dataset(tmp_path / "d1", samples, {"seed": 21})
    write_dataset(tmp_path / "d2", samples, {"seed": 21})
    files1 = sorted((tmp_path / "d1").rglob("*"))
    files2 = sorted((tmp_path / "d2").rglob("*"))
    assert [f.name for f in files1] == [f.name for f in files2]
    for f1, f2 in zip(files1, files2):
        if f1.is_file():
            assert f1.read_bytes() == f2.read_bytes()
