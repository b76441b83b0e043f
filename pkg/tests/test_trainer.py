import csv

import numpy as np
import pytest

from dynhom import imaging
from dynhom.datasynth.build import build_dataset
from dynhom.datasynth.scenes import value_noise
from dynhom.datasynth.store import load_dataset
from dynhom.errors import ConfigInvalid, DatasetEmpty, InsufficientCorrespondences
from dynhom.geometry import (
    PatchFrame,
    displacement_to_homography,
    mean_corner_error,
    translation,
)
from dynhom.nnruntime import Tensor
from dynhom.trainer import (
    LossWeights,
    evaluate,
    homography_loss,
    identity_estimator,
    mask_loss,
    model_estimator,
    oracle_estimator,
    ransac_baseline,
    residual_displacement_targets,
    total_loss,
    train,
)
from dynhom.trainer.loop import TrainConfig, _phase_of, load_model

LN2 = float(np.log(2.0))


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    build_dataset(root / "train", n_samples=64, patch_size=64, perturb_range=8.0,
                  master_seed=7, dynamic=False, samples_per_clip=8)
    return load_dataset(root / "train")


@pytest.fixture(scope="module")
def mixed_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dsmix")
    build_dataset(root / "mix", n_samples=40, patch_size=64, perturb_range=8.0,
                  master_seed=8, dynamic=True, samples_per_clip=8,
                  sprite_area_range=(0.15, 0.3))
    return load_dataset(root / "mix")


# --- losses ------------------------------------------------------------------

def test_homography_loss_zero_when_equal():
    gt = [np.ones((2, 8))]
    assert float(homography_loss(gt, gt).data) == 0.0


def test_homography_loss_unit_difference():
    est = [np.ones((1, 8))]
    gt = [np.zeros((1, 8))]
    assert float(homography_loss(est, gt).data) == 1.0


def test_homography_loss_sums_scales():
    est = [np.ones((1, 8)), np.ones((1, 8))]
    gt = [np.zeros((1, 8)), np.zeros((1, 8))]
    assert float(homography_loss(est, gt).data) == 2.0


def test_mask_loss_perfect_prediction():
    gt = (np.random.default_rng(0).random((2, 2, 8, 8)) > 0.5).astype(float)
    assert float(mask_loss(gt, gt).data) < 1e-5


def test_mask_loss_uniform_half():
    gt = (np.random.default_rng(1).random((2, 2, 8, 8)) > 0.5).astype(float)
    pred = np.full_like(gt, 0.5)
    assert abs(float(mask_loss(pred, gt).data) - LN2) < 1e-9


def test_mask_loss_quarter_analytic():
    gt = np.ones((1, 2, 4, 4))
    pred = np.full_like(gt, 0.25)
    assert abs(float(mask_loss(pred, gt).data) + np.log(0.25)) < 1e-9


def test_mask_loss_minimized_at_ground_truth():
    rng = np.random.default_rng(2)
    gt = (rng.random((1, 1, 6, 6)) > 0.5).astype(float)
    best = float(mask_loss(gt, gt).data)
    for _ in range(10):
        other = np.clip(gt + rng.normal(0, 0.2, gt.shape), 0.01, 0.99)
        assert float(mask_loss(other, gt).data) > best


def test_mask_loss_permutation_invariant():
    rng = np.random.default_rng(3)
    pred = rng.random((1, 1, 4, 8))
    gt = (rng.random((1, 1, 4, 8)) > 0.5).astype(float)
    perm = rng.permutation(pred.size)
    a = float(mask_loss(pred, gt).data)
    b = float(mask_loss(pred.ravel()[perm].reshape(pred.shape),
                        gt.ravel()[perm].reshape(gt.shape)).data)
    assert abs(a - b) < 1e-12


def test_total_loss_examples():
    assert float(total_loss([0.5], [0.1], LossWeights(1.0, 10.0)).data) == 1.5
    assert float(total_loss([0.0, 0.0], [], LossWeights(1.0, 0.0)).data) == 0.0
    lf = [0.3, 0.7]
    got = float(total_loss(lf, [], LossWeights(2.0, 0.0)).data)
    assert abs(got - 2.0 * sum(lf)) < 1e-12


def test_total_loss_linear_in_weights():
    rng = np.random.default_rng(4)
    lf = list(rng.random(3))
    ld = list(rng.random(3))
    a = sum(lf)
    b = sum(ld)
    for sf, sd in rng.random((10, 2)) * 5:
        got = float(total_loss(lf, ld, LossWeights(sf, sd)).data)
        assert abs(got - (sf * a + sd * b)) < 1e-9


def test_loss_weights_validation():
    with pytest.raises(ConfigInvalid):
        LossWeights(0.0, 0.0)
    with pytest.raises(ConfigInvalid):
        LossWeights(-1.0, 1.0)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    pred = Tensor(rng.random((2, 8, 1, 1)))
    target = rng.random((2, 8, 1, 1))
    out = homography_loss([pred], [target])
    out.backward()
    eps = 1e-6
    flat = pred.data.ravel()
    for i in range(0, flat.size, 5):
        old = flat[i]
        flat[i] = old + eps
        up = float(homography_loss([Tensor(pred.data)], [target]).data)
        flat[i] = old - eps
        dn = float(homography_loss([Tensor(pred.data)], [target]).data)
        flat[i] = old
        assert abs((up - dn) / (2 * eps) - pred.grad.ravel()[i]) < 1e-6


def test_residual_targets_identity_pre_alignment():
    rng = np.random.default_rng(6)
    frame = PatchFrame(64, 64)
    d = rng.uniform(-8, 8, size=8)
    gt = displacement_to_homography(d, frame)[None]
    targets = residual_displacement_targets(gt, [np.eye(3)[None]], 64)
    assert np.abs(targets[0][0] - d).max() < 1e-9


def test_residual_targets_perfect_cascade_gives_zero():
    rng = np.random.default_rng(7)
    frame = PatchFrame(64, 64)
    gt = displacement_to_homography(rng.uniform(-8, 8, 8), frame)[None]
    targets = residual_displacement_targets(gt, [gt.copy()], 64)
    assert np.abs(targets[0][0]).max() < 1e-7


# --- evaluate ----------------------------------------------------------------

def test_evaluate_oracle_all_zero(small_dataset):
    rep = evaluate(oracle_estimator(small_dataset), small_dataset)
    assert rep["summary"]["mean_ec"] == 0.0
    assert all(frac == 1.0 for t, frac in rep["cdf"] if t > 0)


def test_evaluate_identity_matches_direct_computation(small_dataset):
    rep = evaluate(identity_estimator, small_dataset)
    d = small_dataset.displacement.reshape(-1, 4, 2)
    direct = np.sqrt((d ** 2).sum(axis=2)).mean()
    assert abs(rep["summary"]["mean_ec"] - direct) < 1e-7


def test_evaluate_cdf_monotone(small_dataset):
    rep = evaluate(identity_estimator, small_dataset)
    fracs = [f for _, f in rep["cdf"]]
    assert all(b >= a for a, b in zip(fracs, fracs[1:]))


def test_evaluate_slices_zero_threshold_is_static_only(mixed_dataset):
    rep = evaluate(identity_estimator, mixed_dataset)
    static = mixed_dataset.ratios == 0.0
    s0 = rep["slices"][0]
    assert s0["ratio_threshold"] == 0.0
    assert s0["n"] == int(static.sum())
    if s0["n"]:
        expected = rep["errors"][static].mean()
        assert abs(s0["mean_ec"] - expected) < 1e-12


def test_evaluate_empty_dataset_rejected(small_dataset):
    import dataclasses
    empty = dataclasses.replace(small_dataset,
                                patch_a=small_dataset.patch_a[:0],
                                patch_b=small_dataset.patch_b[:0],
                                displacement=small_dataset.displacement[:0],
                                homography=small_dataset.homography[:0],
                                mask_a=small_dataset.mask_a[:0],
                                mask_b=small_dataset.mask_b[:0],
                                ratios=small_dataset.ratios[:0])
    with pytest.raises(DatasetEmpty):
        evaluate(identity_estimator, empty)


# --- ransac ------------------------------------------------------------------

def tex64(seed):
    return value_noise(np.random.default_rng(seed), 64, 5)


def test_ransac_recovers_translation():
    i1 = tex64(0)
    t = translation(4.0, 0.0)
    i2 = imaging.warp(i1, t, 64, 64)
    h = ransac_baseline(i1, i2, iters=300, inlier_tol=1.0,
                        rng=np.random.default_rng(0))
    assert mean_corner_error(h, t, PatchFrame(64, 64)) < 0.5


def test_ransac_rejects_moving_sprite():
    rng = np.random.default_rng(1)
    frame = PatchFrame(64, 64)
    errs = []
    for seed in range(5):
        bg = value_noise(np.random.default_rng(seed), 80, 5)
        h_gt = displacement_to_homography(
            np.random.default_rng(100 + seed).uniform(-4, 4, 8), frame)
        i1 = bg[:64, :64]
        i2 = imaging.warp(i1, h_gt, 64, 64)
        # paste a sprite covering ~30% of the area, displaced 10 px between views
        r = int(np.sqrt(0.3 * 64 * 64 / np.pi))
        ys, xs = np.mgrid[0:64, 0:64]
        tex = value_noise(np.random.default_rng(50 + seed), 64, 3)
        sup1 = (xs - 24) ** 2 + (ys - 24) ** 2 <= r * r
        sup2 = (xs - 31) ** 2 + (ys - 31) ** 2 <= r * r
        i1 = i1.copy()
        i2 = i2.copy()
        i1[sup1] = tex[sup1]
        i2[sup2] = tex[sup2]
        h = ransac_baseline(i1, i2, iters=500, inlier_tol=1.0,
                            rng=np.random.default_rng(seed))
        errs.append(mean_corner_error(h, h_gt, frame))
    assert np.median(errs) < 1.5


def test_ransac_deterministic():
    i1 = tex64(2)
    i2 = imaging.warp(i1, translation(2, 1), 64, 64)
    a = ransac_baseline(i1, i2, rng=np.random.default_rng(3))
    b = ransac_baseline(i1, i2, rng=np.random.default_rng(3))
    assert (a == b).all()


def test_ransac_too_few_points():
    img = np.zeros((12, 12))
    with pytest.raises(InsufficientCorrespondences):
        ransac_baseline(img, img, block=8)


# --- training loop -----------------------------------------------------------

def quick_config(**kw):
    base = dict(model="mhn", n_scales=1, patch_size=64, base_channels=4,
                batch_size=4, phases=((40, 1.0, 0.0),), checkpoint_every=20,
                seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_phase_lookup():
    phases = ((10, 1.0, 0.0), (5, 1.0, 10.0), (5, 1.0, 0.0))
    assert _phase_of(1, phases) == (0, 1.0, 0.0)
    assert _phase_of(10, phases) == (0, 1.0, 0.0)
    assert _phase_of(11, phases) == (1, 1.0, 10.0)
    assert _phase_of(16, phases) == (2, 1.0, 0.0)


def test_train_writes_outputs_and_is_deterministic(tmp_path, small_dataset):
    cfg = quick_config()
    ck1 = train(cfg, small_dataset, tmp_path / "a")
    ck2 = train(cfg, small_dataset, tmp_path / "b")
    assert (tmp_path / "a" / "losses.csv").read_text() == \
           (tmp_path / "b" / "losses.csv").read_text()
    assert ck1.read_bytes() == ck2.read_bytes()


def test_train_resume_continues_counter(tmp_path, small_dataset):
    full = train(quick_config(), small_dataset, tmp_path / "full")
    half = train(quick_config(phases=((20, 1.0, 0.0),)), small_dataset,
                 tmp_path / "half")
    resumed = train(quick_config(), small_dataset, tmp_path / "resumed",
                    resume=half)
    _, manifest = load_model(resumed)
    assert manifest["iteration"] == 40
    with open(tmp_path / "full" / "losses.csv") as f:
        rows_full = list(csv.DictReader(f))
    with open(tmp_path / "resumed" / "losses.csv") as f:
        rows_res = list(csv.DictReader(f))
    assert [r["iteration"] for r in rows_res] == [
        r["iteration"] for r in rows_full[20:]]
    assert [r["total"] for r in rows_res] == [r["total"] for r in rows_full[20:]]


def test_train_logs_match_phase_plan(tmp_path, mixed_dataset):
    cfg = TrainConfig(model="mhn_m", n_scales=1, patch_size=64, base_channels=4,
                      batch_size=4, seed=1, checkpoint_every=0,
                      phases=((6, 1.0, 0.0), (6, 1.0, 10.0), (6, 1.0, 0.0)))
    train(cfg, mixed_dataset, tmp_path / "m")
    with open(tmp_path / "m" / "losses.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["phase"] for r in rows] == ["0"] * 6 + ["1"] * 6 + ["2"] * 6
    ld = [float(r["ld_0"]) for r in rows]
    assert all(v == 0.0 for v in ld[:6])
    assert all(v > 0.0 for v in ld[6:12])
    assert all(v == 0.0 for v in ld[12:])


def test_train_validates_config(small_dataset, tmp_path):
    with pytest.raises(ConfigInvalid):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigInvalid):
        TrainConfig(model="resnet")
    with pytest.raises(ConfigInvalid):
        TrainConfig(phases=((0, 1.0, 0.0),))
    with pytest.raises(ConfigInvalid):
        train(quick_config(patch_size=128, n_scales=1), small_dataset,
              tmp_path / "bad")


def test_trained_model_evaluates(tmp_path, small_dataset):
    ck = train(quick_config(), small_dataset, tmp_path / "t")
    model, manifest = load_model(ck)
    assert manifest["kind"] == "mhn"
    rep = evaluate(model_estimator(model), small_dataset)
    assert np.isfinite(rep["summary"]["mean_ec"])
