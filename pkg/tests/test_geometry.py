import numpy as np
import pytest

from dynhom import geometry
from dynhom.errors import DegenerateCorners, PointAtInfinity, SingularMatrix
from dynhom.geometry import (
    PatchFrame,
    apply,
    apply_points,
    compose_across_scale,
    displacement_to_homography,
    homography_to_displacement,
    identity,
    invert,
    mean_corner_error,
    normalize,
    translation,
)

FRAME = PatchFrame(128, 128)


def random_displacement(rng, scale=32.0):
    return rng.uniform(-scale, scale, size=8)


def test_apply_identity():
    assert np.allclose(apply(identity(), (7.0, 3.0)), [7.0, 3.0])


def test_apply_translation():
    assert np.allclose(apply(translation(5, -2), (0.0, 0.0)), [5.0, -2.0])


def test_apply_perspective_division():
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.01, 0.0, 1.0]])
    got = apply(h, (10.0, 4.0))
    assert np.allclose(got, [10.0 / 1.1, 4.0 / 1.1], atol=1e-12)


def test_apply_point_at_infinity():
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.1, 0.0, 1.0]])
    with pytest.raises(PointAtInfinity):
        apply(h, (10.0, 0.0))


def test_displacement_zero_gives_identity():
    h = displacement_to_homography(np.zeros(8), FRAME)
    assert np.allclose(h, np.eye(3), atol=1e-12)


def test_displacement_uniform_shift_gives_translation():
    d = np.tile([5.0, 3.0], 4)
    h = displacement_to_homography(d, FRAME)
    assert np.allclose(h, translation(5, 3), atol=1e-9)


def test_four_point_solve_reproduces_corners():
    rng = np.random.default_rng(7)
    corners = FRAME.corners()
    for _ in range(50):
        d = random_displacement(rng).reshape(4, 2)
        h = displacement_to_homography(d.reshape(8), FRAME)
        mapped = apply_points(h, corners)
        assert np.abs(mapped - (corners + d)).max() < 1e-9


def test_round_trip_1000_cases():
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(1000):
        d = random_displacement(rng)
        h = displacement_to_homography(d, FRAME)
        back = homography_to_displacement(h, FRAME)
        worst = max(worst, np.abs(back - d).max())
    assert worst < 1e-7


def test_degenerate_corners_rejected():
    # collapse three corners onto a line: TL, TR, BR displaced to be collinear
    corners = FRAME.corners()
    target = corners.copy()
    target[2] = (target[0] + target[1]) / 2.0  # BR onto the top edge
    target[3] = target[0]                      # BL onto TL: degenerate
    d = (target - corners).reshape(8)
    with pytest.raises(DegenerateCorners):
        displacement_to_homography(d, FRAME)


def test_homography_to_displacement_translation():
    d = homography_to_displacement(translation(5, 3), FRAME)
    assert np.allclose(d, np.tile([5.0, 3.0], 4), atol=1e-12)


def test_invert_round_trip_points():
    rng = np.random.default_rng(99)
    for _ in range(20):
        h = displacement_to_homography(random_displacement(rng, 20.0), FRAME)
        hinv = invert(h)
        pts = rng.uniform(0, 127, size=(100, 2))
        back = apply_points(hinv, apply_points(h, pts))
        assert np.abs(back - pts).max() < 1e-8


def test_invert_translation():
    assert np.allclose(invert(translation(5, 3)), translation(-5, -3), atol=1e-12)


def test_invert_singular():
    with pytest.raises(SingularMatrix):
        invert(np.array([[1.0, 0, 0], [2.0, 0, 0], [0, 0, 1.0]]))


def test_compose_across_scale_identity():
    assert np.allclose(compose_across_scale(identity(), identity()), np.eye(3))


def test_compose_across_scale_translation_doubles():
    got = compose_across_scale(identity(), translation(3.0, 0.0))
    assert np.allclose(got, translation(6.0, 0.0), atol=1e-12)


def test_compose_across_scale_matches_sequential_mapping():
    rng = np.random.default_rng(2024)
    gx, gy = np.meshgrid(np.linspace(0, 127, 10), np.linspace(0, 127, 10))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    for _ in range(100):
        h_fine = displacement_to_homography(random_displacement(rng, 16.0), FRAME)
        h_coarse = displacement_to_homography(random_displacement(rng, 16.0), FRAME)
        combined = compose_across_scale(h_fine, h_coarse)
        direct = apply_points(combined, grid)
        step = apply_points(geometry.SCALE_DOWN, grid)
        step = apply_points(h_coarse, step)
        step = apply_points(geometry.SCALE_UP, step)
        step = apply_points(h_fine, step)
        assert np.abs(direct - step).max() < 1e-9


def test_mean_corner_error_zero_for_equal():
    rng = np.random.default_rng(5)
    h = displacement_to_homography(random_displacement(rng), FRAME)
    assert mean_corner_error(h, h, FRAME) == 0.0


def test_mean_corner_error_translation_offset():
    # translating the output of an affine homography shifts every corner by (3,4)
    rng = np.random.default_rng(6)
    h_gt = np.array([[1.1, 0.02, 4.0], [-0.03, 0.95, -2.0], [0.0, 0.0, 1.0]])
    h_est = translation(3, 4) @ h_gt
    assert abs(mean_corner_error(h_est, h_gt, FRAME) - 5.0) < 1e-9


def test_mean_corner_error_matches_direct_evaluation():
    rng = np.random.default_rng(77)
    for _ in range(50):
        a = displacement_to_homography(random_displacement(rng), FRAME)
        b = displacement_to_homography(random_displacement(rng), FRAME)
        direct = 0.0
        for c in FRAME.corners():
            direct += np.linalg.norm(apply(a, c) - apply(b, c))
        direct /= 4.0
        assert abs(mean_corner_error(a, b, FRAME) - direct) < 1e-12


def test_mean_corner_error_symmetry_exact():
    rng = np.random.default_rng(13)
    for _ in range(20):
        a = displacement_to_homography(random_displacement(rng), FRAME)
        b = displacement_to_homography(random_displacement(rng), FRAME)
        assert mean_corner_error(a, b, FRAME) == mean_corner_error(b, a, FRAME)


def test_normalize_idempotent_bitwise():
    rng = np.random.default_rng(3)
    h = normalize(displacement_to_homography(random_displacement(rng), FRAME))
    again = normalize(h)
    assert (h == again).all()


def test_normalize_frobenius_branch():
    h = np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    n = normalize(h)
    assert abs(np.linalg.norm(n) - 1.0) < 1e-12
    assert (normalize(n) == n).all()


def test_scale_level_conversion_round_trip():
    rng = np.random.default_rng(8)
    h = displacement_to_homography(random_displacement(rng), FRAME)
    down = geometry.to_coarser_level(h)
    up = geometry.to_finer_level(down)
    assert np.allclose(up, h, atol=1e-9)
