import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_pose, random_rotation, random_unit
from gazepipe import geometry as geo
from gazepipe.geometry import CameraIntrinsics, HeadPose

seeds = st.integers(0, 2**32 - 1)


def oracle_rotation(pose):
    """Rotation taking p-hat to e3 with the head x-axis landing on the +x half of the xz-plane."""
    p_hat = pose.p / np.linalg.norm(pose.p)
    rot, _ = Rotation.align_vectors([[0, 0, 1], [1, 0, 0]], [p_hat, pose.x_axis], weights=[np.inf, 1])
    return rot.as_matrix()


def test_identity_pose_gives_identity_rotation():
    R = geo.compute_normalizing_rotation(HeadPose(np.eye(3), [0, 0, 0.6]))
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)


def test_pure_roll_is_undone():
    H = geo.rotation_matrix([0, 0, 1], math.radians(30))
    R = geo.compute_normalizing_rotation(HeadPose(H, [0, 0, 0.6]))
    np.testing.assert_allclose(R, geo.rotation_matrix([0, 0, 1], math.radians(-30)), atol=1e-12)
    np.testing.assert_allclose(R @ H[:, 0], [1, 0, 0], atol=1e-12)


@given(seeds)
def test_rotation_matches_independent_oracle(seed):
    pose = random_pose(np.random.default_rng(seed))
    np.testing.assert_allclose(geo.compute_normalizing_rotation(pose), oracle_rotation(pose), atol=1e-9)


@given(seeds)
def test_rotation_invariants(seed):
    pose = random_pose(np.random.default_rng(seed))
    R = geo.compute_normalizing_rotation(pose)
    np.testing.assert_allclose(R @ (pose.p / np.linalg.norm(pose.p)), [0, 0, 1], atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs((R @ pose.x_axis)[1]) < 1e-9


def test_degenerate_pose_raises():
    # head x-axis along the line of sight
    H = geo.rotation_matrix([0, 1, 0], math.pi / 2)
    with pytest.raises(geo.DegeneratePoseError):
        geo.compute_normalizing_rotation(HeadPose(H, [0, 0, 0.6]))


def test_head_pose_validation():
    with pytest.raises(ValueError):
        HeadPose(np.diag([1, 1, -1.0]), [0, 0, 1])
    with pytest.raises(ValueError):
        HeadPose(np.eye(3) * 1.1, [0, 0, 1])
    with pytest.raises(ValueError):
        HeadPose(np.eye(3), [0, 0, 0])
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1, 0, 0)


def test_identity_intrinsics_give_identity_homography():
    I = CameraIntrinsics.from_matrix(np.eye(3))
    t = geo.build_normalization(HeadPose(np.eye(3), [0, 0, 0.6]), 0.6, I, I, (10, 10))
    np.testing.assert_allclose(t.W, np.eye(3), atol=1e-12)


def test_scaling_matrix():
    t = geo.build_normalization(HeadPose(np.eye(3), [0, 0, 1.2]), 0.6, CameraIntrinsics(500, 500, 320, 240),
                                CameraIntrinsics(600, 600, 100, 100), (200, 200))
    np.testing.assert_allclose(t.S, np.diag([1, 1, 0.5]))
    assert abs(np.linalg.norm(t.M @ np.array([0, 0, 1.2])) - 0.6) < 1e-12


@given(seeds)
def test_homography_point_correspondence(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    C_o = CameraIntrinsics(rng.uniform(400, 1200), rng.uniform(400, 1200), rng.uniform(200, 400), rng.uniform(150, 300))
    C_n = CameraIntrinsics(rng.uniform(500, 1500), rng.uniform(500, 1500), rng.uniform(50, 150), rng.uniform(50, 150))
    t = geo.build_normalization(pose, 0.6, C_o, C_n, (224, 224))
    X = pose.p + rng.normal(0, 0.05, (20, 3))
    src = C_o.project(X)
    dst = C_n.project(X @ t.M.T)
    np.testing.assert_allclose(geo.apply_homography(t.W, src), dst, atol=1e-6)


def test_warp_identity_is_bitwise():
    img = np.random.default_rng(0).integers(0, 256, (40, 50, 3), dtype=np.uint8)
    np.testing.assert_array_equal(geo.warp_image(img, np.eye(3), (50, 40)), img)


def test_warp_translation_shifts_with_black_border():
    img = np.random.default_rng(0).integers(1, 256, (40, 50), dtype=np.uint8)
    W = np.array([[1, 0, 3], [0, 1, 2], [0, 0, 1.0]])
    out = geo.warp_image(img, W, (50, 40))
    np.testing.assert_array_equal(out[2:, 3:], img[:-2, :-3])
    assert not out[:2].any() and not out[:, :3].any()


def test_warp_rejects_singular_homography():
    with pytest.raises(ValueError):
        geo.warp_image(np.ones((5, 5), np.uint8), np.zeros((3, 3)), (5, 5))


def test_warped_dots_land_on_projected_positions():
    pose = HeadPose(geo.rotation_matrix([0.2, 1, 0.1], 0.3), [0.05, -0.03, 0.7])
    C_o = CameraIntrinsics(800, 800, 319.5, 239.5)
    C_n = CameraIntrinsics.centered(900, (200, 200))
    t = geo.build_normalization(pose, 0.6, C_o, C_n, (200, 200))
    grid = np.array([[x, y, 0.0] for x in (-0.03, 0, 0.03) for y in (-0.03, 0, 0.03)])
    X = grid @ pose.H.T + pose.p
    src = C_o.project(X)
    img = np.zeros((480, 640), np.float32)
    yy, xx = np.mgrid[:480, :640]
    for u, v in src:
        img += np.exp(-((xx - u) ** 2 + (yy - v) ** 2) / (2 * 2.0 ** 2))
    out = geo.warp_image(img, t)
    expect = C_n.project(X @ t.M.T)
    for u, v in expect:
        x0, y0 = int(round(u)), int(round(v))
        win = out[y0 - 6:y0 + 7, x0 - 6:x0 + 7]
        wy, wx = np.mgrid[y0 - 6:y0 + 7, x0 - 6:x0 + 7]
        c = np.array([(win * wx).sum(), (win * wy).sum()]) / win.sum()
        assert np.linalg.norm(c - [u, v]) < 0.5


def test_normalize_gaze_examples():
    g = np.array([0.0, 0.0, -1.0])
    np.testing.assert_allclose(geo.normalize_gaze(g, np.eye(3)), g)
    Ry = geo.rotation_matrix([0, 1, 0], math.pi / 2)
    expect = np.array([sum(Ry[i, j] * g[j] for j in range(3)) for i in range(3)])
    np.testing.assert_allclose(geo.normalize_gaze(g, Ry), expect, atol=1e-15)
    np.testing.assert_allclose(expect, [-1, 0, 0], atol=1e-15)
    with pytest.raises(ValueError):
        geo.normalize_gaze([0, 0, -1.01], np.eye(3))


@given(seeds)
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    R, g = random_rotation(rng), random_unit(rng, 5)
    np.testing.assert_allclose(geo.denormalize_gaze(geo.normalize_gaze(g, R), R), g, atol=1e-9)


def test_angle_examples():
    np.testing.assert_allclose(geo.gaze_to_angles([0, 0, -1]), [0, 0], atol=1e-15)
    th, ph = geo.gaze_to_angles([0, -0.5, -math.sqrt(0.75)])
    assert abs(th) < 1e-15 and abs(math.degrees(ph) - 30) < 1e-12
    with pytest.raises(geo.HemisphereError):
        geo.gaze_to_angles([0, 0, 1])
    with pytest.raises(geo.HemisphereError):
        geo.gaze_to_angles([1, 0, 0])


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_angle_round_trip(theta, phi):
    g = geo.angles_to_gaze([theta, phi])
    assert abs(np.linalg.norm(g) - 1) < 1e-12 and g[2] < 0
    np.testing.assert_allclose(geo.gaze_to_angles(g), [theta, phi], atol=1e-9)
    np.testing.assert_allclose(geo.angles_to_gaze(geo.gaze_to_angles(g)), g, atol=1e-9)


def test_angular_error_examples():
    g = np.array([0.0, 0.0, -1.0])
    assert geo.angular_error(g, g) == 0
    assert abs(geo.angular_error(g, -g) - 180) < 1e-12
    h = np.array([0, -math.sin(math.radians(30)), -math.cos(math.radians(30))])
    assert abs(geo.angular_error(g, h) - 30) < 1e-12


@given(seeds)
def test_angular_error_properties(seed):
    rng = np.random.default_rng(seed)
    u, v = random_unit(rng, 8), random_unit(rng, 8)
    e = geo.angular_error(u, v)
    np.testing.assert_allclose(e, geo.angular_error(v, u), atol=1e-12)
    ref = np.degrees(np.arccos(np.clip(np.sum(u * v, 1), -1, 1)))
    np.testing.assert_allclose(e, ref, atol=1e-6)
    np.testing.assert_allclose(np.linalg.norm(u - v, axis=1), 2 * np.sin(np.radians(e) / 2), atol=1e-9)
    R = random_rotation(rng)
    np.testing.assert_allclose(geo.angular_error(u @ R.T, v @ R.T), e, atol=1e-6)


def test_gaze_loss_examples():
    a = torch.tensor([[0.1, -0.2], [0.3, 0.05]], dtype=torch.float64)
    gt = torch.from_numpy(geo.angles_to_gaze(a.numpy()))
    assert geo.gaze_loss(a, gt).item() == pytest.approx(0, abs=1e-15)
    one = torch.zeros(1, 2, dtype=torch.float64)
    assert geo.gaze_loss(one, torch.tensor([[0, 0, 1.0]], dtype=torch.float64)).item() == pytest.approx(2)
    other = torch.from_numpy(geo.angles_to_gaze(np.array([[0.0, 0.0], [0.0, 0.0]])))
    d = np.linalg.norm(gt.numpy() - other.numpy(), axis=1)
    assert geo.gaze_loss(torch.zeros(2, 2, dtype=torch.float64), gt).item() == pytest.approx(d.mean())
    with pytest.raises(ValueError):
        geo.gaze_loss(torch.zeros(0, 2), torch.zeros(0, 3))


def test_gaze_loss_rotates_ccs_labels(rng):
    R = np.stack([random_rotation(rng) for _ in range(3)])
    g_n = geo.angles_to_gaze(rng.uniform(-0.5, 0.5, (3, 2)))
    g = geo.denormalize_gaze(g_n, R)
    pred = torch.from_numpy(rng.uniform(-0.5, 0.5, (3, 2)))
    a = geo.gaze_loss(pred, torch.from_numpy(g_n))
    b = geo.gaze_loss(pred, torch.from_numpy(g), torch.from_numpy(R))
    assert abs(a.item() - b.item()) < 1e-12


def test_gaze_loss_duplicate_batch_equals_single():
    pred = torch.tensor([[0.2, 0.1]], dtype=torch.float64)
    gt = torch.from_numpy(geo.angles_to_gaze(np.array([[0.0, -0.1]])))
    single = geo.gaze_loss(pred, gt)
    dup = geo.gaze_loss(pred.repeat(7, 1), gt.repeat(7, 1))
    assert abs(single.item() - dup.item()) < 1e-15


def test_gaze_loss_differentiable():
    pred = torch.tensor([[0.2, 0.1]], dtype=torch.float64, requires_grad=True)
    gt = torch.from_numpy(geo.angles_to_gaze(np.array([[0.0, -0.1]])))
    torch.autograd.gradcheck(lambda p: geo.gaze_loss(p, gt), (pred,))
