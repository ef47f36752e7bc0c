import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazepipe import geometry as geo
from gazepipe import synthgen as sg
from gazepipe.augment import AugmentConfig, augment_sample, crop_final
from gazepipe.datamodel import NormalizedSample, normalize_record


def sample(seed=0, label=(0.2, -0.1)):
    rng = np.random.default_rng(seed)
    return NormalizedSample(
        face_patch=rng.integers(0, 256, (250, 250, 3), dtype=np.uint8),
        eyes_patch=rng.integers(0, 256, (58, 140, 3), dtype=np.uint8),
        landmark_feature=rng.uniform(0, 1, 204).astype(np.float32),
        label=np.array(label),
        R=np.eye(3),
        key=("s01", "FT", "static", "0", 0),
    )


QUIET = dict(max_shift=0, max_zoom=0.0, brightness_range=(1.0, 1.0), noise_variance=0.0)


def test_crop_final_offsets():
    s = sample()
    face, eyes = crop_final(s)
    assert face.shape == (224, 224, 3) and eyes.shape == (48, 120, 3)
    np.testing.assert_array_equal(face, s.face_patch[13:237, 13:237])
    np.testing.assert_array_equal(eyes[:, :60], s.eyes_patch[5:53, 5:65])
    np.testing.assert_array_equal(eyes[:, 60:], s.eyes_patch[5:53, 75:135])
    with pytest.raises(ValueError):
        crop_final(NormalizedSample(face, eyes, s.landmark_feature, s.label, s.R, s.key))


def test_disabled_is_center_crop():
    s = sample()
    out = augment_sample(s, AugmentConfig(enabled=False), np.random.default_rng(0))
    face, eyes = crop_final(s)
    np.testing.assert_allclose(out.face_patch, face / 255.0, atol=1e-7)
    np.testing.assert_allclose(out.eyes_patch, eyes / 255.0, atol=1e-7)
    np.testing.assert_array_equal(out.label, s.label)


def test_neutral_settings_are_center_crop():
    s = sample()
    out = augment_sample(s, AugmentConfig(flip_prob=0.0, **QUIET), np.random.default_rng(0))
    face, eyes = crop_final(s)
    np.testing.assert_allclose(out.face_patch, face / 255.0, atol=1e-7)
    np.testing.assert_allclose(out.eyes_patch, eyes / 255.0, atol=1e-7)
    np.testing.assert_array_equal(out.label, s.label)
    np.testing.assert_array_equal(out.landmark_feature, s.landmark_feature)


def test_flip_negates_theta_and_swaps_eyes():
    s = sample(label=(np.radians(10), 0.05))
    out = augment_sample(s, AugmentConfig(flip_prob=1.0, **QUIET), np.random.default_rng(0))
    np.testing.assert_allclose(out.label, [-np.radians(10), 0.05])
    _, eyes = crop_final(s)
    np.testing.assert_allclose(out.eyes_patch[:, :60], eyes[:, 60:][:, ::-1] / 255.0, atol=1e-7)


def test_flip_is_involution():
    s = sample()
    cfg = AugmentConfig(flip_prob=1.0, **QUIET)
    once = augment_sample(s, cfg, np.random.default_rng(0))
    twice = augment_sample(once, cfg, np.random.default_rng(1))
    face, eyes = crop_final(s)
    np.testing.assert_allclose(twice.face_patch, face / 255.0, atol=1e-7)
    np.testing.assert_allclose(twice.eyes_patch, eyes / 255.0, atol=1e-7)
    np.testing.assert_allclose(twice.landmark_feature, s.landmark_feature, atol=1e-6)
    np.testing.assert_allclose(twice.label, s.label)


@given(st.integers(0, 2**32 - 1))
def test_label_only_changes_by_flip_and_range_is_valid(seed):
    s = sample(seed % 7)
    out = augment_sample(s, AugmentConfig(), np.random.default_rng(seed))
    assert out.face_patch.shape == (224, 224, 3) and out.eyes_patch.shape == (48, 120, 3)
    assert out.face_patch.dtype == np.float32
    for img in (out.face_patch, out.eyes_patch):
        assert img.min() >= 0 and img.max() <= 1
    assert out.label[1] == s.label[1] and abs(out.label[0]) == abs(s.label[0])
    assert out.landmark_feature.min() >= 0 and out.landmark_feature.max() <= 1


def test_seeded_stream_is_reproducible():
    s = sample()
    a = [augment_sample(s, AugmentConfig(), np.random.default_rng(5)) for _ in range(2)]
    assert np.array_equal(a[0].face_patch, a[1].face_patch) and np.array_equal(a[0].eyes_patch, a[1].eyes_patch)


def test_brightness_is_shared():
    s = sample()
    cfg = AugmentConfig(flip_prob=0, max_shift=0, max_zoom=0, brightness_range=(0.5, 0.5), noise_variance=0)
    out = augment_sample(s, cfg, np.random.default_rng(0))
    face, eyes = crop_final(s)
    np.testing.assert_allclose(out.face_patch, face / 255.0 * 0.5, atol=1e-6)
    np.testing.assert_allclose(out.eyes_patch, eyes / 255.0 * 0.5, atol=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(flip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(max_shift=-1)
    with pytest.raises(ValueError):
        AugmentConfig(brightness_range=(1.5, 0.5))


@pytest.mark.parametrize("yaw,roll,x,theta,phi", [(0, 0, 0, 10, 0), (12, 5, 0.03, 10, -6), (-8, -3, -0.02, -15, 8)])
def test_flipped_label_matches_mirrored_scene(yaw, roll, x, theta, phi):
    scene = sg.SceneParams()
    style = sg.SubjectStyle.from_seed(3)

    def label(yaw, roll, x, theta):
        pose = geo.HeadPose(sg.head_rotation(yaw, 4, roll), [x, 0.01, 0.75])
        img, rec = sg.render_frame(scene, style, pose, (theta, phi))
        return normalize_record(rec, img)

    s = label(yaw, roll, x, theta)
    flipped = augment_sample(s, AugmentConfig(flip_prob=1.0, **QUIET), np.random.default_rng(0))
    mirror = label(-yaw, -roll, -x, -theta)
    np.testing.assert_allclose(flipped.label, mirror.label, atol=1e-6)
    assert abs(flipped.label[0] + s.label[0]) < 1e-12
