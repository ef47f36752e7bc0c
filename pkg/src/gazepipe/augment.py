"""Label-consistent training-time augmentation and final crops."""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np

from .datamodel import (
    EYE_INPUT_SIZE,
    EYE_PATCH_SIZE,
    FACE_INPUT_SIZE,
    FACE_PATCH_SIZE,
    NormalizedSample,
    center_crop,
    mirror_landmark_feature,
)


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    max_shift: int = 5
    max_zoom: float = 0.02
    brightness_range: tuple[float, float] = (0.4, 1.75)
    noise_variance: float = 0.03
    enabled: bool = True
    seed: int = 0
    landmark_scale: float = 1.0

    def __post_init__(self):
        self.brightness_range = tuple(self.brightness_range)
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")
        if self.max_shift < 0 or self.max_zoom < 0 or self.noise_variance < 0:
            raise ValueError("shift, zoom and noise must be non-negative")
        lo, hi = self.brightness_range
        if not 0 < lo <= hi:
            raise ValueError("brightness range must be positive and ordered")


def _to_float(img):
    if img.dtype == np.uint8:
        return img.astype(np.float32) * (1.0 / 255.0)
    return img.astype(np.float32, copy=False)


def crop_final(sample: NormalizedSample):
    """Deterministic center crops: face 250x250 -> 224x224, eye halves 70x58 -> 60x48."""
    fh, fw = sample.face_patch.shape[:2]
    eh, ew = sample.eyes_patch.shape[:2]
    if (fw, fh) != FACE_PATCH_SIZE or (ew, eh) != (2 * EYE_PATCH_SIZE[0], EYE_PATCH_SIZE[1]):
        raise ValueError(f"crop_final expects pre-crop patches, got face {fw}x{fh}, eyes {ew}x{eh}")
    face = center_crop(sample.face_patch, FACE_INPUT_SIZE)
    half = ew // 2
    eyes = np.concatenate([center_crop(sample.eyes_patch[:, :half], EYE_INPUT_SIZE),
                           center_crop(sample.eyes_patch[:, half:], EYE_INPUT_SIZE)], axis=1)
    return face, eyes


def _jitter_crop(img, out_size, rng, max_shift, max_zoom):
    """Crop of a random size (zoom) at a random offset (shift), resized to ``out_size``.

    Shift and zoom are clipped to the margin the input leaves around ``out_size``.
    """
    H, W = img.shape[:2]
    ow, oh = out_size
    z = rng.uniform(-max_zoom, max_zoom) if max_zoom > 0 else 0.0
    cw = int(np.clip(round(ow * (1 + z)), 1, W))
    ch = int(np.clip(round(oh * (1 + z)), 1, H))
    dx, dy = (rng.integers(-max_shift, max_shift + 1, size=2) if max_shift > 0 else (0, 0))
    x0 = int(np.clip((W - cw) // 2 + dx, 0, W - cw))
    y0 = int(np.clip((H - ch) // 2 + dy, 0, H - ch))
    crop = img[y0:y0 + ch, x0:x0 + cw]
    if (cw, ch) != (ow, oh):
        crop = cv2.resize(crop, (ow, oh), interpolation=cv2.INTER_LINEAR)
    return crop


def augment_sample(sample: NormalizedSample, config: AugmentConfig, rng: np.random.Generator) -> NormalizedSample:
    """Return a sample with final-size float32 patches in [0, 1].

    Order: flip, shift/zoom (crop placement), shared brightness factor,
    per-pixel Gaussian noise, clipping.  Only the flip touches the label.
    """
    face, eyes = sample.face_patch, sample.eyes_patch
    lm, label = sample.landmark_feature, np.asarray(sample.label, dtype=float)
    if not config.enabled:
        if face.shape[1::-1] == FACE_INPUT_SIZE:
            return replace(sample, face_patch=_to_float(face), eyes_patch=_to_float(eyes))
        f, e = crop_final(sample)
        return replace(sample, face_patch=_to_float(f), eyes_patch=_to_float(e))

    if rng.random() < config.flip_prob:
        face = face[:, ::-1]
        eyes = eyes[:, ::-1]  # mirrors each half and swaps them
        lm = mirror_landmark_feature(lm, config.landmark_scale).astype(np.float32)
        label = label * np.array([-1.0, 1.0])

    face = _jitter_crop(np.ascontiguousarray(face), FACE_INPUT_SIZE, rng, config.max_shift, config.max_zoom)
    half = eyes.shape[1] // 2
    # one placement for both eye halves keeps them aligned
    state = rng.bit_generator.state
    right = _jitter_crop(np.ascontiguousarray(eyes[:, :half]), EYE_INPUT_SIZE, rng, config.max_shift, config.max_zoom)
    rng.bit_generator.state = state
    left = _jitter_crop(np.ascontiguousarray(eyes[:, half:]), EYE_INPUT_SIZE, rng, config.max_shift, config.max_zoom)
    eyes = np.concatenate([right, left], axis=1)

    b = rng.uniform(*config.brightness_range)
    sigma = float(np.sqrt(config.noise_variance))
    out = []
    for img in (face, eyes):
        img = _to_float(img) * b
        if sigma > 0:
            img = img + sigma * rng.standard_normal(img.shape, dtype=np.float32)
        out.append(np.clip(img, 0.0, 1.0))
    return replace(sample, face_patch=out[0], eyes_patch=out[1], landmark_feature=lm, label=label)
