"""Record builders shared by the tests."""

import numpy as np

from gazepipe import geometry as geo
from gazepipe.datamodel import Camera, Flags, FrameRecord, Session

CAM = Camera(geo.CameraIntrinsics(800.0, 800.0, 319.5, 239.5), 640, 480)


def make_record(H=None, p=(0.0, 0.0, 0.7), gaze_head=(0.0, 0.0), flags=None, subject="s01", frame_index=0,
                session=None, landmarks=None, eye_gap=0.064):
    """Record whose eyeball rotation in the head frame is ``gaze_head`` = (theta, phi) in degrees."""
    H = np.eye(3) if H is None else np.asarray(H, float)
    p = np.asarray(p, float)
    eye_r = p + H @ np.array([-eye_gap / 2, -0.02, -0.09])
    eye_l = p + H @ np.array([eye_gap / 2, -0.02, -0.09])
    g = H @ geo.angles_to_gaze(np.radians(gaze_head))
    mid = 0.5 * (eye_l + eye_r)
    if landmarks is None:
        rng = np.random.default_rng(frame_index)
        landmarks = p + (rng.uniform(-0.07, 0.07, (68, 3)) * [1, 1, 0.3]) @ H.T
    return FrameRecord(subject, session or Session(), frame_index, "img.png", "cam0", geo.HeadPose(H, p), eye_l,
                       eye_r, landmarks, gaze_target=mid + 0.5 * g, flags=flags or Flags(), camera=CAM)


def blob_image(points_px, size=(640, 480), sigma=2.0, dtype=np.float32):
    w, h = size
    yy, xx = np.mgrid[:h, :w]
    img = np.zeros((h, w), np.float64)
    for u, v in points_px:
        img += np.exp(-((xx - u) ** 2 + (yy - v) ** 2) / (2 * sigma ** 2))
    return img.astype(dtype)


def centroid(img, center, r=6):
    u, v = int(round(center[0])), int(round(center[1]))
    win = img[v - r:v + r + 1, u - r:u + r + 1].astype(float)
    wy, wx = np.mgrid[v - r:v + r + 1, u - r:u + r + 1]
    return np.array([(win * wx).sum(), (win * wy).sum()]) / win.sum()
