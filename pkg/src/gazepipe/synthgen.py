"""Procedural face-card renderer with exact ground truth.

A subject is a flat textured card (skin oval, two eyes with iris/pupil) lying
in the head-frame plane z = -face_offset, plus 68 landmarks attached to the
head, some of them off the card (nose, jaw) so that head rotation changes the
landmark shape.  Brows, nose, mouth and jaw strokes are drawn through the
projected landmarks, so every landmark sits exactly on its rendered feature.

The iris center moves on the card linearly with the eyeball-in-head gaze
angles: ``iris_shift_per_deg`` meters per degree, negative x for positive
theta, negative y for positive phi (matching the gaze-vector convention).
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from . import geometry as geo
from .datamodel import Camera, Flags, FrameRecord, Session, write_intrinsics_table, write_manifest
from .geometry import CameraIntrinsics, HeadPose

logger = logging.getLogger(__name__)

FACE_OFFSET = 0.1


@dataclass(frozen=True)
class SubjectStyle:
    skin: tuple[float, float, float] = (150.0, 170.0, 200.0)  # BGR
    iris: tuple[float, float, float] = (70.0, 60.0, 40.0)
    background: tuple[float, float, float] = (90.0, 90.0, 90.0)
    stroke: tuple[float, float, float] = (50.0, 60.0, 80.0)
    lips: tuple[float, float, float] = (90.0, 90.0, 170.0)
    eye_spacing: float = 0.062
    face_scale: float = 1.0
    nose_depth: float = 0.03

    @classmethod
    def from_seed(cls, seed: int) -> "SubjectStyle":
        rng = np.random.default_rng([seed, 7919])
        tone = rng.uniform(0.45, 1.0)
        skin = tuple(float(c) for c in np.array([120.0, 150.0, 200.0]) * tone + rng.uniform(-10, 10, 3))
        iris = tuple(float(c) for c in rng.uniform(20, 110, 3))
        bg = tuple(float(c) for c in rng.uniform(40, 200, 3))
        stroke = tuple(float(c) for c in np.array(skin) * rng.uniform(0.25, 0.45))
        lips = tuple(float(c) for c in np.array([0.6, 0.6, 1.0]) * np.array(skin) * rng.uniform(0.6, 0.8))
        return cls(
            skin=skin,
            iris=iris,
            background=bg,
            stroke=stroke,
            lips=lips,
            eye_spacing=float(rng.uniform(0.056, 0.068)),
            face_scale=float(rng.uniform(0.92, 1.08)),
            nose_depth=float(rng.uniform(0.024, 0.036)),
        )

    def mirrored(self) -> "SubjectStyle":
        # the card is left/right symmetric by construction
        return self


@dataclass(frozen=True)
class SceneParams:
    image_size: tuple[int, int] = (640, 480)
    focal: float = 800.0
    yaw_deg: tuple[float, float] = (-20.0, 20.0)
    pitch_deg: tuple[float, float] = (-12.0, 12.0)
    roll_deg: tuple[float, float] = (-8.0, 8.0)
    distance: tuple[float, float] = (0.55, 0.75)
    lateral: tuple[float, float] = (-0.06, 0.06)
    vertical: tuple[float, float] = (-0.04, 0.04)
    theta_deg: tuple[float, float] = (-30.0, 30.0)
    phi_deg: tuple[float, float] = (-20.0, 20.0)
    lighting: tuple[float, float] = (0.8, 1.2)
    iris_shift_per_deg: float = 0.0002
    supersample: int = 4

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.focal, self.image_size)


@dataclass(frozen=True)
class TrajectoryParams:
    kind: str = "pursuit"  # fixation | pursuit | saccade | blink
    duration: int = 150
    period_frames: tuple[float, float] = (40.0, 90.0)
    saccade_every: tuple[int, int] = (8, 25)
    head_period_frames: tuple[float, float] = (80.0, 200.0)
    blink_prob: float = 0.0
    blink_length: int = 1

    def __post_init__(self):
        if self.kind not in ("fixation", "pursuit", "saccade", "blink"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")


# --------------------------------------------------------------------------
# face model (head frame, meters; card plane z = -FACE_OFFSET)

EYE_HALF_WIDTH = 0.014
EYE_HALF_HEIGHT = 0.0068
IRIS_RADIUS = 0.0056
PUPIL_RADIUS = 0.0024
EYE_Y = -0.02


def landmark_template(style: SubjectStyle = SubjectStyle(), openness: float = 1.0) -> np.ndarray:
    """68x3 landmarks in the head frame, 0-based standard 68-point order."""
    s = style.face_scale
    ex = style.eye_spacing / 2
    z0 = -FACE_OFFSET
    pts = np.zeros((68, 3))
    t = np.linspace(0, np.pi, 17)
    pts[0:17] = np.stack([-0.068 * s * np.cos(t), 0.005 + 0.085 * s * np.sin(t), z0 + 0.03 * np.cos(t) ** 2], 1)
    bx = np.linspace(-0.058, -0.014, 5) * s
    arch = np.sin(np.linspace(0.3, np.pi - 0.3, 5))
    brow_y = -0.042 * s - 0.007 * arch
    pts[17:22] = np.stack([bx, brow_y, np.full(5, z0 - 0.004)], 1)
    pts[22:27] = np.stack([-bx[::-1], brow_y[::-1], np.full(5, z0 - 0.004)], 1)
    nd = style.nose_depth
    pts[27:31] = np.stack(
        [np.zeros(4), np.linspace(-0.028, 0.012, 4) * s, z0 - nd * np.linspace(0.3, 1.0, 4)], 1
    )
    nbx = np.array([-0.016, -0.008, 0.0, 0.008, 0.016]) * s
    pts[31:36] = np.stack([nbx, np.array([0.02, 0.023, 0.025, 0.023, 0.02]) * s,
                           z0 - nd * np.array([0.3, 0.45, 0.55, 0.45, 0.3])], 1)
    # eyes: right eye (image-left, -x) then left eye
    a, b = EYE_HALF_WIDTH, EYE_HALF_HEIGHT * openness
    # outer corner, upper outer, upper inner, inner corner, lower inner, lower outer
    right = np.array([[-ex - a, EYE_Y], [-ex - a / 2, EYE_Y - b], [-ex + a / 2, EYE_Y - b],
                      [-ex + a, EYE_Y], [-ex + a / 2, EYE_Y + b * 0.8], [-ex - a / 2, EYE_Y + b * 0.8]])
    pts[36:42, :2] = right
    pts[42:48, :2] = right[[3, 2, 1, 0, 5, 4]] * np.array([-1, 1])
    pts[36:48, 2] = z0
    mw, my = 0.026 * s, 0.052 * s
    outer_top = np.array([[-mw, my], [-0.017 * s, my - 0.006], [-0.006 * s, my - 0.008], [0, my - 0.006],
                          [0.006 * s, my - 0.008], [0.017 * s, my - 0.006], [mw, my]])
    outer_bottom = np.array([[0.017 * s, my + 0.008], [0.006 * s, my + 0.011], [0, my + 0.011],
                             [-0.006 * s, my + 0.011], [-0.017 * s, my + 0.008]])
    # 57 mirrors 57 only if the bottom middle is a single point: use symmetric 5 points
    outer_bottom[1, 0], outer_bottom[3, 0] = 0.008 * s, -0.008 * s
    pts[48:55, :2] = outer_top
    pts[55:60, :2] = outer_bottom
    inner = np.array([[-0.019 * s, my], [-0.007 * s, my - 0.002], [0, my - 0.002], [0.007 * s, my - 0.002],
                      [0.019 * s, my], [0.007 * s, my + 0.003], [0, my + 0.003], [-0.007 * s, my + 0.003]])
    pts[60:68, :2] = inner
    pts[48:68, 2] = z0 - 0.008
    return pts


def eye_centers_head(style: SubjectStyle) -> tuple[np.ndarray, np.ndarray]:
    """(right, left) eyeball centers in the head frame; both on the card plane."""
    ex = style.eye_spacing / 2
    return np.array([-ex, EYE_Y, -FACE_OFFSET]), np.array([ex, EYE_Y, -FACE_OFFSET])


def iris_offset(theta_deg: float, phi_deg: float, k: float) -> np.ndarray:
    return np.array([-k * theta_deg, -k * phi_deg])


def head_rotation(yaw_deg: float, pitch_deg: float, roll_deg: float) -> np.ndarray:
    """Head-to-camera rotation; yaw about y, pitch about x, roll about z (degrees)."""
    Ry = geo.rotation_matrix([0, 1, 0], np.radians(yaw_deg))
    Rx = geo.rotation_matrix([1, 0, 0], np.radians(pitch_deg))
    Rz = geo.rotation_matrix([0, 0, 1], np.radians(roll_deg))
    return Ry @ Rx @ Rz


# --------------------------------------------------------------------------
# rendering

_TEX_RES = 4000.0  # texture pixels per meter
_TEX_HALF = (0.09, 0.12)  # card half extent (x, y) in meters


_BASE_CACHE: dict = {}


def _base_texture(style: SubjectStyle) -> np.ndarray:
    key = style
    tex = _BASE_CACHE.get(key)
    if tex is None:
        W = int(2 * _TEX_HALF[0] * _TEX_RES) + 1
        H = int(2 * _TEX_HALF[1] * _TEX_RES) + 1
        tex = np.zeros((H, W, 4), np.uint8)
        s = style.face_scale
        cv2.ellipse(tex, _P(tex, 0, 0.012 * s), (_L(0.074 * s), _L(0.102 * s)), 0, 0, 360,
                    (*style.skin, 255), -1, cv2.LINE_AA, _SH)
        if len(_BASE_CACHE) > 64:
            _BASE_CACHE.clear()
        _BASE_CACHE[key] = tex
    return tex


_SH = 4


def _P(tex, x, y):
    H, W = tex.shape[:2]
    f = float(1 << _SH)
    return (int(round(((W - 1) / 2 + x * _TEX_RES) * f)), int(round(((H - 1) / 2 + y * _TEX_RES) * f)))


def _L(r):
    return int(round(r * _TEX_RES * (1 << _SH)))


def _texture(style: SubjectStyle, theta_deg, phi_deg, openness, k) -> np.ndarray:
    """BGRA texture of the card; pixel (u, v) <-> head (x, y) = ((u - u0)/res, (v - v0)/res)."""
    tex = _base_texture(style).copy()
    H, W = tex.shape[:2]
    u0, v0 = (W - 1) / 2, (H - 1) / 2
    f = float(1 << _SH)
    dx, dy = iris_offset(theta_deg, phi_deg, k)
    for cx in (-style.eye_spacing / 2, style.eye_spacing / 2):
        # draw inside a box around the eye, in box-local coordinates
        bu0 = int(u0 + (cx - 2 * EYE_HALF_WIDTH) * _TEX_RES)
        bv0 = int(v0 + (EYE_Y - 2 * EYE_HALF_WIDTH) * _TEX_RES)
        bu1 = int(u0 + (cx + 2 * EYE_HALF_WIDTH) * _TEX_RES) + 1
        bv1 = int(v0 + (EYE_Y + 2 * EYE_HALF_WIDTH) * _TEX_RES) + 1
        box = tex[bv0:bv1, bu0:bu1]

        def P(x, y):
            return (int(round((u0 - bu0 + x * _TEX_RES) * f)), int(round((v0 - bv0 + y * _TEX_RES) * f)))

        axes = (_L(EYE_HALF_WIDTH), _L(EYE_HALF_HEIGHT * max(openness, 0.15)))
        if openness <= 0.05:
            cv2.ellipse(box, P(cx, EYE_Y), axes, 0, 0, 360, (*style.stroke, 255), -1, cv2.LINE_AA, _SH)
            continue
        eye = np.zeros(box.shape[:2], np.uint8)
        cv2.ellipse(eye, P(cx, EYE_Y), axes, 0, 0, 360, 255, -1, cv2.LINE_AA, _SH)
        layer = np.empty(box.shape[:2] + (3,), np.uint8)
        layer[:] = (235, 240, 240)
        cv2.circle(layer, P(cx + dx, EYE_Y + dy), _L(IRIS_RADIUS), style.iris, -1, cv2.LINE_AA, _SH)
        cv2.circle(layer, P(cx + dx, EYE_Y + dy), _L(PUPIL_RADIUS), (10, 10, 10), -1, cv2.LINE_AA, _SH)
        a = (eye.astype(np.float32) / 255.0)[..., None]
        box[..., :3] = (a * layer + (1 - a) * box[..., :3] + 0.5).astype(np.uint8)
        cv2.ellipse(box, P(cx, EYE_Y), axes, 0, 0, 360, (*style.stroke, 255), 2, cv2.LINE_AA, _SH)
    return tex


def _card_homography(C: np.ndarray, pose: HeadPose, tex_shape) -> np.ndarray:
    """Texture pixel -> image pixel homography for the card plane."""
    H_t, W_t = tex_shape[:2]
    u0, v0 = (W_t - 1) / 2, (H_t - 1) / 2
    Hm, p = pose.H, pose.p
    cols = np.stack([Hm[:, 0] / _TEX_RES, Hm[:, 1] / _TEX_RES,
                     Hm @ np.array([-u0 / _TEX_RES, -v0 / _TEX_RES, -FACE_OFFSET]) + p], axis=1)
    return C @ cols


_STROKES = [
    (list(range(0, 17)), False, 2),
    (list(range(17, 22)), False, 4),
    (list(range(22, 27)), False, 4),
    (list(range(27, 31)), False, 3),
    (list(range(31, 36)), False, 3),
]


def render_image(scene: SceneParams, style: SubjectStyle, pose: HeadPose, theta_deg: float, phi_deg: float,
                 openness: float = 1.0, lighting: float = 1.0, mark_landmarks: bool = False) -> np.ndarray:
    """Render one BGR frame; anti-aliased by supersampling the face region."""
    ss = scene.supersample
    Wi, Hi = scene.image_size
    K = scene.intrinsics
    img = np.empty((Hi, Wi, 3), np.uint8)
    img[:] = np.array(style.background, np.uint8)
    tex = _texture(style, theta_deg, phi_deg, openness, scene.iris_shift_per_deg)
    G = _card_homography(K.matrix, pose, tex.shape)
    corners = np.array([[0, 0], [tex.shape[1] - 1, 0], [0, tex.shape[0] - 1], [tex.shape[1] - 1, tex.shape[0] - 1]])
    h = np.c_[corners, np.ones(4)] @ G.T
    lm = (pose.H @ landmark_template(style, openness).T).T + pose.p
    if np.any(h[:, 2] <= 0) or np.any(lm[:, 2] <= 0):
        return _light(img, lighting)
    xy = np.vstack([h[:, :2] / h[:, 2:], K.project(lm)])
    x0 = int(np.clip(np.floor(xy[:, 0].min()) - 3, 0, Wi))
    x1 = int(np.clip(np.ceil(xy[:, 0].max()) + 4, 0, Wi))
    y0 = int(np.clip(np.floor(xy[:, 1].min()) - 3, 0, Hi))
    y1 = int(np.clip(np.ceil(xy[:, 1].max()) + 4, 0, Hi))
    if x1 <= x0 or y1 <= y0:
        return _light(img, lighting)
    # supersampled canvas covering final pixels [x0, x1) x [y0, y1)
    C_ss = np.array([[K.fx * ss, 0, (K.cx - x0 + 0.5) * ss - 0.5],
                     [0, K.fy * ss, (K.cy - y0 + 0.5) * ss - 0.5], [0, 0, 1]])
    cw, ch = (x1 - x0) * ss, (y1 - y0) * ss
    canvas = np.empty((ch, cw, 3), np.uint8)
    canvas[:] = np.array(style.background, np.uint8)
    roi = cv2.warpPerspective(tex, _card_homography(C_ss, pose, tex.shape), (cw, ch), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    a = roi[..., 3].astype(np.float32) * (1.0 / 255.0)
    canvas = cv2.blendLinear(np.ascontiguousarray(roi[..., :3]), canvas, a, 1.0 - a)
    uv = lm @ C_ss.T
    uv = uv[:, :2] / uv[:, 2:]
    q = np.round(uv * (1 << _SH)).astype(np.int32)
    for idx, closed, width in _STROKES:
        cv2.polylines(canvas, [q[idx]], closed, style.stroke, max(1, width * ss // 2), cv2.LINE_AA, _SH)
    cv2.fillPoly(canvas, [q[48:60]], style.lips, cv2.LINE_AA, _SH)
    cv2.fillPoly(canvas, [q[60:68]], style.stroke, cv2.LINE_AA, _SH)
    if mark_landmarks:
        for pt in q:
            cv2.circle(canvas, (int(pt[0]), int(pt[1])), 2 * ss * (1 << _SH), (0, 255, 0), -1, cv2.LINE_AA, _SH)
    img[y0:y1, x0:x1] = cv2.resize(canvas, (x1 - x0, y1 - y0), interpolation=cv2.INTER_AREA)
    return _light(img, lighting)


def _light(img, lighting):
    if lighting == 1.0:
        return img
    return np.clip(img.astype(np.float32) * lighting + 0.5, 0, 255).astype(np.uint8)


def render_frame(scene: SceneParams, style: SubjectStyle, pose: HeadPose, gaze_deg, rng=None, *,
                 openness: float = 1.0, lighting: float = 1.0, subject_id: str = "s00",
                 session: Session = Session(), frame_index: int = 0, camera_id: str = "cam0",
                 image_ref: str = "") -> tuple[np.ndarray, FrameRecord]:
    """Render one frame and its exact annotation.

    ``gaze_deg`` is the eyeball-in-head (theta, phi) in degrees.  ``rng`` is
    accepted for API symmetry; the render itself is deterministic.
    """
    theta, phi = float(gaze_deg[0]), float(gaze_deg[1])
    img = render_image(scene, style, pose, theta, phi, openness, lighting)
    H, p = pose.H, pose.p
    r_h, l_h = eye_centers_head(style)
    eye_r = H @ r_h + p
    eye_l = H @ l_h + p
    g = H @ geo.angles_to_gaze(np.radians([theta, phi]))
    mid = 0.5 * (eye_r + eye_l)
    landmarks = (H @ landmark_template(style, openness).T).T + p
    K = scene.intrinsics
    uv = K.project(landmarks)
    Wi, Hi = scene.image_size
    visible = np.all(landmarks[:, 2] > 0) and np.any(
        (uv[:, 0] >= 0) & (uv[:, 0] < Wi) & (uv[:, 1] >= 0) & (uv[:, 1] < Hi)
    )
    rec = FrameRecord(
        subject_id=subject_id,
        session=session,
        frame_index=frame_index,
        image_ref=image_ref,
        camera_id=camera_id,
        head=pose,
        eye_left=eye_l,
        eye_right=eye_r,
        landmarks=landmarks,
        gaze_target=mid + 0.5 * g,
        flags=Flags(geometry_recovered=bool(visible)),
        camera=Camera(K, Wi, Hi),
    )
    return img, rec


# --------------------------------------------------------------------------
# trajectories and datasets

def _smooth_series(rng, n, lo, hi, period):
    """Sum of two sinusoids spanning roughly [lo, hi]."""
    t = np.arange(n)
    mid, amp = (lo + hi) / 2, (hi - lo) / 2
    p1 = rng.uniform(*period)
    p2 = rng.uniform(*period) * 1.7
    w = rng.uniform(0.55, 0.75)
    x = w * np.sin(2 * np.pi * t / p1 + rng.uniform(0, 2 * np.pi)) \
        + (1 - w) * np.sin(2 * np.pi * t / p2 + rng.uniform(0, 2 * np.pi))
    return mid + amp * 0.95 * x


def gaze_trajectory(rng, traj: TrajectoryParams, scene: SceneParams, n: int) -> np.ndarray:
    """(n, 2) eyeball-in-head angles in degrees."""
    th, ph = scene.theta_deg, scene.phi_deg
    if traj.kind == "fixation":
        g = np.array([rng.uniform(*th), rng.uniform(*ph)])
        return np.clip(g + rng.normal(0, 0.3, (n, 2)), [th[0], ph[0]], [th[1], ph[1]])
    if traj.kind == "saccade":
        out = np.empty((n, 2))
        i = 0
        while i < n:
            j = min(n, i + int(rng.integers(*traj.saccade_every)))
            out[i:j] = [rng.uniform(*th), rng.uniform(*ph)]
            i = j
        return out
    return np.stack([_smooth_series(rng, n, *th, traj.period_frames),
                     _smooth_series(rng, n, *ph, traj.period_frames)], 1)


def head_trajectory(rng, scene: SceneParams, n: int, moving: bool, traj: TrajectoryParams):
    """(n, 3) yaw/pitch/roll degrees and (n, 3) head-center positions."""
    ranges = [scene.yaw_deg, scene.pitch_deg, scene.roll_deg]
    pos_ranges = [scene.lateral, scene.vertical, scene.distance]
    if moving:
        ang = np.stack([_smooth_series(rng, n, *r, traj.head_period_frames) for r in ranges], 1)
        pos = np.stack([_smooth_series(rng, n, *r, traj.head_period_frames) for r in pos_ranges], 1)
    else:
        ang = np.tile([rng.uniform(*r) for r in ranges], (n, 1)) + rng.normal(0, 0.2, (n, 3))
        pos = np.tile([rng.uniform(*r) for r in pos_ranges], (n, 1))
    # the head center sits behind the face card
    pos = pos.copy()
    pos[:, 2] += FACE_OFFSET
    return ang, pos


def blink_mask(rng, traj: TrajectoryParams, n: int) -> np.ndarray:
    m = np.zeros(n, bool)
    if traj.blink_prob <= 0 and traj.kind != "blink":
        return m
    prob = traj.blink_prob if traj.blink_prob > 0 else 0.1
    starts = rng.random(n) < prob / max(1, traj.blink_length)
    for i in np.flatnonzero(starts):
        m[i:i + traj.blink_length] = True
    return m


@dataclass(frozen=True)
class DatasetSpec:
    n_subjects: int = 4
    frames_per_subject: int = 50
    sessions: tuple[tuple[str, str], ...] = (("FT", "static"), ("FT", "moving"))
    scene: SceneParams = field(default_factory=SceneParams)
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    seed: int = 0


def iter_dataset(spec: DatasetSpec):
    """Yield ``(image, record, blink)`` for every frame, deterministically."""
    scene = spec.scene
    n_sess = len(spec.sessions)
    for si in range(spec.n_subjects):
        sid = f"s{si + 1:02d}"
        style = SubjectStyle.from_seed(spec.seed * 1000 + si)
        per = [spec.frames_per_subject // n_sess + (1 if j < spec.frames_per_subject % n_sess else 0)
               for j in range(n_sess)]
        for j, ((target, head_kind), n) in enumerate(zip(spec.sessions, per)):
            rng = np.random.default_rng([spec.seed, si, j])
            gaze = gaze_trajectory(rng, spec.trajectory, scene, n)
            ang, pos = head_trajectory(rng, scene, n, head_kind == "moving", spec.trajectory)
            blinks = blink_mask(rng, spec.trajectory, n)
            light = rng.uniform(*scene.lighting)
            session = Session(target, head_kind, f"L{j}")
            for i in range(n):
                pose = HeadPose(head_rotation(*ang[i]), pos[i])
                img, rec = render_frame(
                    scene, style, pose, gaze[i], openness=0.0 if blinks[i] else 1.0, lighting=light,
                    subject_id=sid, session=session, frame_index=i,
                )
                yield img, rec, bool(blinks[i])


def generate_dataset(out_dir, spec: DatasetSpec, overwrite: bool = False, image_ext: str = ".png"):
    """Write images, ``manifest.jsonl`` and ``intrinsics.csv`` under ``out_dir``.

    Returns the manifest path.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise FileExistsError(f"{out} exists and is not empty (pass overwrite to replace it)")
        shutil.rmtree(out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records, blinks = [], []
    for img, rec, blink in iter_dataset(spec):
        rel = Path("images") / rec.subject_id / f"{rec.session.head_kind}_{rec.session.lighting_id}_{rec.frame_index:05d}{image_ext}"
        (out / rel).parent.mkdir(parents=True, exist_ok=True)
        cv2.imwrite(str(out / rel), img)
        records.append(replace(rec, image_ref=str(rel)))
        blinks.append(blink)
    write_manifest(out / "manifest.jsonl", records)
    write_intrinsics_table(out / "intrinsics.csv", {"cam0": Camera(spec.scene.intrinsics, *spec.scene.image_size)})
    with open(out / "blinks.txt", "w") as fh:
        for rec, b in zip(records, blinks):
            if b:
                fh.write(f"{rec.subject_id} {rec.session.head_kind} {rec.session.lighting_id} {rec.frame_index}\n")
    logger.info("wrote %d frames to %s", len(records), out)
    return out / "manifest.jsonl"
