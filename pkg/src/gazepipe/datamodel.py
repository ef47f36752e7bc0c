"""Frame records, manifest I/O, frame filtering, patch construction,
landmark features, sequence windows and subject fold plans."""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

from . import geometry as geo
from .geometry import CameraIntrinsics, HeadPose, NormalizationTransform

logger = logging.getLogger(__name__)

N_LANDMARKS = 68
LANDMARK_DIM = 3 * N_LANDMARKS

FACE_PATCH_SIZE = (250, 250)
EYE_PATCH_SIZE = (70, 58)
FACE_INPUT_SIZE = (224, 224)
EYE_INPUT_SIZE = (60, 48)

# Index permutation mapping each of the 68 landmarks to its mirror partner.
LANDMARK_MIRROR = np.array(
    list(range(16, -1, -1))
    + list(range(26, 21, -1)) + list(range(21, 16, -1))
    + [27, 28, 29, 30]
    + [35, 34, 33, 32, 31]
    + [45, 44, 43, 42, 47, 46]
    + [39, 38, 37, 36, 41, 40]
    + [54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55]
    + [64, 63, 62, 61, 60, 67, 66, 65]
)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Session:
    target_kind: str = "FT"
    head_kind: str = "static"
    lighting_id: str = "0"

    def __post_init__(self):
        if self.target_kind not in ("FT", "CS"):
            raise ValueError(f"target_kind must be FT or CS, got {self.target_kind!r}")
        if self.head_kind not in ("static", "moving"):
            raise ValueError(f"head_kind must be static or moving, got {self.head_kind!r}")


@dataclass(frozen=True)
class Flags:
    face_detected: bool = True
    landmarks_detected: bool = True
    looking_at_target: bool = True
    geometry_recovered: bool = True


@dataclass
class Camera:
    intrinsics: CameraIntrinsics
    width: int
    height: int


@dataclass
class FrameRecord:
    subject_id: str
    session: Session
    frame_index: int
    image_ref: str
    camera_id: str
    head: HeadPose
    eye_left: np.ndarray
    eye_right: np.ndarray
    landmarks: np.ndarray
    gaze_target: np.ndarray | None = None
    gaze: np.ndarray | None = None
    flags: Flags = field(default_factory=Flags)
    camera: Camera | None = None

    def __post_init__(self):
        self.eye_left = np.asarray(self.eye_left, dtype=float).reshape(3)
        self.eye_right = np.asarray(self.eye_right, dtype=float).reshape(3)
        lm = np.asarray(self.landmarks, dtype=float)
        if lm.size != LANDMARK_DIM:
            raise ValueError(f"landmark count must be {N_LANDMARKS}x3, got {lm.size} values")
        self.landmarks = lm.reshape(N_LANDMARKS, 3)
        if np.allclose(self.eye_left, self.eye_right):
            raise ValueError("eye centers coincide")
        if self.gaze_target is not None:
            self.gaze_target = np.asarray(self.gaze_target, dtype=float).reshape(3)
        if self.gaze is not None:
            self.gaze = np.asarray(self.gaze, dtype=float).reshape(3)

    @property
    def session_key(self) -> tuple:
        s = self.session
        return (self.subject_id, s.target_kind, s.head_kind, s.lighting_id)

    @property
    def key(self) -> tuple:
        return self.session_key + (self.frame_index,)

    @property
    def eye_midpoint(self) -> np.ndarray:
        return 0.5 * (self.eye_left + self.eye_right)


# --------------------------------------------------------------------------
# manifest I/O

def _vec(obj, n, name, lineno):
    arr = np.asarray(obj, dtype=float)
    if arr.size != n:
        raise ManifestError(f"line {lineno}: {name} must have {n} values, got {arr.size}")
    return arr


def load_intrinsics_table(path) -> dict[str, Camera]:
    """CSV with columns camera_id, fx, fy, cx, cy, width, height."""
    cams = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cams[row["camera_id"]] = Camera(
                CameraIntrinsics(float(row["fx"]), float(row["fy"]), float(row["cx"]), float(row["cy"])),
                int(row["width"]),
                int(row["height"]),
            )
    return cams


def write_intrinsics_table(path, cameras: dict[str, Camera]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["camera_id", "fx", "fy", "cx", "cy", "width", "height"])
        for cid, cam in sorted(cameras.items()):
            k = cam.intrinsics
            w.writerow([cid, repr(k.fx), repr(k.fy), repr(k.cx), repr(k.cy), cam.width, cam.height])


def record_to_dict(rec: FrameRecord) -> dict:
    d = {
        "subject_id": rec.subject_id,
        "session": {
            "target_kind": rec.session.target_kind,
            "head_kind": rec.session.head_kind,
            "lighting_id": rec.session.lighting_id,
        },
        "frame_index": rec.frame_index,
        "image_ref": rec.image_ref,
        "camera_id": rec.camera_id,
        "head_R": rec.head.H.tolist(),
        "head_p": rec.head.p.tolist(),
        "eye_left": rec.eye_left.tolist(),
        "eye_right": rec.eye_right.tolist(),
        "landmarks": rec.landmarks.tolist(),
        "flags": {
            "face_detected": rec.flags.face_detected,
            "landmarks_detected": rec.flags.landmarks_detected,
            "looking_at_target": rec.flags.looking_at_target,
            "geometry_recovered": rec.flags.geometry_recovered,
        },
    }
    if rec.gaze_target is not None:
        d["gaze_target"] = rec.gaze_target.tolist()
    if rec.gaze is not None:
        d["gaze"] = rec.gaze.tolist()
    return d


def record_from_dict(d: dict, lineno: int = 0) -> FrameRecord:
    try:
        lm = np.asarray(d["landmarks"], dtype=float)
        if lm.size != LANDMARK_DIM:
            raise ManifestError(
                f"line {lineno}: landmark count must be {N_LANDMARKS}, got {lm.size // 3 if lm.size % 3 == 0 else lm.size / 3:g}"
            )
        flags = Flags(**{k: bool(v) for k, v in d.get("flags", {}).items()})
        gaze_target = d.get("gaze_target")
        gaze = d.get("gaze")
        if gaze_target is None and gaze is None:
            raise ManifestError(f"line {lineno}: one of gaze_target or gaze is required")
        return FrameRecord(
            subject_id=str(d["subject_id"]),
            session=Session(**d.get("session", {})),
            frame_index=int(d["frame_index"]),
            image_ref=str(d["image_ref"]),
            camera_id=str(d["camera_id"]),
            head=HeadPose(_vec(d["head_R"], 9, "head_R", lineno).reshape(3, 3), _vec(d["head_p"], 3, "head_p", lineno)),
            eye_left=_vec(d["eye_left"], 3, "eye_left", lineno),
            eye_right=_vec(d["eye_right"], 3, "eye_right", lineno),
            landmarks=lm,
            gaze_target=None if gaze_target is None else _vec(gaze_target, 3, "gaze_target", lineno),
            gaze=None if gaze is None else _vec(gaze, 3, "gaze", lineno),
            flags=flags,
        )
    except ManifestError:
        raise
    except KeyError as e:
        raise ManifestError(f"line {lineno}: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ManifestError(f"line {lineno}: {e}") from None


def load_manifest(path, intrinsics_path=None) -> list[FrameRecord]:
    """Read a JSON-lines manifest.

    The intrinsics table defaults to ``intrinsics.csv`` next to the manifest.
    ``image_ref`` paths are resolved relative to the manifest directory.
    """
    path = Path(path)
    if intrinsics_path is None:
        intrinsics_path = path.parent / "intrinsics.csv"
    cameras = load_intrinsics_table(intrinsics_path) if Path(intrinsics_path).exists() else {}
    records = []
    last_index: dict[tuple, int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: invalid JSON ({e.msg})") from None
            rec = record_from_dict(d, lineno)
            if rec.camera_id not in cameras:
                raise ManifestError(f"line {lineno}: unknown camera_id {rec.camera_id!r}")
            rec.camera = cameras[rec.camera_id]
            ref = Path(rec.image_ref)
            if not ref.is_absolute():
                rec.image_ref = str(path.parent / ref)
            prev = last_index.get(rec.session_key)
            if prev is not None and rec.frame_index <= prev:
                raise ManifestError(
                    f"line {lineno}: frame_index {rec.frame_index} not increasing within session {rec.session_key}"
                )
            last_index[rec.session_key] = rec.frame_index
            records.append(rec)
    return records


def write_manifest(path, records: Iterable[FrameRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), separators=(",", ":")) + "\n")


def load_image(record: FrameRecord) -> np.ndarray:
    img = cv2.imread(record.image_ref, cv2.IMREAD_COLOR)
    if img is None:
        raise OSError(f"cannot read image {record.image_ref}")
    return img


# --------------------------------------------------------------------------
# ground truth and filtering

def compute_gt_gaze(record: FrameRecord) -> np.ndarray:
    """Unit gaze vector from the eyeball-center midpoint towards the target."""
    if record.gaze is not None:
        g = record.gaze
        return g / np.linalg.norm(g)
    if record.gaze_target is None:
        raise ValueError("record has neither gaze_target nor gaze")
    d = record.gaze_target - record.eye_midpoint
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise ValueError("gaze target coincides with the eye midpoint")
    return d / n


class RejectReason(str, enum.Enum):
    FACE = "face"
    LANDMARKS = "landmarks"
    NOT_LOOKING = "not-looking"
    GEOMETRY = "geometry"
    EYEBALL = "eyeball-constraint"


MAX_EYEBALL_THETA_DEG = 40.0
MAX_EYEBALL_PHI_DEG = 30.0


def eyeball_angles(record: FrameRecord, frame: str = "head", norm_config=None) -> np.ndarray:
    """Gaze angles used by the physical eyeball-rotation constraint.

    ``frame="head"`` expresses the gaze in the head frame (H^T g);
    ``frame="normalized"`` uses the face virtual camera instead.
    """
    g = compute_gt_gaze(record)
    if frame == "head":
        return geo.gaze_to_angles(record.head.H.T @ g)
    if frame == "normalized":
        cfg = norm_config or NormalizationConfig()
        R = geo.compute_normalizing_rotation(face_pose(record, cfg))
        return geo.gaze_to_angles(R @ g)
    raise ValueError(f"unknown constraint frame {frame!r}")


def rejection_reason(record: FrameRecord, frame: str = "head", norm_config=None) -> RejectReason | None:
    f = record.flags
    if not f.face_detected:
        return RejectReason.FACE
    if not f.landmarks_detected:
        return RejectReason.LANDMARKS
    if not f.looking_at_target:
        return RejectReason.NOT_LOOKING
    if not f.geometry_recovered:
        return RejectReason.GEOMETRY
    try:
        theta, phi = np.degrees(eyeball_angles(record, frame, norm_config))
    except geo.HemisphereError:
        return RejectReason.EYEBALL
    except ValueError:
        return RejectReason.GEOMETRY
    if abs(theta) > MAX_EYEBALL_THETA_DEG or abs(phi) > MAX_EYEBALL_PHI_DEG:
        return RejectReason.EYEBALL
    return None


def filter_frames(records, frame: str = "head", norm_config=None):
    """Split records into ``(kept, rejected)``; rejected items are ``(record, reason)``."""
    kept, rejected = [], []
    for rec in records:
        reason = rejection_reason(rec, frame, norm_config)
        if reason is None:
            kept.append(rec)
        else:
            rejected.append((rec, reason))
    return kept, rejected


# --------------------------------------------------------------------------
# normalization into network inputs

@dataclass
class NormalizationConfig:
    face_distance: float = geo.DEFAULT_FACE_DISTANCE
    face_focal: float = 650.0
    face_size: tuple[int, int] = FACE_PATCH_SIZE
    face_offset: float = 0.1
    # head frame axis pointing out of the face is (0, 0, forward_sign)
    forward_sign: float = -1.0
    eye_distance: float = geo.DEFAULT_FACE_DISTANCE
    eye_focal: float = 1300.0
    eye_size: tuple[int, int] = EYE_PATCH_SIZE
    landmark_scale: float = 1.0
    constraint_frame: str = "head"

    @property
    def face_camera(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.face_focal, self.face_size)

    @property
    def eye_camera(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.eye_focal, self.eye_size)

    @property
    def head_forward(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.forward_sign])


def face_pose(record: FrameRecord, cfg: NormalizationConfig) -> HeadPose:
    """Head pose re-anchored at the face reference point in front of the head center."""
    H = record.head.H
    return HeadPose(H, record.head.p + cfg.face_offset * (H @ cfg.head_forward))


def _intrinsics(record: FrameRecord, C_o) -> CameraIntrinsics:
    if C_o is not None:
        return C_o
    if record.camera is None:
        raise ValueError(f"no intrinsics for camera {record.camera_id!r}")
    return record.camera.intrinsics


def build_face_patch(record, image, C_o=None, cfg: NormalizationConfig | None = None):
    """250x250 normalized face image and its transform."""
    cfg = cfg or NormalizationConfig()
    t = geo.build_normalization(
        face_pose(record, cfg), cfg.face_distance, _intrinsics(record, C_o), cfg.face_camera, cfg.face_size
    )
    return geo.warp_image(image, t), t


def build_eye_halves(record, image, C_o=None, cfg: NormalizationConfig | None = None):
    """Two 70x58 eye patches joined side by side (subject's right eye on the left).

    Returns the (58, 140, 3) image and the two transforms (right, left).
    """
    cfg = cfg or NormalizationConfig()
    C_o = _intrinsics(record, C_o)
    patches, transforms = [], []
    for center in (record.eye_right, record.eye_left):
        t = geo.build_normalization(
            HeadPose(record.head.H, center), cfg.eye_distance, C_o, cfg.eye_camera, cfg.eye_size
        )
        patches.append(geo.warp_image(image, t))
        transforms.append(t)
    return np.concatenate(patches, axis=1), transforms


def center_crop(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Center crop to ``(width, height)``."""
    w, h = size
    H, W = img.shape[:2]
    if W < w or H < h:
        raise ValueError(f"cannot crop {W}x{H} to {w}x{h}")
    x0, y0 = (W - w) // 2, (H - h) // 2
    return img[y0:y0 + h, x0:x0 + w]


def crop_eye_halves(eyes: np.ndarray, size=EYE_INPUT_SIZE) -> np.ndarray:
    half = eyes.shape[1] // 2
    return np.concatenate([center_crop(eyes[:, :half], size), center_crop(eyes[:, half:], size)], axis=1)


def build_eyes_patch(record, image, C_o=None, cfg: NormalizationConfig | None = None) -> np.ndarray:
    """Final 120x48 joint eyes image (center crops of the two 70x58 warps)."""
    halves, _ = build_eye_halves(record, image, C_o, cfg)
    return crop_eye_halves(halves)


def landmark_feature(landmarks, R_face, w: float = 1.0) -> np.ndarray:
    """204-D landmark vector in [0, w].

    Landmarks are rotated into the face virtual camera, mean-subtracted and
    min-max scaled per axis, then flattened as x1, y1, z1, x2, ...
    """
    L = np.asarray(landmarks, dtype=float).reshape(N_LANDMARKS, 3) @ np.asarray(R_face).T
    L = L - L.mean(axis=0)
    lo, hi = L.min(axis=0), L.max(axis=0)
    span = hi - lo
    out = np.empty_like(L)
    for ax in range(3):
        if span[ax] <= 1e-12 * max(1.0, np.abs(L[:, ax]).max()):
            out[:, ax] = 0.5
        else:
            out[:, ax] = (L[:, ax] - lo[ax]) / span[ax]
    return np.clip(out, 0.0, 1.0).reshape(-1) * w


def mirror_landmark_feature(feature: np.ndarray, w: float = 1.0) -> np.ndarray:
    """Landmark feature of the horizontally mirrored face."""
    L = np.asarray(feature).reshape(N_LANDMARKS, 3)[LANDMARK_MIRROR].copy()
    L[:, 0] = w - L[:, 0]
    return L.reshape(-1)


@dataclass
class NormalizedSample:
    face_patch: np.ndarray
    eyes_patch: np.ndarray
    landmark_feature: np.ndarray
    label: np.ndarray
    R: np.ndarray
    key: tuple
    gaze: np.ndarray | None = None
    head_H: np.ndarray | None = None

    @property
    def subject_id(self) -> str:
        return self.key[0]

    @property
    def session_key(self) -> tuple:
        return self.key[:-1]

    @property
    def frame_index(self) -> int:
        return self.key[-1]


def normalize_record(record: FrameRecord, image: np.ndarray | None = None,
                     cfg: NormalizationConfig | None = None) -> NormalizedSample:
    cfg = cfg or NormalizationConfig()
    if image is None:
        image = load_image(record)
    face, t = build_face_patch(record, image, None, cfg)
    eyes, _ = build_eye_halves(record, image, None, cfg)
    g = compute_gt_gaze(record)
    g_n = t.R @ g
    return NormalizedSample(
        face_patch=face,
        eyes_patch=eyes,
        landmark_feature=landmark_feature(record.landmarks, t.R, cfg.landmark_scale).astype(np.float32),
        label=geo.gaze_to_angles(g_n),
        R=t.R,
        key=record.key,
        gaze=g,
        head_H=record.head.H,
    )


# --------------------------------------------------------------------------
# sequences

@dataclass
class SequenceWindow:
    samples: list
    target: np.ndarray

    def __post_init__(self):
        keys = {s.session_key for s in self.samples}
        if len(keys) != 1:
            raise ValueError("window spans more than one session")
        idx = [s.frame_index for s in self.samples]
        if any(b - a != 1 for a, b in zip(idx, idx[1:])):
            raise ValueError(f"window frames are not consecutive: {idx}")


def consecutive_runs(indices: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open ``(start, stop)`` positions of maximal runs of consecutive indices."""
    runs = []
    start = 0
    for i in range(1, len(indices) + 1):
        if i == len(indices) or indices[i] != indices[i - 1] + 1:
            if len(indices):
                runs.append((start, i))
            start = i
    return runs


def window_positions(indices: Sequence[int], s: int, stride: int = 1) -> list[tuple[int, ...]]:
    if s < 1 or stride < 1:
        raise ValueError("sequence length and stride must be >= 1")
    out = []
    for a, b in consecutive_runs(indices):
        for start in range(a, b - s + 1, stride):
            out.append(tuple(range(start, start + s)))
    return out


def make_windows(samples, s: int = 4, stride: int = 1) -> list[SequenceWindow]:
    """Sliding windows of ``s`` consecutive frames of one session; windows
    never bridge a gap left by filtering."""
    indices = [x.frame_index for x in samples]
    return [
        SequenceWindow([samples[i] for i in pos], samples[pos[-1]].label)
        for pos in window_positions(indices, s, stride)
    ]


def group_by_session(items, key=lambda x: x.session_key) -> dict[tuple, list]:
    groups: dict[tuple, list] = {}
    for it in items:
        groups.setdefault(key(it), []).append(it)
    for k in groups:
        groups[k].sort(key=lambda x: x.frame_index if hasattr(x, "frame_index") else x.key[-1])
    return groups


# --------------------------------------------------------------------------
# folds

@dataclass
class FoldPlan:
    k: int
    groups: dict[str, int]
    mode: str = "kfold"

    def __post_init__(self):
        used = set(self.groups.values())
        if used != set(range(self.k)):
            raise ValueError(f"fold plan must use every fold 0..{self.k - 1}, got {sorted(used)}")

    def subjects_in(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.groups.items() if f == fold)

    def subjects_out(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.groups.items() if f != fold)


def plan_folds(subjects, mode: str = "kfold", k: int | None = None, groups=None) -> FoldPlan:
    """Subject-level fold assignment.

    ``groups`` (subject -> fold) is honored verbatim; otherwise subjects are
    sorted and dealt round-robin into ``k`` folds.  ``mode="loso"`` puts every
    subject in its own fold.
    """
    if groups is not None:
        if isinstance(groups, dict):
            items = list(groups.items())
        else:
            items = list(groups)
        seen = set()
        for s, _ in items:
            if s in seen:
                raise ValueError(f"subject {s!r} assigned twice")
            seen.add(s)
        assignment = {str(s): int(f) for s, f in items}
        return FoldPlan(max(assignment.values()) + 1, assignment, "explicit")
    subjects = sorted(set(subjects))
    if not subjects:
        raise ValueError("no subjects to split")
    if mode in ("loso", "leave-one-subject-out"):
        return FoldPlan(len(subjects), {s: i for i, s in enumerate(subjects)}, "leave-one-subject-out")
    if mode != "kfold":
        raise ValueError(f"unknown fold mode {mode!r}")
    if k is None or not 1 <= k <= len(subjects):
        raise ValueError(f"k must be in [1, {len(subjects)}], got {k}")
    return FoldPlan(k, {s: i % k for i, s in enumerate(subjects)}, "kfold")


def load_group_file(path) -> list[tuple[str, int]]:
    """``subject_id fold_index`` per line (whitespace or comma separated)."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'subject fold'")
            out.append((parts[0], int(parts[1])))
    return out


# --------------------------------------------------------------------------
# columnar storage for training and evaluation

class SampleSet:
    """Normalized samples stored as stacked arrays (uint8 patches)."""

    def __init__(self, faces, eyes, landmarks, labels, R, keys, gaze=None, head_H=None):
        self.faces = faces
        self.eyes = eyes
        self.landmarks = np.asarray(landmarks, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.float64)
        self.R = np.asarray(R, dtype=np.float64)
        self.keys = [tuple(k) for k in keys]
        n = len(self.keys)
        self.gaze = np.asarray(gaze, dtype=np.float64) if gaze is not None else geo.denormalize_gaze(
            geo.angles_to_gaze(self.labels), self.R)
        self.head_H = np.asarray(head_H, dtype=np.float64) if head_H is not None else np.tile(np.eye(3), (n, 1, 1))
        self.index = {k: i for i, k in enumerate(self.keys)}

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, i) -> NormalizedSample:
        return NormalizedSample(self.faces[i], self.eyes[i], self.landmarks[i], self.labels[i], self.R[i],
                                self.keys[i], self.gaze[i], self.head_H[i])

    @classmethod
    def from_samples(cls, samples: Sequence[NormalizedSample]) -> "SampleSet":
        return cls(
            np.stack([s.face_patch for s in samples]) if samples else np.zeros((0, 250, 250, 3), np.uint8),
            np.stack([s.eyes_patch for s in samples]) if samples else np.zeros((0, 58, 140, 3), np.uint8),
            np.stack([s.landmark_feature for s in samples]) if samples else np.zeros((0, LANDMARK_DIM)),
            np.stack([s.label for s in samples]) if samples else np.zeros((0, 2)),
            np.stack([s.R for s in samples]) if samples else np.zeros((0, 3, 3)),
            [s.key for s in samples],
            np.stack([s.gaze for s in samples]) if samples else np.zeros((0, 3)),
            np.stack([s.head_H for s in samples]) if samples else np.zeros((0, 3, 3)),
        )

    @classmethod
    def from_records(cls, records: Sequence[FrameRecord], cfg: NormalizationConfig | None = None,
                     images=None) -> "SampleSet":
        """Normalize every record into preallocated arrays.

        ``images`` optionally supplies already-decoded frames aligned with ``records``.
        """
        cfg = cfg or NormalizationConfig()
        n = len(records)
        fw, fh = cfg.face_size
        ew, eh = cfg.eye_size
        faces = np.zeros((n, fh, fw, 3), np.uint8)
        eyes = np.zeros((n, eh, 2 * ew, 3), np.uint8)
        lms = np.zeros((n, LANDMARK_DIM), np.float32)
        labels = np.zeros((n, 2))
        Rs = np.zeros((n, 3, 3))
        gaze = np.zeros((n, 3))
        heads = np.zeros((n, 3, 3))
        for i, rec in enumerate(records):
            img = images[i] if images is not None else load_image(rec)
            s = normalize_record(rec, img, cfg)
            faces[i], eyes[i], lms[i], labels[i], Rs[i] = s.face_patch, s.eyes_patch, s.landmark_feature, s.label, s.R
            gaze[i], heads[i] = s.gaze, s.head_H
        return cls(faces, eyes, lms, labels, Rs, [r.key for r in records], gaze, heads)

    def subset(self, rows) -> "SampleSet":
        rows = np.asarray(rows, dtype=np.int64)
        return SampleSet(self.faces[rows], self.eyes[rows], self.landmarks[rows], self.labels[rows], self.R[rows],
                         [self.keys[i] for i in rows], self.gaze[rows], self.head_H[rows])

    def rows_for_subjects(self, subjects) -> np.ndarray:
        subjects = set(subjects)
        return np.array([i for i, k in enumerate(self.keys) if k[0] in subjects], dtype=np.int64)

    @property
    def subjects(self) -> list[str]:
        return sorted({k[0] for k in self.keys})

    def window_rows(self, s: int, stride: int = 1) -> np.ndarray:
        """(W, s) row indices of all sliding windows, session by session."""
        by_session: dict[tuple, list[int]] = {}
        for i, k in enumerate(self.keys):
            by_session.setdefault(k[:-1], []).append(i)
        out = []
        for sess in sorted(by_session):
            rows = sorted(by_session[sess], key=lambda i: self.keys[i][-1])
            idx = [self.keys[i][-1] for i in rows]
            out.extend([rows[j] for j in pos] for pos in window_positions(idx, s, stride))
        return np.array(out, dtype=np.int64).reshape(-1, s)
