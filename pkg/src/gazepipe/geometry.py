"""Coordinate conventions and the data-normalization math.

Camera coordinate system (CCS): x right, y down, z forward (into the scene).
Head frame: x along the head's horizontal axis (image-right for a frontal
face), y down, z pointing backwards through the head, so the face looks along
head -z.  ``HeadPose.H`` maps head-frame vectors into the CCS.

Gaze vectors point from the midpoint between the eyeball centers towards the
target.  Gaze angles ``(theta, phi)`` are horizontal/vertical direction
angles; ``(0, 0)`` is the vector ``(0, 0, -1)``, i.e. looking straight at the
camera.  All angles are radians unless a name says ``_deg``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
import torch

DEFAULT_FACE_DISTANCE = 0.6

_UNIT_TOL = 1e-6


class DegeneratePoseError(ValueError):
    """The viewing ray is parallel to the head x-axis; roll is undefined."""


class HemisphereError(ValueError):
    """Gaze vector points away from the camera (g_z >= 0)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not all(np.isfinite([self.fx, self.fy, self.cx, self.cy])):
            raise ValueError("intrinsics must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, C) -> "CameraIntrinsics":
        C = np.asarray(C, dtype=float)
        if C.shape != (3, 3):
            raise ValueError(f"camera matrix must be 3x3, got {C.shape}")
        return cls(float(C[0, 0]), float(C[1, 1]), float(C[0, 2]), float(C[1, 2]))

    @classmethod
    def centered(cls, focal: float, size: tuple[int, int]) -> "CameraIntrinsics":
        """Virtual camera whose principal point is the center of a ``(width, height)`` image."""
        w, h = size
        return cls(focal, focal, (w - 1) / 2.0, (h - 1) / 2.0)

    def project(self, X) -> np.ndarray:
        """Pinhole projection of (..., 3) camera-frame points to (..., 2) pixels."""
        X = np.asarray(X, dtype=float)
        return np.stack(
            [self.fx * X[..., 0] / X[..., 2] + self.cx, self.fy * X[..., 1] / X[..., 2] + self.cy],
            axis=-1,
        )


@dataclass(frozen=True)
class HeadPose:
    H: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        p = np.asarray(self.p, dtype=float).reshape(3)
        if H.shape != (3, 3):
            raise ValueError(f"head rotation must be 3x3, got {H.shape}")
        if not np.allclose(H.T @ H, np.eye(3), atol=1e-6, rtol=0):
            raise ValueError("head rotation is not orthonormal")
        if abs(np.linalg.det(H) - 1.0) > 1e-6:
            raise ValueError("head rotation must have det +1")
        if not np.linalg.norm(p) > 0:
            raise ValueError("reference location must be away from the camera center")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "p", p)

    @property
    def x_axis(self) -> np.ndarray:
        """Head x-axis in camera coordinates (first column of H)."""
        return self.H[:, 0]


@dataclass(frozen=True)
class NormalizationTransform:
    """Everything needed to move between the original and the virtual camera.

    ``W`` maps original pixels to normalized pixels (homogeneous); resampling
    uses its inverse.
    """

    R: np.ndarray
    S: np.ndarray
    W: np.ndarray
    d_n: float
    out_size: tuple[int, int]
    camera: CameraIntrinsics = field(repr=False, default=None)

    @property
    def M(self) -> np.ndarray:
        return self.S @ self.R


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def compute_normalizing_rotation(pose: HeadPose) -> np.ndarray:
    """Rotation taking the CCS to the virtual camera that looks at ``pose.p``
    with the head roll removed.

    Rows are the virtual x (right), y (down) and z (forward) axes.  The z-row
    is the unit viewing direction; y is perpendicular to both the viewing ray
    and the head x-axis, so the head x-axis ends up in the virtual x-z plane.
    """
    z = pose.p / np.linalg.norm(pose.p)
    y = np.cross(z, pose.x_axis)
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        raise DegeneratePoseError("viewing ray is parallel to the head x-axis")
    y = y / ny
    x = np.cross(y, z)
    x = x / np.linalg.norm(x)
    return np.stack([x, y, z])


def build_normalization(
    pose: HeadPose,
    d_n: float,
    C_o: CameraIntrinsics,
    C_n: CameraIntrinsics,
    out_size: tuple[int, int],
) -> NormalizationTransform:
    """Virtual camera that views ``pose.p`` from distance ``d_n`` (meters).

    ``out_size`` is ``(width, height)`` of the normalized image.
    """
    if not d_n > 0:
        raise ValueError(f"normalized distance must be positive, got {d_n}")
    R = compute_normalizing_rotation(pose)
    S = np.diag([1.0, 1.0, d_n / np.linalg.norm(pose.p)])
    W = C_n.matrix @ S @ R @ np.linalg.inv(C_o.matrix)
    return NormalizationTransform(
        R=R, S=S, W=W, d_n=float(d_n), out_size=(int(out_size[0]), int(out_size[1])), camera=C_n
    )


def apply_homography(W, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    h = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1) @ np.asarray(W).T
    return h[..., :2] / h[..., 2:3]


def warp_image(image: np.ndarray, transform: NormalizationTransform | np.ndarray, out_size=None) -> np.ndarray:
    """Resample ``image`` into the normalized view.

    Each output pixel is inverse-mapped through ``W`` and sampled bilinearly;
    samples falling outside the source are black.
    """
    if isinstance(transform, NormalizationTransform):
        W, out_size = transform.W, transform.out_size
    else:
        W = np.asarray(transform, dtype=float)
        if out_size is None:
            raise ValueError("out_size is required with a bare homography")
    if image is None or image.size == 0:
        raise ValueError("cannot warp an empty image")
    if not np.all(np.isfinite(W)) or np.linalg.cond(W) > 1e12:
        raise ValueError("homography is not invertible")
    Winv = np.linalg.inv(W)
    return cv2.warpPerspective(
        image,
        Winv,
        (int(out_size[0]), int(out_size[1])),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def _check_unit(g: np.ndarray, what: str = "gaze") -> None:
    n = np.linalg.norm(g, axis=-1)
    if np.any(np.abs(n - 1.0) > _UNIT_TOL):
        raise ValueError(f"{what} vector must be unit length (norms {np.atleast_1d(n)[:4]})")


def normalize_gaze(g, R) -> np.ndarray:
    """Rotate a CCS gaze vector (or a (..., 3) batch) into the virtual camera."""
    g = np.asarray(g, dtype=float)
    _check_unit(g)
    return np.einsum("...ij,...j->...i", np.asarray(R, dtype=float), g)


def denormalize_gaze(g_n, R) -> np.ndarray:
    g_n = np.asarray(g_n, dtype=float)
    _check_unit(g_n)
    return np.einsum("...ji,...j->...i", np.asarray(R, dtype=float), g_n)


def gaze_to_angles(g) -> np.ndarray:
    """(..., 3) unit gaze vectors with g_z < 0 -> (..., 2) array of (theta, phi)."""
    g = np.asarray(g, dtype=float)
    _check_unit(g)
    if np.any(g[..., 2] >= 0):
        raise HemisphereError("gaze must point towards the camera (g_z < 0)")
    theta = np.arctan(g[..., 0] / g[..., 2])
    phi = np.arcsin(np.clip(-g[..., 1], -1.0, 1.0))
    return np.stack([theta, phi], axis=-1)


def angles_to_gaze(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    theta, phi = a[..., 0], a[..., 1]
    return np.stack(
        [-np.cos(phi) * np.sin(theta), -np.sin(phi), -np.cos(phi) * np.cos(theta)], axis=-1
    )


def angular_error(g1, g2) -> np.ndarray:
    """Angle in degrees between unit vectors; broadcasts over leading axes.

    Evaluated as atan2(|g1 x g2|, g1 . g2), which equals the arccos of the
    clamped dot product but keeps full precision for nearly parallel vectors.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    _check_unit(g1)
    _check_unit(g2)
    dot = np.clip(np.sum(g1 * g2, axis=-1), -1.0, 1.0)
    cross = np.linalg.norm(np.cross(g1, g2), axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def angles_to_gaze_torch(a: torch.Tensor) -> torch.Tensor:
    theta, phi = a[..., 0], a[..., 1]
    cphi = torch.cos(phi)
    return torch.stack([-cphi * torch.sin(theta), -torch.sin(phi), -cphi * torch.cos(theta)], dim=-1)


def gaze_loss(pred: torch.Tensor, gt: torch.Tensor, R: torch.Tensor | None = None) -> torch.Tensor:
    """Mean Euclidean distance between predicted and ground-truth gaze vectors.

    ``pred`` holds (N, 2) normalized angles, ``gt`` (N, 3) unit vectors in the
    virtual camera frame.  If ``R`` (N, 3, 3) is given, ``gt`` is taken to be in
    the original CCS and is rotated first.
    """
    if pred.shape[0] == 0:
        raise ValueError("gaze_loss on an empty batch")
    if R is not None:
        gt = torch.einsum("nij,nj->ni", R.to(gt.dtype), gt)
    diff = angles_to_gaze_torch(pred) - gt.to(pred.dtype)
    return torch.linalg.vector_norm(diff, dim=-1).mean()
