"""Independent reference computations used by unit and acceptance tests."""

import math

import numpy as np
import torch

from gazepipe import geometry as geo
from gazepipe.network import GazeNet, ModelConfig


def gradcheck_model(scale=1 / 16, seed=0, coords_per_tensor=3, eps=1e-6, batch=2):
    """Analytic vs central finite-difference gradients of gaze_loss for every parameter tensor.

    Float64 throughout.  The loss covers both heads: the static regression on
    every frame and the temporal regression on a window of those frames.
    Returns {parameter name: max relative error}.
    """
    torch.manual_seed(seed)
    cfg = ModelConfig(scale=scale, variant="temporal", sequence_length=batch)
    model = GazeNet(cfg).double().eval().to(memory_format=torch.contiguous_format)
    for p in model.parameters():
        # keep the regressors from being negligibly small relative to fd noise
        if p.dim() >= 1 and p.abs().max() < 0.05:
            p.data.normal_(0, 0.1)
    g = torch.Generator().manual_seed(seed + 1)
    face = torch.rand(batch, 3, 224, 224, generator=g, dtype=torch.float64)
    eyes = torch.rand(batch, 3, 48, 120, generator=g, dtype=torch.float64)
    lm = torch.rand(batch, 204, generator=g, dtype=torch.float64)
    gt = torch.from_numpy(geo.angles_to_gaze(np.random.default_rng(seed).uniform(-0.4, 0.4, (batch, 2))))

    def loss():
        fused, angles = model(face, eyes, lm)
        t_angles, _ = model.temporal(fused.unsqueeze(0))
        return geo.gaze_loss(angles, gt) + geo.gaze_loss(t_angles, gt[-1:])

    model.zero_grad()
    loss().backward()
    rng = np.random.default_rng(seed + 2)
    out, kinks = {}, 0
    with torch.no_grad():
        base = loss().item()
        for name, p in model.named_parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            worst, done = 0.0, 0
            for i in rng.permutation(flat.numel()):
                if done == min(coords_per_tensor, flat.numel()):
                    break
                old = flat[i].item()
                flat[i] = old + eps
                lp = loss().item()
                flat[i] = old - eps
                lm_ = loss().item()
                flat[i] = old
                fwd, bwd = (lp - base) / eps, (base - lm_) / eps
                num = (lp - lm_) / (2 * eps)
                # one-sided slopes disagreeing means a ReLU or max-pool switch inside the stencil
                if abs(fwd - bwd) > 1e-3 * max(abs(fwd), abs(bwd), 1e-8):
                    kinks += 1
                    continue
                ana = grad[i].item()
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
                done += 1
            out[name] = worst
    gradcheck_model.kinks_skipped = kinks
    return out


def iris_linear_regression_error(records, k=0.0002):
    """Mean angular error (deg) of a least-squares linear map from the iris
    positions seen in the two normalized eye patches, plus the head direction
    in the normalized frame, to the normalized gaze angles.

    Iris centers follow the renderer's law (shift ``k`` m/deg on the eye plane),
    projected through each eye's virtual camera; the map is fitted on all
    records.  Measures how much of the label the generator exposes linearly.
    """
    from gazepipe import synthgen as sg
    from gazepipe.datamodel import NormalizationConfig, compute_gt_gaze, normalize_record

    cfg = NormalizationConfig()
    feats, targets, gt_n = [], [], []
    for rec in records:
        H, p = rec.head.H, rec.head.p
        g = compute_gt_gaze(rec)
        th, ph = np.degrees(geo.gaze_to_angles(H.T @ g))
        shift = H @ np.r_[sg.iris_offset(th, ph, k), 0.0]
        row = []
        for center in (rec.eye_right, rec.eye_left):
            t = geo.build_normalization(geo.HeadPose(H, center), cfg.eye_distance, rec.camera.intrinsics,
                                        cfg.eye_camera, cfg.eye_size)
            row.extend(t.camera.project(t.M @ (center + shift)) - t.camera.project(t.M @ center))
        face = geo.build_normalization(
            geo.HeadPose(H, p + cfg.face_offset * (H @ cfg.head_forward)), cfg.face_distance,
            rec.camera.intrinsics, cfg.face_camera, cfg.face_size)
        g_n = face.R @ g
        head_n = geo.gaze_to_angles(face.R @ H @ cfg.head_forward)
        feats.append(row + list(head_n) + [1.0])
        targets.append(geo.gaze_to_angles(g_n))
        gt_n.append(g_n)
    X, Y = np.asarray(feats), np.asarray(targets)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return float(geo.angular_error(geo.angles_to_gaze(X @ coef), np.asarray(gt_n)).mean())


class StubSample:
    """Just enough of a normalized sample for make_windows."""

    def __init__(self, i, session=("s", "FT", "static", "0")):
        self.frame_index, self.session_key, self.label = i, session, np.array([i, 0.0])


def brute_windows(indices, s):
    """Every run of s consecutive frame indices, found by checking each start."""
    present = set(indices)
    return [tuple(range(i, i + s)) for i in sorted(present) if all(i + d in present for d in range(s))]


def filter_oracle_reason(rec):
    """Direct restatement of the four frame-filtering rules; returns the reason string or None."""
    f = rec.flags
    for ok, why in ((f.face_detected, "face"), (f.landmarks_detected, "landmarks"),
                    (f.looking_at_target, "not-looking"), (f.geometry_recovered, "geometry")):
        if not ok:
            return why
    g = rec.gaze_target - 0.5 * (rec.eye_left + rec.eye_right)
    gh = rec.head.H.T @ (g / np.linalg.norm(g))
    if gh[2] >= 0:
        return "eyeball-constraint"
    theta = math.degrees(math.atan(gh[0] / gh[2]))
    phi = math.degrees(math.asin(-gh[1]))
    return "eyeball-constraint" if abs(theta) > 40 or abs(phi) > 30 else None


def random_filter_record(rng, i=0):
    from conftest import random_rotation
    from gazepipe.datamodel import Flags
    from helpers import make_record

    flags = Flags(*(rng.random(4) > 0.15))
    H = random_rotation(rng) if rng.random() < 0.3 else geo.rotation_matrix(rng.normal(size=3), rng.uniform(0, 0.5))
    return make_record(H=H, gaze_head=(rng.uniform(-60, 60), rng.uniform(-45, 45)), flags=flags, frame_index=i)
