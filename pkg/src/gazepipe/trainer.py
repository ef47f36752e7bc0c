"""Stage-wise training.

Stage 1 trains the static network end to end on single frames.  Stage 2
freezes the two convolutional streams, caches their per-frame outputs, then
fine-tunes the fusion layers and trains the recurrent module with a fresh
regression layer on sliding windows.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import geometry as geo
from .augment import AugmentConfig, augment_sample
from .datamodel import EYE_INPUT_SIZE, FACE_INPUT_SIZE, SampleSet
from .network import GazeNet, ModelConfig, ModelParameters, build_model, load_parameters, save_parameters

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class StaleCacheError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs_stage1: int = 21
    epochs_stage2: int = 10
    dropout: float = 0.3
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    # when set, overrides the model config's scale for freshly built models
    scale_multiplier: float | None = None
    checkpoint_dir: str | None = None
    learning_rate_stage2: float | None = None
    val_subjects: int = 1
    eval_batch_size: int = 128

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning rate and batch size must be positive")
        if self.epochs_stage1 < 1 or self.epochs_stage2 < 1:
            raise ValueError("epoch counts must be >= 1")

    @property
    def stage2_lr(self) -> float:
        return self.learning_rate_stage2 or self.learning_rate


def split_validation(subjects, n_val: int = 1, seed: int = 0):
    """Carve ``n_val`` whole subjects out of the training subjects."""
    subjects = sorted(subjects)
    if n_val <= 0 or len(subjects) <= n_val:
        return subjects, []
    rng = np.random.default_rng([seed, 104729])
    val = sorted(rng.choice(subjects, size=n_val, replace=False).tolist())
    return [s for s in subjects if s not in val], val


# --------------------------------------------------------------------------
# batches

def _to_tensor(imgs: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) uint8 or float -> (N, 3, H, W) float32 in [0, 1] (channels-last memory)."""
    t = torch.from_numpy(np.ascontiguousarray(imgs))
    t = t.permute(0, 3, 1, 2)
    if t.dtype == torch.uint8:
        t = t.float().div_(255.0)
    return t.float()


def eval_inputs(data: SampleSet, rows):
    """Center-cropped network inputs for ``rows`` (no augmentation)."""
    rows = np.asarray(rows)
    fw, fh = FACE_INPUT_SIZE
    H, W = data.faces.shape[1:3]
    y0, x0 = (H - fh) // 2, (W - fw) // 2
    face = data.faces[rows, y0:y0 + fh, x0:x0 + fw]
    ew, eh = EYE_INPUT_SIZE
    half = data.eyes.shape[2] // 2
    ey0, ex0 = (data.eyes.shape[1] - eh) // 2, (half - ew) // 2
    eyes = np.concatenate([data.eyes[rows, ey0:ey0 + eh, ex0:ex0 + ew],
                           data.eyes[rows, ey0:ey0 + eh, half + ex0:half + ex0 + ew]], axis=2)
    return _to_tensor(face), _to_tensor(eyes), torch.from_numpy(data.landmarks[rows])


def train_inputs(data: SampleSet, rows, aug: AugmentConfig, rng: np.random.Generator):
    faces, eyes, lms, labels = [], [], [], []
    for i in rows:
        s = augment_sample(data[i], aug, rng)
        faces.append(s.face_patch)
        eyes.append(s.eyes_patch)
        lms.append(s.landmark_feature)
        labels.append(s.label)
    return (_to_tensor(np.stack(faces)), _to_tensor(np.stack(eyes)), torch.from_numpy(np.stack(lms)),
            np.stack(labels))


def _targets(labels) -> torch.Tensor:
    return torch.from_numpy(geo.angles_to_gaze(np.asarray(labels))).float()


# --------------------------------------------------------------------------
# checkpoints

def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_angular_error"])
        for h in history:
            w.writerow([h["epoch"], *(repr(float(h[c])) for c in ("train_loss", "val_loss", "val_angular_error"))])


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]), "val_loss": float(r["val_loss"]),
                 "val_angular_error": float(r["val_angular_error"])} for r in csv.DictReader(fh)]


def _save_checkpoint(ckpt_dir, stage, epoch, model, optimizer, rng, history):
    d = Path(ckpt_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_parameters(model, d / f"{stage}_epoch{epoch:03d}.params")
    torch.save(
        {"epoch": epoch, "optimizer": optimizer.state_dict(), "numpy_rng": rng.bit_generator.state,
         "torch_rng": torch.get_rng_state(), "history": history, "config": model.config.to_dict()},
        d / f"{stage}_epoch{epoch:03d}.state.pt",
    )
    save_parameters(model, d / f"{stage}_last.params")
    _write_history(d / f"{stage}_history.csv", history)


def _resume(path, model, optimizer, rng):
    path = Path(path)
    params_path = path.with_name(path.name.replace(".state.pt", ".params"))
    load_parameters(params_path, model.config).apply(model)
    state = torch.load(path, map_location="cpu", weights_only=False)
    optimizer.load_state_dict(state["optimizer"])
    rng.bit_generator.state = state["numpy_rng"]
    torch.set_rng_state(state["torch_rng"])
    return state["epoch"], list(state["history"])


# --------------------------------------------------------------------------
# evaluation helpers

@torch.no_grad()
def predict_static(model: GazeNet, data: SampleSet, rows=None, batch_size: int = 128) -> np.ndarray:
    """Normalized (theta, phi) predictions for ``rows`` (default: all)."""
    model.eval()
    rows = np.arange(len(data)) if rows is None else np.asarray(rows)
    out = []
    for i in range(0, len(rows), batch_size):
        face, eyes, lm = eval_inputs(data, rows[i:i + batch_size])
        out.append(model(face, eyes, lm)[1].double().numpy())
    return np.concatenate(out) if out else np.zeros((0, 2))


def _mean_loss_and_error(pred: np.ndarray, labels: np.ndarray):
    if len(pred) == 0:
        return float("nan"), float("nan")
    p, g = geo.angles_to_gaze(pred), geo.angles_to_gaze(labels)
    return float(np.linalg.norm(p - g, axis=1).mean()), float(geo.angular_error(p, g).mean())


# --------------------------------------------------------------------------
# stage 1

def train_stage1(train: SampleSet, val: SampleSet | None, model_config: ModelConfig, train_config: TrainConfig,
                 model: GazeNet | None = None, resume_from=None, progress=None):
    """Train the static network end to end.  Returns ``(model, history)``."""
    if len(train) == 0:
        raise ValueError("empty training set")
    torch.manual_seed(train_config.seed)
    if model is None:
        if train_config.scale_multiplier is not None:
            model_config = ModelConfig(**{**model_config.to_dict(), "scale": train_config.scale_multiplier})
        model = build_model(model_config)
    model.dropout.p = train_config.dropout
    rng = np.random.default_rng(train_config.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    if model.config.variant == "temporal":
        temporal = {id(p) for p in [*model.recurrent.parameters(), *model.temporal_regressor.parameters()]}
        params = [p for p in params if id(p) not in temporal]
    opt = torch.optim.Adam(params, lr=train_config.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    start, history = 0, []
    if resume_from is not None:
        start, history = _resume(resume_from, model, opt, rng)
    n, bs = len(train), train_config.batch_size
    for epoch in range(start + 1, train_config.epochs_stage1 + 1):
        order = rng.permutation(n)
        total = 0.0
        for b in range(0, n, bs):
            rows = order[b:b + bs]
            face, eyes, lm, labels = train_inputs(train, rows, train_config.augment, rng)
            model.train()
            _, pred = model(face, eyes, lm)
            loss = geo.gaze_loss(pred, _targets(labels))
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at stage 1 epoch {epoch}, batch keys {[train.keys[i] for i in rows[:8]]}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item() * len(rows)
        rec = {"epoch": epoch, "train_loss": total / n, "val_loss": float("nan"), "val_angular_error": float("nan")}
        if val is not None and len(val):
            rec["val_loss"], rec["val_angular_error"] = _mean_loss_and_error(
                predict_static(model, val, batch_size=train_config.eval_batch_size), val.labels)
        history.append(rec)
        logger.info("stage1 epoch %d: train %.4f val %.4f (%.2f deg)", epoch, rec["train_loss"], rec["val_loss"],
                    rec["val_angular_error"])
        if progress:
            progress(rec)
        if train_config.checkpoint_dir:
            _save_checkpoint(train_config.checkpoint_dir, "stage1", epoch, model, opt, rng, history)
    return model, history


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


# --------------------------------------------------------------------------
# feature cache and stage 2

def individual_hash(model: GazeNet) -> str:
    h = hashlib.sha256()
    for m in model.individual_modules():
        for name, t in m.state_dict().items():
            h.update(name.encode())
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@dataclass
class FeatureCache:
    """Frozen stream outputs per frame key, tagged with the producing parameters."""

    keys: list
    features: np.ndarray
    landmarks: np.ndarray
    params_hash: str

    def __post_init__(self):
        self.index = {tuple(k): i for i, k in enumerate(self.keys)}

    def __len__(self):
        return len(self.keys)

    def content_hash(self) -> str:
        h = hashlib.sha256(self.params_hash.encode())
        h.update(np.ascontiguousarray(self.features).tobytes())
        return h.hexdigest()

    def check(self, model: GazeNet) -> None:
        current = individual_hash(model)
        if current != self.params_hash:
            raise StaleCacheError(f"feature cache was built by parameters {self.params_hash[:12]}, "
                                  f"model has {current[:12]}")

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".partial.npz")
        try:
            np.savez(tmp, features=self.features, landmarks=self.landmarks,
                     keys=np.array([list(map(str, k)) for k in self.keys]), params_hash=self.params_hash)
            os.replace(tmp, path)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise

    @classmethod
    def load(cls, path) -> "FeatureCache":
        z = np.load(path, allow_pickle=False)
        keys = [tuple(k[:-1]) + (int(k[-1]),) for k in z["keys"].tolist()]
        return cls(keys, z["features"], z["landmarks"], str(z["params_hash"]))


@torch.no_grad()
def build_feature_cache(model: GazeNet, data: SampleSet, batch_size: int = 128) -> FeatureCache:
    """Run the frozen convolutional streams once over every frame (center crops)."""
    if not all(torch.isfinite(p).all() for p in model.parameters()):
        raise ValueError("model parameters are not finite")
    model.eval()
    feats = []
    for i in range(0, len(data), batch_size):
        face, eyes, _ = eval_inputs(data, np.arange(i, min(i + batch_size, len(data))))
        feats.append(model.individual(face, eyes).numpy())
    features = np.concatenate(feats) if feats else np.zeros((0, model.config.individual_width), np.float32)
    return FeatureCache(list(data.keys), features, data.landmarks.copy(), individual_hash(model))


def _freeze_individual(model: GazeNet):
    for m in model.individual_modules():
        for p in m.parameters():
            p.requires_grad_(False)


def _window_batch(model, cache: FeatureCache, windows: np.ndarray):
    B, s = windows.shape
    feats = torch.from_numpy(cache.features[windows.reshape(-1)])
    lms = torch.from_numpy(cache.landmarks[windows.reshape(-1)])
    fused = model.fuse(feats, lms).view(B, s, -1)
    return model.temporal(fused)[0]


@torch.no_grad()
def predict_temporal(model: GazeNet, cache: FeatureCache, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
    model.eval()
    out = [_window_batch(model, cache, windows[i:i + batch_size]).double().numpy()
           for i in range(0, len(windows), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 2))


def train_stage2(model: GazeNet, train_cache: FeatureCache, train_windows: np.ndarray, train_labels: np.ndarray,
                 train_config: TrainConfig, val_cache: FeatureCache | None = None, val_windows=None,
                 val_labels=None, resume_from=None, progress=None):
    """Fine-tune fusion and train the recurrent head on cached stream outputs.

    ``*_windows`` are (W, s) row indices into the matching cache;
    ``*_labels`` are the (n_frames, 2) normalized labels of the cache rows.
    Returns ``(model, history)``.
    """
    cfg = model.config
    if cfg.variant != "temporal":
        raise ValueError("stage 2 needs a temporal-variant model")
    train_windows = np.asarray(train_windows)
    if train_windows.ndim != 2 or train_windows.shape[1] != cfg.sequence_length:
        raise ValueError(f"windows must be (W, {cfg.sequence_length}), got {train_windows.shape}")
    if len(train_windows) == 0:
        raise ValueError("no training windows")
    train_cache.check(model)
    if val_cache is not None:
        val_cache.check(model)
    _freeze_individual(model)
    torch.manual_seed(train_config.seed + 1)
    model.reset_temporal_head()
    rng = np.random.default_rng([train_config.seed, 2])
    params = [*model.fusion1.parameters(), *model.fusion2.parameters(), *model.recurrent.parameters(),
              *model.temporal_regressor.parameters()]
    opt = torch.optim.Adam(params, lr=train_config.stage2_lr, betas=(0.9, 0.999), eps=1e-8)
    start, history = 0, []
    if resume_from is not None:
        start, history = _resume(resume_from, model, opt, rng)
    targets = _targets(train_labels)
    n, bs = len(train_windows), train_config.batch_size
    for epoch in range(start + 1, train_config.epochs_stage2 + 1):
        order = rng.permutation(n)
        total = 0.0
        model.train()
        for b in range(0, n, bs):
            w = train_windows[order[b:b + bs]]
            pred = _window_batch(model, train_cache, w)
            loss = geo.gaze_loss(pred, targets[w[:, -1]])
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at stage 2 epoch {epoch}, windows ending at "
                                       f"{[train_cache.keys[i] for i in w[:8, -1]]}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item() * len(w)
        rec = {"epoch": epoch, "train_loss": total / n, "val_loss": float("nan"), "val_angular_error": float("nan")}
        if val_cache is not None and val_windows is not None and len(val_windows):
            vw = np.asarray(val_windows)
            rec["val_loss"], rec["val_angular_error"] = _mean_loss_and_error(
                predict_temporal(model, val_cache, vw), np.asarray(val_labels)[vw[:, -1]])
        history.append(rec)
        logger.info("stage2 epoch %d: train %.4f val %.4f (%.2f deg)", epoch, rec["train_loss"], rec["val_loss"],
                    rec["val_angular_error"])
        if progress:
            progress(rec)
        if train_config.checkpoint_dir:
            _save_checkpoint(train_config.checkpoint_dir, "stage2", epoch, model, opt, rng, history)
    return model, history


def temporal_model_from_static(static: GazeNet | ModelParameters, config: ModelConfig) -> GazeNet:
    """Temporal-variant model initialised from stage-1 weights where shapes agree."""
    if config.variant != "temporal":
        raise ValueError("target config must be the temporal variant")
    model = GazeNet(config)
    src = static.state_dict() if isinstance(static, GazeNet) else {
        k: torch.from_numpy(v.copy()) for k, v in static.tensors.items()}
    own = model.state_dict()
    for k, v in src.items():
        if k in own and own[k].shape == v.shape and not k.startswith(("recurrent.", "temporal_regressor.")):
            own[k].copy_(v)
    return model
