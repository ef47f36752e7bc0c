"""Static (two-stream CNN + landmarks + fusion) and temporal (recurrent) gaze networks."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)

VGG16_BLOCKS = (2, 2, 3, 3, 3)
VGG16_CHANNELS = (64, 128, 256, 512, 512)
FACE_FC = 4096
EYES_FC = 1536
FUSION_WIDTH = 5836
TEMPORAL_FUSION_WIDTH = 2918


@dataclass
class ModelConfig:
    scale: float = 1.0
    variant: str = "static"  # "static" or "temporal"
    face_input: tuple[int, int] = (224, 224)  # (width, height)
    eyes_input: tuple[int, int] = (120, 48)
    landmark_dim: int = 204
    dropout: float = 0.3
    recurrent_cell: str = "gru"
    recurrent_units: tuple[int, ...] = (128,)
    sequence_length: int = 4
    output_dim: int = 2

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")
        if self.variant not in ("static", "temporal"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.recurrent_cell not in ("gru", "lstm"):
            raise ValueError(f"unknown recurrent cell {self.recurrent_cell!r}")
        self.face_input = tuple(self.face_input)
        self.eyes_input = tuple(self.eyes_input)
        self.recurrent_units = tuple(int(u) for u in self.recurrent_units)

    @property
    def face_channels(self) -> list[int]:
        return [max(1, round(c * self.scale)) for c in VGG16_CHANNELS]

    @property
    def eyes_channels(self) -> list[int]:
        ratio = EYES_FC / FACE_FC
        return [max(8, 8 * round(c * self.scale * ratio / 8)) for c in VGG16_CHANNELS]

    @property
    def face_fc(self) -> int:
        return round(FACE_FC * self.scale)

    @property
    def eyes_fc(self) -> int:
        return round(EYES_FC * self.scale)

    @property
    def individual_width(self) -> int:
        return self.face_fc + self.eyes_fc

    @property
    def fused_width(self) -> int:
        return self.face_fc + self.eyes_fc + self.landmark_dim

    @property
    def fusion_dims(self) -> tuple[int, int]:
        second = TEMPORAL_FUSION_WIDTH if self.variant == "temporal" else FUSION_WIDTH
        return round(FUSION_WIDTH * self.scale), round(second * self.scale)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["face_input"] = list(self.face_input)
        d["eyes_input"] = list(self.eyes_input)
        d["recurrent_units"] = list(self.recurrent_units)
        return d

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class ConvStream(nn.Module):
    """VGG-16 style stack: 13 conv layers in 5 blocks, 5 max-pools, one ReLU FC."""

    def __init__(self, channels, in_size: tuple[int, int], fc_dim: int):
        super().__init__()
        layers = []
        cin = 3
        w, h = in_size
        for n, cout in zip(VGG16_BLOCKS, channels):
            for _ in range(n):
                layers += [nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True)]
                cin = cout
            layers.append(nn.MaxPool2d(2))
            w, h = w // 2, h // 2
        if w < 1 or h < 1:
            raise ValueError(f"input {in_size} too small for five pooling stages")
        self.features = nn.Sequential(*layers)
        self.fc = nn.Linear(cin * w * h, fc_dim)

    def forward(self, x):
        x = self.features((x - 0.5).contiguous(memory_format=torch.channels_last))
        return F.relu(self.fc(torch.flatten(x, 1)))


class RecurrentStack(nn.Module):
    def __init__(self, cell: str, input_dim: int, units):
        super().__init__()
        cls = nn.GRU if cell == "gru" else nn.LSTM
        layers = []
        d = input_dim
        for u in units:
            layers.append(cls(d, u, batch_first=True))
            d = u
        self.layers = nn.ModuleList(layers)

    def forward(self, seq):
        x = seq
        for layer in self.layers:
            x, _ = layer(x)
        return x[:, -1]


class GazeNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        fw, fh = config.face_input
        self.face = ConvStream(config.face_channels, (fw, fh), config.face_fc)
        self.eyes = ConvStream(config.eyes_channels, config.eyes_input, config.eyes_fc)
        d1, d2 = config.fusion_dims
        self.fusion1 = nn.Linear(config.fused_width, d1)
        self.fusion2 = nn.Linear(d1, d2)
        self.dropout = nn.Dropout(config.dropout)
        self.regressor = nn.Linear(d2, config.output_dim)
        if config.variant == "temporal":
            self.recurrent = RecurrentStack(config.recurrent_cell, d2, config.recurrent_units)
            self.temporal_regressor = nn.Linear(config.recurrent_units[-1], config.output_dim)
        self.reset_parameters()
        self.to(memory_format=torch.channels_last)

    def reset_parameters(self, modules=None):
        for m in (modules or self.modules()):
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
            elif isinstance(m, (nn.GRU, nn.LSTM)):
                m.reset_parameters()
        for head in (getattr(self, "regressor", None), getattr(self, "temporal_regressor", None)):
            if head is not None and (modules is None or head in modules):
                nn.init.normal_(head.weight, std=0.01)
                nn.init.zeros_(head.bias)

    def reset_temporal_head(self):
        self.reset_parameters([*self.recurrent.modules(), self.temporal_regressor])

    def individual_modules(self):
        return [self.face, self.eyes]

    def fusion_modules(self):
        return [self.fusion1, self.fusion2]

    def individual(self, face, eyes):
        """Concatenated face and eyes stream outputs."""
        return torch.cat([self.face(face), self.eyes(eyes)], dim=1)

    def fuse(self, individual, landmarks):
        x = torch.cat([individual, landmarks.to(individual.dtype)], dim=-1)
        x = self.dropout(F.relu(self.fusion1(x)))
        return F.relu(self.fusion2(x))

    def forward(self, face, eyes, landmarks):
        fused = self.fuse(self.individual(face, eyes), landmarks)
        return fused, self.regressor(self.dropout(fused))

    def temporal(self, fused_seq):
        """(B, s, d) fused features, oldest first -> (angles, final hidden state)."""
        h = self.recurrent(fused_seq)
        return self.temporal_regressor(h), h


def build_model(config: ModelConfig, seed: int | None = None) -> GazeNet:
    if seed is not None:
        torch.manual_seed(seed)
    return GazeNet(config)


def _check_input(x: torch.Tensor, shape, name):
    if tuple(x.shape[1:]) != tuple(shape):
        raise ValueError(f"{name} must have shape (N, {', '.join(map(str, shape))}), got {tuple(x.shape)}")
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


def static_forward(face, eyes, landmarks, model: GazeNet, train_mode: bool = False):
    """Validated per-frame forward pass: ``(fused_feature, angles)``.

    ``face`` is (N, 3, 224, 224) and ``eyes`` (N, 3, 48, 120), both in [0, 1].
    """
    cfg = model.config
    _check_input(face, (3, cfg.face_input[1], cfg.face_input[0]), "face")
    _check_input(eyes, (3, cfg.eyes_input[1], cfg.eyes_input[0]), "eyes")
    _check_input(landmarks, (cfg.landmark_dim,), "landmarks")
    model.train(train_mode)
    return model(face, eyes, landmarks)


def temporal_forward(fused_seq, model: GazeNet, train_mode: bool = False):
    cfg = model.config
    if cfg.variant != "temporal":
        raise ValueError("model has no temporal module")
    if fused_seq.ndim != 3 or fused_seq.shape[1] != cfg.sequence_length:
        raise ValueError(f"expected (B, {cfg.sequence_length}, d) features, got {tuple(fused_seq.shape)}")
    model.train(train_mode)
    angles, _ = model.temporal(fused_seq)
    return angles


def load_backbone_weights(model: GazeNet, path) -> int:
    """Copy matching convolutional weights (``face.features.*``/``eyes.features.*``)
    from a torch state-dict file; returns the number of tensors loaded."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    own = model.state_dict()
    n = 0
    for k, v in state.items():
        if ".features." in k and k in own and own[k].shape == v.shape:
            own[k].copy_(v)
            n += 1
    logger.info("loaded %d backbone tensors from %s", n, path)
    return n


# --------------------------------------------------------------------------
# parameter files

MAGIC = b"GZPARAM1"


class ParameterFileError(ValueError):
    pass


class FingerprintMismatch(ValueError):
    pass


@dataclass
class ModelParameters:
    fingerprint: str
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    config: dict | None = None

    @classmethod
    def from_model(cls, model: GazeNet) -> "ModelParameters":
        tensors = OrderedDict(
            (k, v.detach().cpu().to(torch.float32).contiguous().numpy().copy())
            for k, v in model.state_dict().items()
        )
        return cls(model.config.fingerprint, tensors, model.config.to_dict())

    def apply(self, model: GazeNet) -> GazeNet:
        if model.config.fingerprint != self.fingerprint:
            raise FingerprintMismatch(
                f"parameter fingerprint {self.fingerprint} != model fingerprint {model.config.fingerprint}"
            )
        state = OrderedDict((k, torch.from_numpy(v.copy())) for k, v in self.tensors.items())
        model.load_state_dict(state)
        return model


def save_parameters(params: ModelParameters | GazeNet, path) -> None:
    """Write a self-describing container: magic, JSON header, raw little-endian float32."""
    if isinstance(params, GazeNet):
        params = ModelParameters.from_model(params)
    entries, offset = [], 0
    for name, arr in params.tensors.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size * 4
    header = json.dumps({"fingerprint": params.fingerprint, "config": params.config, "tensors": entries}).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in params.tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp.replace(path)


def load_parameters(path, config: ModelConfig | None = None) -> ModelParameters:
    """Read a parameter file; with ``config`` the stored fingerprint must match."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise ParameterFileError(f"cannot read {path}: {e}") from None
    if blob[:8] != MAGIC:
        raise ParameterFileError(f"{path}: not a parameter file (bad magic)")
    try:
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + hlen].decode())
        data = memoryview(blob)[12 + hlen:]
        tensors = OrderedDict()
        for e in header["tensors"]:
            start, count = int(e["offset"]), int(e["count"])
            if start + 4 * count > len(data) or int(np.prod(e["shape"], dtype=np.int64)) != count:
                raise ParameterFileError(f"{path}: tensor {e['name']} truncated or malformed")
            arr = np.frombuffer(data[start:start + 4 * count], dtype="<f4").reshape(e["shape"])
            tensors[e["name"]] = arr.astype(np.float32)
        params = ModelParameters(str(header["fingerprint"]), tensors, header.get("config"))
    except ParameterFileError:
        raise
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParameterFileError(f"{path}: corrupted parameter file ({e})") from None
    if not all(np.isfinite(v).all() for v in tensors.values()):
        raise ParameterFileError(f"{path}: non-finite parameter values")
    if config is not None and config.fingerprint != params.fingerprint:
        raise FingerprintMismatch(
            f"{path}: stored fingerprint {params.fingerprint} does not match requested config {config.fingerprint}"
        )
    return params


def load_model(path, config: ModelConfig | None = None) -> GazeNet:
    params = load_parameters(path, config)
    if config is None:
        if params.config is None:
            raise ParameterFileError(f"{path}: no embedded config; pass one explicitly")
        config = ModelConfig(**params.config)
    return params.apply(GazeNet(config))
