"""Frame-wise intensity regressor.

Per-frame convolutional encoder, optional bidirectional GRU over the frame
features, and an affine head that emits one unbounded value per frame.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class ModelConfig:
    encoder: str = "desk_scale"  # or "paper_scale"
    feature_dim: int = 64
    recurrent_hidden: int = 128
    recurrent_layers: int = 1
    bidirectional: bool = True
    temporal_mode: str = "recurrent"  # or "framewise"
    in_channels: int = 3
    input_size: int = 64
    pretrained_path: str | None = None

    def __post_init__(self):
        if self.encoder not in ("paper_scale", "desk_scale"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.temporal_mode not in ("recurrent", "framewise"):
            raise ValueError(f"unknown temporal_mode {self.temporal_mode!r}")
        if self.encoder == "paper_scale" and self.feature_dim != 512:
            raise ValueError("paper_scale encoder produces 512-dimensional features")

    @classmethod
    def paper_scale(cls, **kw) -> "ModelConfig":
        kw.setdefault("input_size", 224)
        return cls(encoder="paper_scale", feature_dim=512, **kw)


@dataclass
class FrameSequence:
    frames: torch.Tensor  # (T, C, H, W)
    clip_id: str = ""
    apex_slot: int = 0

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class TrajectoryPrediction:
    values: torch.Tensor  # (T,)
    clip_id: str = ""


class DeskEncoder(nn.Module):
    """Small CNN for CPU-scale runs.

    Features are flattened rather than globally pooled so that where a
    pattern sits in the frame survives into the feature vector.
    """

    def __init__(self, in_channels: int, feature_dim: int, input_size: int):
        super().__init__()
        chans = [in_channels, 16, 32, 32, 32]
        layers = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            layers += [nn.Conv2d(cin, cout, 3, stride=2, padding=1), nn.ReLU(inplace=True)]
        self.conv = nn.Sequential(*layers)
        side = input_size
        for _ in range(len(chans) - 1):
            side = (side + 1) // 2
        self.proj = nn.Linear(chans[-1] * side * side, feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(self.conv(x).flatten(1))


def _resnet18_encoder(pretrained_path: str | None, load_weights: bool = True) -> nn.Module:
    from torchvision.models import resnet18

    net = resnet18(weights=None)
    if load_weights and pretrained_path and Path(pretrained_path).is_file():
        state = torch.load(pretrained_path, map_location="cpu", weights_only=True)
        state = {k: v for k, v in state.items() if not k.startswith("fc.")}
        net.load_state_dict(state, strict=False)
    elif load_weights:
        logger.warning(
            "no pretrained weights found at %r; ResNet-18 encoder is randomly initialized",
            pretrained_path,
        )
    net.fc = nn.Identity()
    return net


class IntensityRegressor(nn.Module):
    def __init__(self, cfg: ModelConfig, load_pretrained: bool = True):
        super().__init__()
        self.cfg = cfg
        if cfg.encoder == "paper_scale":
            self.encoder = _resnet18_encoder(cfg.pretrained_path, load_pretrained)
            self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
            self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        else:
            self.encoder = DeskEncoder(cfg.in_channels, cfg.feature_dim, cfg.input_size)
            self.mean = self.std = None
        if cfg.temporal_mode == "recurrent":
            self.gru = nn.GRU(
                cfg.feature_dim,
                cfg.recurrent_hidden,
                num_layers=cfg.recurrent_layers,
                batch_first=True,
                bidirectional=cfg.bidirectional,
            )
            head_in = cfg.recurrent_hidden * (2 if cfg.bidirectional else 1)
        else:
            self.gru = None
            head_in = cfg.feature_dim
        self.head = nn.Linear(head_in, 1)

    def encode_frames(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, T, C, H, W) frames in [0, 1] -> (B, T, D) features."""
        if frames.dim() != 5:
            raise ValueError(f"expected (B, T, C, H, W) frames, got shape {tuple(frames.shape)}")
        B, T, C, H, W = frames.shape
        cfg = self.cfg
        if C != cfg.in_channels or H != cfg.input_size or W != cfg.input_size:
            raise ValueError(
                f"frames of shape {(C, H, W)} do not match config "
                f"{(cfg.in_channels, cfg.input_size, cfg.input_size)}"
            )
        x = frames.reshape(B * T, C, H, W)
        if self.mean is not None:
            x = (x - self.mean) / self.std
        return self.encoder(x).reshape(B, T, -1)

    def temporal_encode(self, features: torch.Tensor) -> torch.Tensor:
        if self.gru is None:
            raise RuntimeError("temporal_encode called on a framewise model")
        out, _ = self.gru(features)
        return out

    def regress(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.head(hidden).squeeze(-1)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """Frames (B, T, C, H, W) or (T, C, H, W) -> intensities (B, T) or (T,)."""
        single = frames.dim() == 4
        if single:
            frames = frames.unsqueeze(0)
        feats = self.encode_frames(frames)
        hidden = feats if self.gru is None else self.temporal_encode(feats)
        out = self.regress(hidden)
        return out[0] if single else out


def predict(model: IntensityRegressor, seq: FrameSequence) -> TrajectoryPrediction:
    model.eval()
    with torch.no_grad():
        values = model(seq.frames)
    return TrajectoryPrediction(values=values, clip_id=seq.clip_id)


def save_checkpoint(model: IntensityRegressor, path: str | Path, step: int = 0, **extra) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.cfg)
    torch.save({"model_config": cfg, "state_dict": model.state_dict(), "step": step, **extra}, path)


def load_checkpoint(path: str | Path) -> tuple[IntensityRegressor, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    # Weights come from the checkpoint, so skip the pretrained-file lookup.
    model = IntensityRegressor(ModelConfig(**blob["model_config"]), load_pretrained=False)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob
