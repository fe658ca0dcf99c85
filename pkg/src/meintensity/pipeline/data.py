"""Turning manifests into model-ready samples, and train/val splitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..annotation import ClipAnnotation, Manifest
from ..model import FrameSequence
from ..trajectory import DEFAULT_EPSILON, DEFAULT_SIGMA, PseudoTrajectory, ResamplePlan, clip_target

logger = logging.getLogger(__name__)


@dataclass
class ClipSample:
    sequence: FrameSequence
    target: PseudoTrajectory
    plan: ResamplePlan
    subject_id: str = ""

    @property
    def clip_id(self) -> str:
        return self.sequence.clip_id

    def __iter__(self):
        # Unpacks as (frames, target).
        return iter((self.sequence, self.target))


def load_frame(path: Path, size: int, channels: int = 3) -> np.ndarray:
    """Decode one image into a (C, size, size) float32 array in [0, 1]."""
    with Image.open(path) as img:
        img = img.convert("RGB" if channels == 3 else "L")
        if img.size != (size, size):
            img = img.resize((size, size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def load_clip(
    clip: ClipAnnotation,
    T: int,
    input_size: int,
    root: Path | None = None,
    shape: str = "triangular",
    epsilon: float = DEFAULT_EPSILON,
    sigma: float = DEFAULT_SIGMA,
    channels: int = 3,
) -> ClipSample:
    plan, target = clip_target(clip.onset, clip.apex, clip.offset, T, shape, epsilon, sigma)
    cache: dict[int, np.ndarray] = {}
    frames = []
    for idx in plan.source_indices:
        if idx not in cache:
            p = Path(clip.frame_paths[idx])
            if root is not None and not p.is_absolute():
                p = root / p
            cache[idx] = load_frame(p, input_size, channels)
        frames.append(cache[idx])
    tensor = torch.from_numpy(np.stack(frames))
    seq = FrameSequence(frames=tensor, clip_id=clip.clip_id, apex_slot=plan.apex_slot)
    return ClipSample(sequence=seq, target=target, plan=plan, subject_id=clip.subject_id)


def make_dataset(
    manifest: Manifest,
    T: int = 16,
    shape: str = "triangular",
    input_size: int = 64,
    root: str | Path | None = None,
    epsilon: float = DEFAULT_EPSILON,
    sigma: float = DEFAULT_SIGMA,
    channels: int = 3,
) -> list[ClipSample]:
    """Decode and resample every clip in manifest order.

    Relative frame paths are resolved against ``root``. Clips whose frames
    cannot be read are skipped with a logged warning.
    """
    root = Path(root) if root is not None else None
    samples = []
    for clip in manifest.clips:
        try:
            samples.append(load_clip(clip, T, input_size, root, shape, epsilon, sigma, channels))
        except (OSError, ValueError) as exc:
            logger.warning("skipping clip %s: %s", clip.clip_id, exc)
    return samples


def split(
    manifest: Manifest, policy: str = "by_clip", ratio: float = 0.8, seed: int = 0
) -> tuple[Manifest, Manifest]:
    """Disjoint (train, val) manifests; ``by_subject`` keeps subjects apart."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    if policy == "by_subject":
        units = manifest.subjects()
        if len(units) < 2:
            raise ValueError(f"by_subject split needs at least 2 subjects, found {len(units)}")
        key = lambda c: c.subject_id  # noqa: E731
    elif policy == "by_clip":
        units = [c.clip_id for c in manifest.clips]
        if len(units) < 2:
            raise ValueError(f"by_clip split needs at least 2 clips, found {len(units)}")
        key = lambda c: c.clip_id  # noqa: E731
    else:
        raise ValueError(f"unknown split policy {policy!r}")
    order = [units[i] for i in rng.permutation(len(units))]
    n_train = min(max(int(round(ratio * len(units))), 1), len(units) - 1)
    train_units = set(order[:n_train])
    train = [c for c in manifest.clips if key(c) in train_units]
    val = [c for c in manifest.clips if key(c) not in train_units]
    name = manifest.source_name
    return Manifest(train, source_name=name), Manifest(val, source_name=name)
