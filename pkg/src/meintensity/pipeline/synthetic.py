"""Synthetic clips with known intensity, used to check the pipeline at desk scale.

Each clip shows a static per-clip background and a bright blob whose
displacement from its resting position is proportional to a triangular
ground-truth intensity ``g``. The resting position is jittered per clip, so a
single frame does not reveal how far the blob has moved; the neutral pose is
only observable from the onset/offset frames.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..annotation import ClipAnnotation, Manifest, save_manifest
from ..trajectory import triangular


@dataclass
class SyntheticSpec:
    n_clips: int = 200
    image_size: int = 64
    noise_std: float = 0.03
    n_subjects: int = 20
    min_frames: int = 20
    max_frames: int = 48
    amplitude: float = 0.25  # peak displacement, fraction of image size
    jitter: float = 0.12  # resting-position jitter, fraction of image size
    blob_sigma: float = 0.07  # fraction of image size
    shake: float = 0.05  # per-frame whole-image shift std, fraction of image size
    alpha_range: tuple[float, float] = (0.2, 0.8)

    def __post_init__(self):
        if self.n_clips < 0 or self.n_subjects < 1:
            raise ValueError("n_clips must be >= 0 and n_subjects >= 1")
        if not 3 <= self.min_frames <= self.max_frames:
            raise ValueError("need 3 <= min_frames <= max_frames")
        lo, hi = self.alpha_range
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"alpha_range must lie inside (0, 1), got {self.alpha_range}")


@dataclass
class SyntheticResult:
    manifest: Manifest
    manifest_path: Path
    ground_truth: dict[str, np.ndarray]
    ground_truth_path: Path
    seconds: float


def _bump(yy, xx, cy, cx, sigma):
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma * sigma))


def render_clip(spec: SyntheticSpec, g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Render frames (N, H, W) as uint8 for intensity curve ``g``."""
    size = spec.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    # Static background: a few broad bumps.
    bumps = [
        (rng.uniform(0, size), rng.uniform(0, size), rng.uniform(0.15, 0.35) * size, rng.uniform(0.05, 0.15))
        for _ in range(4)
    ]
    rest = size * (0.35 + rng.uniform(-spec.jitter, spec.jitter, 2))
    angle = rng.uniform(0.15, 0.35) * np.pi
    direction = np.array([np.sin(angle), np.cos(angle)])
    sigma = spec.blob_sigma * size
    brightness = rng.uniform(0.5, 0.7)
    frames = np.empty((g.size, size, size), dtype=np.uint8)
    shakes = rng.normal(0.0, spec.shake * size, (g.size, 2))
    for n, gn in enumerate(g):
        dy, dx = shakes[n]
        sy, sx = yy - dy, xx - dx
        img = np.full((size, size), 0.15)
        for by, bx, bs, bw in bumps:
            img += bw * _bump(sy, sx, by, bx, bs)
        cy, cx = rest + spec.amplitude * size * gn * direction
        img += brightness * _bump(sy, sx, cy, cx, sigma)
        if spec.noise_std > 0:
            img = img + rng.normal(0.0, spec.noise_std, img.shape)
        frames[n] = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return frames


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path, seed: int = 0) -> SyntheticResult:
    """Write frames, ``manifest.json`` and ``ground_truth.csv`` under ``out_dir``.

    Landmarks are (0, argmax g, N - 1). Frame paths in the manifest are
    relative to ``out_dir``.
    """
    start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    clips, truth = [], {}
    width = max(3, len(str(max(spec.n_clips - 1, 0))))
    for i in range(spec.n_clips):
        n_frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
        alpha = rng.uniform(*spec.alpha_range)
        apex = min(max(int(round(alpha * (n_frames - 1))), 1), n_frames - 2)
        g = triangular(n_frames, apex / (n_frames - 1)).values
        frames = render_clip(spec, g, rng)
        clip_id = f"clip_{i:0{width}d}"
        subject = f"s{i % spec.n_subjects:02d}"
        rel_dir = Path("frames") / clip_id
        (out_dir / rel_dir).mkdir(parents=True, exist_ok=True)
        paths = []
        for n, frame in enumerate(frames):
            rel = rel_dir / f"{n:04d}.png"
            Image.fromarray(frame, mode="L").save(out_dir / rel, optimize=False)
            paths.append(rel.as_posix())
        clips.append(
            ClipAnnotation(
                subject_id=subject,
                clip_id=clip_id,
                frame_paths=tuple(paths),
                onset=0,
                apex=int(np.argmax(g)),
                offset=n_frames - 1,
                metadata={"alpha": f"{apex / (n_frames - 1):.6f}"},
            )
        )
        truth[clip_id] = g
    clips.sort(key=lambda c: (c.subject_id, c.clip_id))
    manifest = Manifest(clips=clips, source_name="synthetic")
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    truth_path = out_dir / "ground_truth.csv"
    write_ground_truth(truth, truth_path)
    return SyntheticResult(manifest, manifest_path, truth, truth_path, time.perf_counter() - start)


def write_ground_truth(truth: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "slot", "g"])
        for clip_id in sorted(truth):
            for n, v in enumerate(truth[clip_id]):
                writer.writerow([clip_id, n, repr(float(v))])


def read_ground_truth(path: str | Path) -> dict[str, np.ndarray]:
    rows: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["clip_id"], []).append((int(rec["slot"]), float(rec["g"])))
    return {k: np.array([v for _, v in sorted(items)]) for k, items in rows.items()}
