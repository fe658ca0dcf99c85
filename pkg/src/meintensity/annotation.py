"""Dataset-agnostic clip annotations and adapters for raw dataset layouts.

All landmark indices are 0-based positions into ``ClipAnnotation.frame_paths``.
Adapters are responsible for converting dataset-native frame numbers.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LAYOUTS = ("samm_like", "casme2_like", "flat_json")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff")


class ManifestError(ValueError):
    """Raised for unreadable or malformed manifests and annotation tables."""


@dataclass(frozen=True)
class ClipAnnotation:
    subject_id: str
    clip_id: str
    frame_paths: tuple[str, ...]
    onset: int
    apex: int
    offset: int
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        # Accept lists from callers but keep the instance hashable-ish and immutable.
        object.__setattr__(self, "frame_paths", tuple(self.frame_paths))

    @property
    def n_frames(self) -> int:
        return len(self.frame_paths)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "clip_id": self.clip_id,
            "frame_paths": list(self.frame_paths),
            "onset": self.onset,
            "apex": self.apex,
            "offset": self.offset,
            "metadata": dict(self.metadata),
        }


@dataclass
class Manifest:
    clips: list[ClipAnnotation]
    source_name: str = ""
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.clips)

    def subjects(self) -> list[str]:
        return sorted({c.subject_id for c in self.clips})

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "source_name": self.source_name,
            "clips": [c.to_dict() for c in self.clips],
        }


def validate_clip(clip: ClipAnnotation) -> list[str]:
    """Return one message per violated invariant, in a fixed order.

    An empty list means the clip is valid.
    """
    problems = []
    n = clip.n_frames
    on, ap, off = clip.onset, clip.apex, clip.offset
    if n < 3:
        problems.append(f"clip has {n} frames, at least 3 required")
    if on >= ap:
        problems.append("onset must precede apex")
    if ap >= off:
        problems.append("apex must precede offset")
    for name, idx in (("onset", on), ("apex", ap), ("offset", off)):
        if not 0 <= idx <= n - 1:
            problems.append(f"{name} index {idx} out of range [0, {n - 1}]")
    if len(set(clip.frame_paths)) != n:
        problems.append("frame_paths contains duplicates")
    return problems


def validate_manifest(manifest: Manifest) -> list[str]:
    problems = []
    if manifest.schema_version != SCHEMA_VERSION:
        problems.append(f"unsupported schema_version {manifest.schema_version}")
    seen = set()
    for clip in manifest.clips:
        if clip.clip_id in seen:
            problems.append(f"duplicate clip_id {clip.clip_id!r}")
        seen.add(clip.clip_id)
        problems.extend(f"{clip.clip_id}: {p}" for p in validate_clip(clip))
    return problems


def _clip_from_dict(record: Any, position: int) -> ClipAnnotation:
    where = f"clip record #{position}"
    if not isinstance(record, dict):
        raise ManifestError(f"{where}: expected an object, got {type(record).__name__}")
    if "clip_id" in record:
        where = f"clip record #{position} ({record['clip_id']!r})"
    try:
        frame_paths = record["frame_paths"]
        landmarks = [record[k] for k in ("onset", "apex", "offset")]
        subject_id, clip_id = record["subject_id"], record["clip_id"]
    except KeyError as exc:
        raise ManifestError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(frame_paths, list) or not all(isinstance(p, str) for p in frame_paths):
        raise ManifestError(f"{where}: frame_paths must be a list of strings")
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in landmarks):
        raise ManifestError(f"{where}: onset/apex/offset must be integers")
    if not isinstance(subject_id, str) or not isinstance(clip_id, str):
        raise ManifestError(f"{where}: subject_id and clip_id must be strings")
    metadata = record.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ManifestError(f"{where}: metadata must be an object")
    return ClipAnnotation(
        subject_id=subject_id,
        clip_id=clip_id,
        frame_paths=tuple(frame_paths),
        onset=landmarks[0],
        apex=landmarks[1],
        offset=landmarks[2],
        metadata={str(k): str(v) for k, v in metadata.items()},
    )


def manifest_from_dict(doc: Any) -> Manifest:
    if not isinstance(doc, dict):
        raise ManifestError("manifest document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema_version {version!r}")
    clips = doc.get("clips")
    if not isinstance(clips, list):
        raise ManifestError("manifest 'clips' must be a list")
    return Manifest(
        clips=[_clip_from_dict(rec, i) for i, rec in enumerate(clips)],
        source_name=str(doc.get("source_name", "")),
        schema_version=version,
    )


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(doc)


@dataclass
class AdapterConfig:
    """Where the annotation table lives and how to read it.

    ``columns`` maps the logical names subject/clip/onset/apex/offset to the
    table's header names. ``clip_dir`` is a format template resolved against
    the dataset root. Frame numbers are parsed with ``frame_pattern`` (the
    first capture group) from each image's file stem.
    """

    annotation_table: str = ""
    columns: dict[str, str] = field(default_factory=dict)
    clip_dir: str = ""
    frame_pattern: str = r"(\d+)$"

    @classmethod
    def for_layout(cls, layout: str) -> "AdapterConfig":
        if layout == "casme2_like":
            return cls(
                annotation_table="annotations.csv",
                columns={
                    "subject": "Subject",
                    "clip": "Filename",
                    "onset": "OnsetFrame",
                    "apex": "ApexFrame",
                    "offset": "OffsetFrame",
                },
                clip_dir="sub{subject}/{clip}",
            )
        if layout == "samm_like":
            return cls(
                annotation_table="annotations.csv",
                columns={
                    "subject": "Subject",
                    "clip": "Filename",
                    "onset": "Onset Frame",
                    "apex": "Apex Frame",
                    "offset": "Offset Frame",
                },
                clip_dir="{subject}/{clip}",
            )
        if layout == "flat_json":
            return cls(annotation_table="manifest.json")
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def _keep_valid(clips: list[ClipAnnotation]) -> list[ClipAnnotation]:
    kept, seen = [], set()
    for clip in clips:
        problems = validate_clip(clip)
        if clip.clip_id in seen:
            problems.append(f"duplicate clip_id {clip.clip_id!r}")
        if problems:
            logger.warning("dropping clip %s: %s", clip.clip_id, "; ".join(problems))
            continue
        seen.add(clip.clip_id)
        kept.append(clip)
    return sorted(kept, key=lambda c: (c.subject_id, c.clip_id))


def _list_frames(clip_dir: Path, pattern: re.Pattern) -> dict[int, str]:
    frames = {}
    for p in clip_dir.iterdir():
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        m = pattern.search(p.stem)
        if m is None:
            continue
        frames[int(m.group(1))] = p
    return frames


def _adapt_table(root: Path, layout: str, cfg: AdapterConfig) -> list[ClipAnnotation]:
    table = root / cfg.annotation_table
    if not table.is_file():
        raise ManifestError(f"annotation table not found: {table}")
    pattern = re.compile(cfg.frame_pattern)
    cols = cfg.columns
    with table.open(newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.DictReader(fh))
    if rows:
        missing = [v for v in cols.values() if v not in rows[0]]
        if missing:
            raise ManifestError(f"{table}: missing columns {missing}")
    clips = []
    used = set(cols.values())
    for lineno, row in enumerate(rows, start=2):
        subject = row[cols["subject"]].strip()
        clip_name = row[cols["clip"]].strip()
        clip_id = f"{subject}/{clip_name}"
        try:
            numbers = [int(str(row[cols[k]]).strip()) for k in ("onset", "apex", "offset")]
        except ValueError:
            logger.warning("dropping clip %s (line %d): non-integer landmark", clip_id, lineno)
            continue
        clip_dir = root / cfg.clip_dir.format(subject=subject, clip=clip_name)
        try:
            frames = _list_frames(clip_dir, pattern)
        except OSError as exc:
            logger.warning("dropping clip %s: unreadable frame directory %s (%s)", clip_id, clip_dir, exc)
            continue
        ordered = sorted(frames)
        position = {num: i for i, num in enumerate(ordered)}
        absent = [n for n in numbers if n not in position]
        if absent:
            logger.warning("dropping clip %s: landmark frames %s not found in %s", clip_id, absent, clip_dir)
            continue
        frame_paths = tuple(frames[n].relative_to(root).as_posix() for n in ordered)
        metadata = {k: str(v) for k, v in row.items() if k not in used and k is not None}
        clips.append(
            ClipAnnotation(
                subject_id=subject,
                clip_id=clip_id,
                frame_paths=frame_paths,
                onset=position[numbers[0]],
                apex=position[numbers[1]],
                offset=position[numbers[2]],
                metadata=metadata,
            )
        )
    return clips


def adapt_directory(
    root: str | Path, layout: str, config: AdapterConfig | None = None
) -> Manifest:
    """Read a dataset directory into a validated Manifest.

    Invalid clips are logged and dropped; the returned clips are sorted by
    (subject_id, clip_id). Frame paths are relative to ``root``.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"dataset root not found: {root}")
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    cfg = config or AdapterConfig.for_layout(layout)
    if layout == "flat_json":
        path = root / (cfg.annotation_table or "manifest.json")
        if not path.is_file():
            raise ManifestError(f"annotation manifest not found: {path}")
        source = load_manifest(path)
        return Manifest(_keep_valid(source.clips), source_name=source.source_name or root.name)
    clips = _adapt_table(root, layout, cfg)
    return Manifest(_keep_valid(clips), source_name=root.name)
