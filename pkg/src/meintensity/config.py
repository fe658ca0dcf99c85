"""Run configuration: a nested YAML document plus dotted ``key=value`` overrides.

Unknown keys are rejected up front so a typo never silently falls back to a
default.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .annotation import LAYOUTS, AdapterConfig
from .model import ModelConfig
from .objective import LossWeights
from .pipeline.synthetic import SyntheticSpec
from .pipeline.training import VARIANTS, TrainConfig
from .trajectory import SHAPES


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "output_dir": "runs/default",
    "data": {
        "manifest": None,
        "root": None,
        "layout": "flat_json",
        "frames_root": None,
        "ground_truth": None,
        "adapter": {
            "annotation_table": None,
            "columns": None,
            "clip_dir": None,
            "frame_pattern": None,
        },
    },
    "pseudo": {"shape": "triangular", "epsilon": 1e-8, "sigma": 0.15},
    "split": {"policy": "by_clip", "ratio": 0.8, "seed": 0},
    "train": {
        "variant": "full_model",
        "T": 16,
        "batch_size": 8,
        "learning_rate": 1e-4,
        "epochs": 30,
        "seed": 0,
        "input_size": 64,
        "betas": [0.9, 0.999],
        "weight_decay": 0.0,
        "margin": 1.0,
        "hflip": False,
        "weights": {"lambda_mse": 1.0, "lambda_smooth": 0.1, "lambda_rank": 0.5},
    },
    "model": {
        "encoder": "desk_scale",
        "feature_dim": 64,
        "recurrent_hidden": 128,
        "recurrent_layers": 1,
        "bidirectional": True,
        "in_channels": 3,
        "pretrained_path": None,
    },
    "ablation": {"variants": list(VARIANTS)},
    "synthetic": {
        "out_dir": None,
        "seed": 0,
        "n_clips": 200,
        "image_size": 64,
        "noise_std": 0.03,
        "n_subjects": 20,
        "min_frames": 20,
        "max_frames": 48,
        "amplitude": 0.25,
        "jitter": 0.12,
        "blob_sigma": 0.07,
        "shake": 0.05,
        "alpha_range": [0.2, 0.8],
    },
}

# Leaves whose value is itself a free-form mapping.
_OPEN_MAPPINGS = {("data", "adapter", "columns")}


def _merge(base: dict, update: dict, path: tuple = ()) -> None:
    for key, value in update.items():
        here = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(here)!r}")
        if isinstance(base[key], dict) and here not in _OPEN_MAPPINGS:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(here)!r} must be a mapping")
            _merge(base[key], value, here)
        else:
            base[key] = value


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form dotted.key=value")
    key, raw = text.split("=", 1)
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    value = yaml.safe_load(raw) if raw else None
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot (3e-4) as strings.
        try:
            value = float(value)
        except ValueError:
            pass
    return key.split("."), value


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, doc)
    for text in overrides:
        keys, value = parse_override(text)
        nested: Any = value
        for k in reversed(keys):
            nested = {k: nested}
        _merge(cfg, nested)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def validate_config(cfg: dict) -> list[str]:
    """All problems found, so they can be reported together before any work."""
    problems = []
    if cfg["data"]["layout"] not in LAYOUTS:
        problems.append(f"data.layout must be one of {LAYOUTS}")
    if cfg["pseudo"]["shape"] not in SHAPES:
        problems.append(f"pseudo.shape must be one of {SHAPES}")
    if cfg["split"]["policy"] not in ("by_clip", "by_subject"):
        problems.append("split.policy must be by_clip or by_subject")
    if not 0 < float(cfg["split"]["ratio"]) < 1:
        problems.append("split.ratio must lie in (0, 1)")
    if cfg["train"]["variant"] not in VARIANTS:
        problems.append(f"train.variant must be one of {VARIANTS}")
    bad = [v for v in cfg["ablation"]["variants"] or [] if v not in VARIANTS]
    if bad:
        problems.append(f"ablation.variants has unknown entries {bad}")
    for builder in (train_config, model_config, synthetic_spec):
        try:
            builder(cfg)
        except (TypeError, ValueError) as exc:
            problems.append(f"{builder.__name__}: {exc}")
    return problems


def train_config(cfg: dict) -> TrainConfig:
    t = dict(cfg["train"])
    t.pop("variant")
    t["weights"] = LossWeights(**{k: float(v) for k, v in t["weights"].items()})
    t["betas"] = tuple(float(b) for b in t["betas"])
    t["learning_rate"] = float(t["learning_rate"])
    return TrainConfig(**t)


def model_config(cfg: dict) -> ModelConfig:
    m = dict(cfg["model"])
    if m["encoder"] == "paper_scale":
        m["feature_dim"] = 512
    return ModelConfig(input_size=int(cfg["train"]["input_size"]), **m)


def synthetic_spec(cfg: dict) -> SyntheticSpec:
    s = dict(cfg["synthetic"])
    s.pop("out_dir")
    s.pop("seed")
    s["alpha_range"] = tuple(s["alpha_range"])
    return SyntheticSpec(**s)


def adapter_config(cfg: dict) -> AdapterConfig:
    base = AdapterConfig.for_layout(cfg["data"]["layout"])
    for key, value in cfg["data"]["adapter"].items():
        if value is not None:
            setattr(base, key, value)
    return base


def save_config(cfg: dict, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=False))
