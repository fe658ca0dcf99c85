"""Clip-wise training, evaluation and the ablation suite."""

from __future__ import annotations

import copy
import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..metrics import EvalReport, evaluate_trajectories
from ..model import IntensityRegressor, ModelConfig, load_checkpoint, save_checkpoint
from ..objective import LossReport, LossWeights, total_loss
from .data import ClipSample

logger = logging.getLogger(__name__)

VARIANTS = ("framewise_baseline", "full_model", "no_smooth", "no_rank", "alt_shape_gaussian")
VARIANT_LABELS = {
    "framewise_baseline": "Frame-wise encoder (baseline)",
    "full_model": "Encoder + BiGRU (full model)",
    "no_smooth": "BiGRU w/o smoothness loss",
    "no_rank": "BiGRU w/o apex-ranking loss",
    "alt_shape_gaussian": "BiGRU, Gaussian pseudo-labels",
}
LOG_FIELDS = ("step", "epoch", "mse", "smooth", "rank", "total", "lr")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    T: int = 16
    batch_size: int = 8
    learning_rate: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    epochs: int = 30
    seed: int = 0
    input_size: int = 64
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    margin: float = 1.0
    hflip: bool = False

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        for name in ("batch_size", "learning_rate", "epochs", "input_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AblationSpec:
    variant: str = "full_model"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def label(self) -> str:
        return VARIANT_LABELS[self.variant]

    @property
    def shape(self) -> str:
        return "gaussian" if self.variant == "alt_shape_gaussian" else "triangular"

    def resolve(self, model_cfg: ModelConfig, weights: LossWeights) -> tuple[ModelConfig, LossWeights, str]:
        """The (model config, loss weights, pseudo-label shape) this variant trains with."""
        if self.variant == "framewise_baseline":
            model_cfg = replace(model_cfg, temporal_mode="framewise")
        else:
            model_cfg = replace(model_cfg, temporal_mode="recurrent")
        if self.variant == "no_smooth":
            weights = replace(weights, lambda_smooth=0.0)
        elif self.variant == "no_rank":
            weights = replace(weights, lambda_rank=0.0)
        return model_cfg, weights, self.shape


@dataclass
class TrainResult:
    model: IntensityRegressor
    log: list[dict]
    best_epoch: int
    best_val_spearman: float | None
    steps: int
    seconds: float
    checkpoint: Path | None = None


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)


def _stack(batch: Sequence[ClipSample], hflip: np.ndarray | None = None):
    frames = torch.stack([s.sequence.frames for s in batch])
    if hflip is not None and hflip.any():
        idx = torch.from_numpy(np.flatnonzero(hflip))
        frames[idx] = frames[idx].flip(-1)
    targets = torch.from_numpy(np.stack([s.target.values for s in batch])).float()
    apex = torch.tensor([s.plan.apex_slot for s in batch])
    return frames, targets, apex


def predict_all(model: IntensityRegressor, data: Sequence[ClipSample], batch_size: int = 32) -> dict[str, np.ndarray]:
    model.eval()
    out = {}
    with torch.no_grad():
        for i in range(0, len(data), batch_size):
            chunk = data[i : i + batch_size]
            preds = model(torch.stack([s.sequence.frames for s in chunk]))
            for s, p in zip(chunk, preds):
                out[s.clip_id] = p.double().numpy()
    return out


def evaluate(
    model: IntensityRegressor | str | Path,
    data: Sequence[ClipSample],
    targets: dict[str, np.ndarray] | None = None,
) -> EvalReport:
    """Rank agreement of model predictions with the pseudo-labels (or ``targets``)."""
    if not isinstance(model, torch.nn.Module):
        model, _ = load_checkpoint(model)
    preds = predict_all(model, data)
    if targets is None:
        targets = {s.clip_id: s.target.values for s in data}
    return evaluate_trajectories(preds, targets)


def _write_log(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("step", "epoch") else float(v)) for k, v in rec.items()}
            for rec in csv.DictReader(fh)
        ]


def train(
    cfg: TrainConfig,
    spec: AblationSpec,
    train_data: Sequence[ClipSample],
    val_data: Sequence[ClipSample] | None = None,
    model_cfg: ModelConfig | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Optimize the weighted loss over mini-batches of clips with Adam.

    The returned model holds the weights of the epoch with the best
    validation mean Spearman (the last epoch when there is no validation
    data). ``train_data`` targets must already use the variant's shape.
    """
    if not train_data:
        raise ValueError("training data is empty")
    start = time.perf_counter()
    base_cfg = model_cfg or ModelConfig(input_size=cfg.input_size)
    mcfg, weights, _ = spec.resolve(base_cfg, cfg.weights)
    seed_everything(cfg.seed)
    model = IntensityRegressor(mcfg)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    log: list[dict] = []
    best_state, best_epoch, best_score = None, -1, -np.inf
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train_data))
        for i in range(0, len(order), cfg.batch_size):
            batch = [train_data[j] for j in order[i : i + cfg.batch_size]]
            flips = rng.random(len(batch)) < 0.5 if cfg.hflip else None
            frames, targets, apex = _stack(batch, flips)
            pred = model(frames)
            report: LossReport = total_loss(pred, targets, apex, weights, cfg.margin)
            if not np.isfinite(report.total):
                _dump_state(model, frames, report, out_dir, step)
                raise TrainingDiverged(f"non-finite loss at step {step} (epoch {epoch}): {report}")
            opt.zero_grad()
            report.tensor.backward()
            opt.step()
            log.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "mse": report.mse,
                    "smooth": report.smooth,
                    "rank": report.rank,
                    "total": report.total,
                    "lr": opt.param_groups[0]["lr"],
                }
            )
            step += 1
        if val_data:
            score = evaluate(model, val_data).mean_spearman
            score = -np.inf if score is None else score
        else:
            score = float(epoch)
        logger.info("epoch %d: loss %.5f, val spearman %s", epoch, log[-1]["total"], score)
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    ckpt = None
    if out_dir is not None:
        ckpt = out_dir / "checkpoint.pt"
        save_checkpoint(model, ckpt, step=step, variant=spec.variant, best_epoch=best_epoch)
        _write_log(log, out_dir / "train_log.csv")
    return TrainResult(
        model=model,
        log=log,
        best_epoch=best_epoch,
        best_val_spearman=float(best_score) if val_data and np.isfinite(best_score) else None,
        steps=step,
        seconds=time.perf_counter() - start,
        checkpoint=ckpt,
    )


def _dump_state(model, frames, report, out_dir: Path | None, step: int) -> None:
    if out_dir is None:
        return
    path = out_dir / f"diverged_step{step}.pt"
    torch.save(
        {"state_dict": model.state_dict(), "frames": frames, "report": {k: v for k, v in vars(report).items() if k != "tensor"}},
        path,
    )
    logger.error("training diverged; state written to %s", path)


@dataclass
class AblationRow:
    variant: str
    label: str
    val: EvalReport | None = None
    train: EvalReport | None = None
    truth: EvalReport | None = None
    error: str | None = None
    seconds: float = 0.0


def run_ablation_suite(
    cfg: TrainConfig,
    variants: Sequence[str],
    datasets: dict[str, tuple[Sequence[ClipSample], Sequence[ClipSample]]],
    model_cfg: ModelConfig | None = None,
    truth: dict[str, np.ndarray] | None = None,
    out_dir: str | Path | None = None,
) -> list[AblationRow]:
    """Train and evaluate each variant on the same split with the same seed.

    ``datasets`` maps pseudo-label shape -> (train, val) samples built from
    one split. ``truth`` optionally maps clip_id -> true intensity on the
    resampled grid, for an extra evaluation against it.
    """
    rows = []
    for variant in variants:
        spec = AblationSpec(variant)
        row = AblationRow(variant=variant, label=spec.label)
        try:
            train_data, val_data = datasets[spec.shape]
            sub = Path(out_dir) / variant if out_dir is not None else None
            result = train(cfg, spec, train_data, val_data, model_cfg, sub)
            row.val = evaluate(result.model, val_data) if val_data else None
            row.train = evaluate(result.model, train_data)
            if truth is not None and val_data:
                row.truth = evaluate(result.model, val_data, truth)
            row.seconds = result.seconds
        except Exception as exc:  # a failing variant must not sink the suite
            logger.exception("variant %s failed", variant)
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
