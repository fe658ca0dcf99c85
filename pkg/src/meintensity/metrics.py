"""Tie-aware rank correlation between predicted and target trajectories.

Spearman uses average ranks for ties; Kendall is the tau-b variant. Both
return ``None`` when a sequence has no rank variance.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass
class ClipScore:
    clip_id: str
    spearman: float | None
    kendall: float | None


@dataclass
class EvalReport:
    per_clip: list[ClipScore]
    mean_spearman: float | None
    mean_kendall: float | None
    n_clips: int
    n_undefined: int
    pooled_spearman: float | None = None
    pooled_kendall: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        doc = dict(doc)
        doc["per_clip"] = [ClipScore(**c) for c in doc["per_clip"]]
        return cls(**doc)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _as_pair(a: Sequence[float], b: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("rank correlation needs at least 2 points")
    return a, b


def spearman_rho(a: Sequence[float], b: Sequence[float]) -> float | None:
    a, b = _as_pair(a, b)
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    saa, sbb = float(ra @ ra), float(rb @ rb)
    if saa == 0.0 or sbb == 0.0:
        return None
    rho = float(ra @ rb) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, rho))


def pair_counts(a: Sequence[float], b: Sequence[float]) -> tuple[int, int, int, int]:
    """Concordant, discordant, tied-in-a, tied-in-b pair counts.

    Pairs tied in both sequences count towards both tie totals.
    """
    a, b = _as_pair(a, b)
    conc = disc = ties_a = ties_b = 0
    for i in range(a.size - 1):
        sa = np.sign(a[i + 1 :] - a[i])
        sb = np.sign(b[i + 1 :] - b[i])
        prod = sa * sb
        conc += int(np.count_nonzero(prod > 0))
        disc += int(np.count_nonzero(prod < 0))
        ties_a += int(np.count_nonzero(sa == 0))
        ties_b += int(np.count_nonzero(sb == 0))
    return conc, disc, ties_a, ties_b


def kendall_tau(a: Sequence[float], b: Sequence[float]) -> float | None:
    a, b = _as_pair(a, b)
    n = a.size
    conc, disc, ties_a, ties_b = pair_counts(a, b)
    n0 = n * (n - 1) // 2
    denom_a, denom_b = n0 - ties_a, n0 - ties_b
    if denom_a == 0 or denom_b == 0:
        return None
    tau = (conc - disc) / math.sqrt(denom_a * denom_b)
    return min(1.0, max(-1.0, tau))


def score_clip(clip_id: str, pred: Sequence[float], target: Sequence[float]) -> ClipScore:
    return ClipScore(clip_id, spearman_rho(pred, target), kendall_tau(pred, target))


def _mean(values: Iterable[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def aggregate(scores: list[ClipScore]) -> EvalReport:
    """Unweighted mean over clips whose scores are defined."""
    undefined = sum(1 for s in scores if s.spearman is None or s.kendall is None)
    return EvalReport(
        per_clip=list(scores),
        mean_spearman=_mean(s.spearman for s in scores),
        mean_kendall=_mean(s.kendall for s in scores),
        n_clips=len(scores),
        n_undefined=undefined,
    )


def evaluate_trajectories(
    predictions: dict[str, Sequence[float]], targets: dict[str, Sequence[float]]
) -> EvalReport:
    """Score every clip in ``predictions`` and add pooled (concatenated) scores."""
    missing = [k for k in predictions if k not in targets]
    if missing:
        raise KeyError(f"no target for clips {missing}")
    scores = [score_clip(k, predictions[k], targets[k]) for k in predictions]
    report = aggregate(scores)
    if predictions:
        pred = np.concatenate([np.ravel(predictions[k]) for k in predictions])
        targ = np.concatenate([np.ravel(targets[k]) for k in predictions])
        if pred.size >= 2:
            report.pooled_spearman = spearman_rho(pred, targ)
            report.pooled_kendall = kendall_tau(pred, targ)
    return report


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def results_table(rows: dict[str, EvalReport], fmt: str = "markdown") -> str:
    """Render variant -> report rows with columns Model, Spearman, Kendall."""
    header = ["Model", "Spearman ρ", "Kendall τ"]
    body = [[name, _fmt(r.mean_spearman), _fmt(r.mean_kendall)] for name, r in rows.items()]
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in body]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    raise ValueError(f"unknown table format {fmt!r}")
