"""Training losses: regression, smoothness, apex ranking and their weighted sum.

Every loss accepts a single trajectory of shape (T,) or a batch (B, T). Losses
are computed per clip and averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch


@dataclass(frozen=True)
class LossWeights:
    lambda_mse: float = 1.0
    lambda_smooth: float = 0.1
    lambda_rank: float = 0.5

    def __post_init__(self):
        ws = (self.lambda_mse, self.lambda_smooth, self.lambda_rank)
        if any(w < 0 for w in ws):
            raise ValueError(f"loss weights must be non-negative, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")

    def combine(self, mse, smooth, rank):
        return self.lambda_mse * mse + self.lambda_smooth * smooth + self.lambda_rank * rank

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(self.lambda_mse * c, self.lambda_smooth * c, self.lambda_rank * c)


@dataclass
class LossReport:
    mse: float
    smooth: float
    rank: float
    total: float
    weights: LossWeights
    # Differentiable total for backprop; excluded from comparisons.
    tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.dim() == 1 else x


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    pred, target = _batched(pred), _batched(target).to(pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    if pred.shape[-1] < 1:
        raise ValueError("empty trajectory")
    return ((pred - target) ** 2).mean(dim=-1).mean()


def smoothness_loss(pred: torch.Tensor) -> torch.Tensor:
    pred = _batched(pred)
    if pred.shape[-1] < 2:
        raise ValueError("smoothness loss needs T >= 2")
    return (torch.diff(pred, dim=-1) ** 2).mean(dim=-1).mean()


def apex_rank_loss(pred: torch.Tensor, apex_slot, margin: float = 1.0) -> torch.Tensor:
    """Hinge pushing the apex-slot prediction above every other slot by ``margin``.

    The competing slot is the first index attaining the maximum, so the
    subgradient at ties is deterministic.
    """
    pred = _batched(pred)
    B, T = pred.shape
    if T < 2:
        raise ValueError("apex ranking loss needs T >= 2")
    apex = torch.as_tensor(apex_slot, dtype=torch.long).reshape(-1)
    if apex.numel() == 1 and B > 1:
        apex = apex.expand(B)
    if apex.numel() != B:
        raise ValueError(f"expected {B} apex slots, got {apex.numel()}")
    if bool(((apex < 0) | (apex >= T)).any()):
        raise ValueError(f"apex slot out of range [0, {T - 1}]: {apex.tolist()}")
    rows = torch.arange(B)
    at_apex = pred[rows, apex]
    others = pred.detach().clone()
    others[rows, apex] = -torch.inf
    rival = pred[rows, others.argmax(dim=-1)]
    return torch.relu(margin - (at_apex - rival)).mean()


def total_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    apex_slot,
    weights: LossWeights = LossWeights(),
    margin: float = 1.0,
) -> LossReport:
    mse = mse_loss(pred, target)
    smooth = smoothness_loss(pred)
    rank = apex_rank_loss(pred, apex_slot, margin)
    m, s, r = (float(v.detach()) for v in (mse, smooth, rank))
    return LossReport(
        mse=m,
        smooth=s,
        rank=r,
        total=weights.combine(m, s, r),
        weights=weights,
        tensor=weights.combine(mse, smooth, rank),
    )


# Closed-form gradients for a single trajectory, used as a second route next
# to autodiff when verifying the losses.


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    return 2.0 * (pred - target) / pred.size


def smoothness_grad(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, float)
    d = np.diff(pred)
    g = np.zeros_like(pred)
    g[1:] += 2.0 * d
    g[:-1] -= 2.0 * d
    return g / (pred.size - 1)


def apex_rank_grad(pred: np.ndarray, apex_slot: int, margin: float = 1.0) -> np.ndarray:
    pred = np.asarray(pred, float)
    others = pred.copy()
    others[apex_slot] = -np.inf
    rival = int(np.argmax(others))
    g = np.zeros_like(pred)
    if margin - (pred[apex_slot] - pred[rival]) > 0:
        g[apex_slot] = -1.0
        g[rival] = 1.0
    return g


class GradientCheckError(AssertionError):
    pass


def grad_check(
    loss_fn: Callable[[torch.Tensor], torch.Tensor],
    pred,
    step: float = 1e-5,
    tolerance: float | None = None,
    analytic: np.ndarray | None = None,
) -> float:
    """Max relative error between central differences and the given gradient.

    The reference gradient is ``analytic`` when supplied, otherwise autodiff
    of ``loss_fn``. Everything runs in float64. Coordinates where both
    gradients are exactly zero contribute zero error.
    """
    x = torch.as_tensor(np.asarray(pred, dtype=np.float64)).clone()
    if analytic is None:
        xr = x.clone().requires_grad_(True)
        value = loss_fn(xr)
        if not torch.isfinite(value):
            raise FloatingPointError(f"non-finite loss {float(value.detach())}")
        (grad,) = torch.autograd.grad(value, xr)
        reference = grad.numpy()
    else:
        reference = np.asarray(analytic, dtype=np.float64)
    flat = x.reshape(-1)
    numeric = np.zeros(flat.numel())
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + step
            up = float(loss_fn(flat.reshape(x.shape)))
            flat[i] = orig - step
            down = float(loss_fn(flat.reshape(x.shape)))
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while perturbing coordinate {i}")
            numeric[i] = (up - down) / (2.0 * step)
    reference = reference.reshape(-1)
    scale = np.maximum(np.abs(numeric), np.abs(reference))
    err = np.zeros_like(scale)
    nz = scale > 0
    err[nz] = np.abs(numeric[nz] - reference[nz]) / scale[nz]
    worst = float(err.max()) if err.size else 0.0
    if tolerance is not None and worst > tolerance:
        raise GradientCheckError(f"max relative gradient error {worst:.3e} exceeds {tolerance:.1e}")
    return worst
