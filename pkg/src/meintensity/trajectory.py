"""Temporal normalization and dense pseudo-intensity targets.

A clip's onset..offset span is resampled to ``T`` slots and each slot gets a
target intensity built from where the apex falls in normalized time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-8
DEFAULT_SIGMA = 0.15
SHAPES = ("triangular", "gaussian")


@dataclass(frozen=True)
class ResamplePlan:
    source_indices: tuple[int, ...]
    T: int
    apex_slot: int


@dataclass(frozen=True)
class PseudoTrajectory:
    values: np.ndarray
    alpha: float
    shape: str
    epsilon: float = DEFAULT_EPSILON

    def __len__(self) -> int:
        return len(self.values)

    @property
    def peak_slot(self) -> int:
        return int(np.argmax(self.values))


def _check_length(T: int) -> None:
    if T < 2:
        raise ValueError(f"trajectory length must be >= 2, got {T}")


def _check_landmarks(f_on: int, f_ap: int, f_off: int) -> None:
    if not f_on < f_ap < f_off:
        raise ValueError(f"landmarks must satisfy onset < apex < offset, got ({f_on}, {f_ap}, {f_off})")


def normalized_time(t, T: int):
    """Map slot index ``t`` (scalar or array) to [0, 1]."""
    _check_length(T)
    if np.ndim(t) == 0:
        if not 0 <= t <= T - 1:
            raise ValueError(f"slot {t} out of range for T={T}")
        return t / (T - 1)
    t = np.asarray(t)
    return t / (T - 1)


def apex_fraction(f_on: int, f_ap: int, f_off: int) -> float:
    _check_landmarks(f_on, f_ap, f_off)
    return (f_ap - f_on) / (f_off - f_on)


def resample_plan(f_on: int, f_ap: int, f_off: int, T: int) -> ResamplePlan:
    _check_landmarks(f_on, f_ap, f_off)
    _check_length(T)
    span, denom = f_off - f_on, T - 1
    # Integer round-half-up of t*span/denom, so the plan is bit-exact.
    indices = tuple(f_on + (2 * t * span + denom) // (2 * denom) for t in range(T))
    distances = [abs(i - f_ap) for i in indices]
    apex_slot = distances.index(min(distances))
    return ResamplePlan(source_indices=indices, T=T, apex_slot=apex_slot)


def triangular(T: int, alpha: float, epsilon: float = DEFAULT_EPSILON) -> PseudoTrajectory:
    _check_length(T)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    tau = np.arange(T) / (T - 1)
    rise = tau / (alpha + epsilon)
    fall = (1.0 - tau) / (1.0 - alpha + epsilon)
    values = np.clip(np.where(tau <= alpha, rise, fall), 0.0, 1.0)
    return PseudoTrajectory(values=values, alpha=float(alpha), shape="triangular", epsilon=epsilon)


def gaussian(T: int, alpha: float, sigma: float = DEFAULT_SIGMA) -> PseudoTrajectory:
    _check_length(T)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    tau = np.arange(T) / (T - 1)
    values = np.exp(-((tau - alpha) ** 2) / (2.0 * sigma**2))
    return PseudoTrajectory(values=values, alpha=float(alpha), shape="gaussian", epsilon=DEFAULT_EPSILON)


def pseudo_trajectory(
    T: int,
    alpha: float,
    shape: str = "triangular",
    epsilon: float = DEFAULT_EPSILON,
    sigma: float = DEFAULT_SIGMA,
) -> PseudoTrajectory:
    if shape == "triangular":
        return triangular(T, alpha, epsilon)
    if shape == "gaussian":
        return gaussian(T, alpha, sigma)
    raise ValueError(f"unknown pseudo-label shape {shape!r}; expected one of {SHAPES}")


def clip_target(
    f_on: int,
    f_ap: int,
    f_off: int,
    T: int,
    shape: str = "triangular",
    epsilon: float = DEFAULT_EPSILON,
    sigma: float = DEFAULT_SIGMA,
) -> tuple[ResamplePlan, PseudoTrajectory]:
    """Resampling plan and slot-aligned target for one annotated clip."""
    plan = resample_plan(f_on, f_ap, f_off, T)
    traj = pseudo_trajectory(T, apex_fraction(f_on, f_ap, f_off), shape, epsilon, sigma)
    return plan, traj


def nearest_slot(T: int, alpha: float) -> int:
    tau = np.arange(T) / (T - 1)
    return int(np.argmin(np.abs(tau - alpha)))

