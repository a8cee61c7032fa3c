"""Centerness focal loss, L1 motion/regression losses and their weighted sum.

Everything here is plain numpy so the analytic gradient can be checked against
finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .targets import Center


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 2.0
    beta: float = 4.0
    w_cen: float = 1.0
    w_mot: float = 1.0
    w_reg: float = 0.25
    eps: float = 1e-12

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 < self.eps <= 1e-4:
            raise ValueError("eps must lie in (0, 1e-4]")


def _check(pred: np.ndarray, target: np.ndarray, centers: Sequence) -> int:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = len(centers)
    if n == 0:
        raise ValueError("loss needs at least one object centre")
    return n


def focal_terms(pred: np.ndarray, target: np.ndarray, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Per-cell focal term before the -1/N normalisation.

    Positive cells (target exactly 1) give (1-Y)^a log Y, all others
    (1-T)^b Y^a log(1-Y); predictions are clamped to [eps, 1-eps].
    """
    y = np.clip(np.asarray(pred, dtype=np.float64), cfg.eps, 1.0 - cfg.eps)
    t = np.asarray(target, dtype=np.float64)
    pos = t == 1.0
    pos_term = (1.0 - y) ** cfg.alpha * np.log(y)
    neg_term = (1.0 - t) ** cfg.beta * y ** cfg.alpha * np.log1p(-y)
    return np.where(pos, pos_term, neg_term)


def focal_loss(pred: np.ndarray, target: np.ndarray, centers: Sequence, cfg: LossConfig = LossConfig()) -> float:
    n = _check(pred, target, centers)
    # compensated summation keeps the result independent of reduction order
    return -math.fsum(focal_terms(pred, target, cfg).ravel()) / n


def focal_loss_grad(pred: np.ndarray, target: np.ndarray, centers: Sequence, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """d focal_loss / d pred, cell by cell. Zero where the clamp is active."""
    n = _check(pred, target, centers)
    raw = np.asarray(pred, dtype=np.float64)
    y = np.clip(raw, cfg.eps, 1.0 - cfg.eps)
    t = np.asarray(target, dtype=np.float64)
    a, b = cfg.alpha, cfg.beta
    pos = t == 1.0
    # d/dy (1-y)^a log y
    d_pos = (1.0 - y) ** a / y
    if a != 0:
        d_pos = d_pos - a * (1.0 - y) ** (a - 1) * np.log(y)
    # d/dy y^a log(1-y)
    d_neg = -(y ** a) / (1.0 - y)
    if a != 0:
        d_neg = d_neg + a * y ** (a - 1) * np.log1p(-y)
    d_neg = (1.0 - t) ** b * d_neg
    grad = -np.where(pos, d_pos, d_neg) / n
    inside = (raw >= cfg.eps) & (raw <= 1.0 - cfg.eps)
    return np.where(inside, grad, 0.0)


def _center_l1(pred: np.ndarray, target: np.ndarray, centers: Sequence[Center]) -> float:
    n = _check(pred, target, centers)
    terms = []
    for c in centers:
        r, col = c.cell
        terms.extend(np.abs(target[:, r, col] - pred[:, r, col]).tolist())
    return math.fsum(terms) / n


def motion_loss(pred: np.ndarray, target: np.ndarray, centers: Sequence[Center]) -> float:
    """Mean over centres of the L1 motion error, read at centre cells only."""
    return _center_l1(pred, target, centers)


def reg_loss(pred: np.ndarray, target: np.ndarray, centers: Sequence[Center]) -> float:
    """Mean over centres of the L1 error across the six regression channels."""
    return _center_l1(pred, target, centers)


def total_loss(parts: Sequence[float], cfg: LossConfig = LossConfig()) -> float:
    l_cen, l_mot, l_reg = parts
    return cfg.w_cen * l_cen + cfg.w_mot * l_mot + cfg.w_reg * l_reg


def loss_parts(head, targets, cfg: LossConfig = LossConfig()) -> tuple[float, float, float]:
    """(centerness, motion, regression) losses of a HeadOutput against TargetMaps."""
    return (
        focal_loss(head.centerness, targets.centerness, targets.centers, cfg),
        motion_loss(head.motion, targets.motion, targets.centers),
        reg_loss(head.regression, targets.regression, targets.centers),
    )
