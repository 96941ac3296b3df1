"""Softmax, cross-entropy and the L1 penalty on projection matrices."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 1e-3  # spatial projections
    lambda2: float = 1e-3  # temporal projections
    class_count: int = 3

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("L1 weights must be nonnegative")
        if self.class_count < 2:
            raise ValueError("need at least two classes")


@dataclass(frozen=True)
class LossTerms:
    data: float     # summed negative log-likelihood
    penalty: float
    clamped: int    # probabilities floored before the log

    @property
    def total(self) -> float:
        return self.data + self.penalty


def softmax(o: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max shift; accepts (C,) or (N, C)."""
    o = np.asarray(o, dtype=np.float64)
    z = np.exp(o - o.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _check(probs: np.ndarray, labels: np.ndarray, cfg: LossConfig):
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    if probs.shape != (len(labels), cfg.class_count):
        raise ValueError(f"probs shape {probs.shape} does not match "
                         f"{len(labels)} labels and {cfg.class_count} classes")
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.class_count):
        raise ValueError(f"labels must lie in [0, {cfg.class_count})")
    return probs, labels.astype(np.int64)


def l1_penalty(spatial: Sequence[np.ndarray], temporal: Sequence[np.ndarray],
               cfg: LossConfig) -> float:
    # sum over columns of column L1 norms == entrywise L1 norm
    s = sum(float(np.abs(g).sum()) for g in spatial)
    t = sum(float(np.abs(g).sum()) for g in temporal)
    return cfg.lambda1 * s + cfg.lambda2 * t


def objective_terms(probs, labels, spatial: Sequence[np.ndarray],
                    temporal: Sequence[np.ndarray], cfg: LossConfig) -> LossTerms:
    probs, labels = _check(probs, labels, cfg)
    p_true = probs[np.arange(len(labels)), labels]
    clamped = int(np.count_nonzero(p_true < PROB_FLOOR))
    if clamped:
        log.warning("clamped %d true-class probabilities to %g", clamped, PROB_FLOOR)
    data = float(-np.log(np.maximum(p_true, PROB_FLOOR)).sum())
    return LossTerms(data, l1_penalty(spatial, temporal, cfg), clamped)


def objective(probs, labels, spatial, temporal, cfg: LossConfig) -> float:
    return objective_terms(probs, labels, spatial, temporal, cfg).total


def objective_grad(probs, labels, spatial: Sequence[np.ndarray],
                   temporal: Sequence[np.ndarray], cfg: LossConfig):
    """Gradients w.r.t. the logits (N, C) and each projection matrix.

    sign(0) is taken as 0 for the L1 terms.
    """
    probs, labels = _check(probs, labels, cfg)
    d_logits = probs.copy()
    d_logits[np.arange(len(labels)), labels] -= 1.0
    d_spatial = [cfg.lambda1 * np.sign(g) for g in spatial]
    d_temporal = [cfg.lambda2 * np.sign(g) for g in temporal]
    return d_logits, d_spatial, d_temporal
