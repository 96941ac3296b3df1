"""Minibatch SGD with momentum, gradient checking, evaluation and saliency."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import DIRECTIONS
from .model import StrnnModel
from .numerics import finite_diff_grad, make_rng

log = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss or gradient at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 10
    seed: int = 0
    grad_clip: float | None = 5.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    data_loss: float   # mean per-sample negative log-likelihood
    penalty: float     # L1 term at the end of the epoch
    train_acc: float   # accuracy of the predictions made while training
    clamped: int = 0

    def line(self) -> str:
        return f"{self.epoch}\t{self.data_loss:.6f}\t{self.penalty:.6f}\t{self.train_acc:.4f}"


def train(model: StrnnModel, volumes: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
          mask: np.ndarray | None = None,
          on_epoch: Callable[[EpochMetrics], None] | None = None
          ) -> tuple[StrnnModel, list[EpochMetrics]]:
    """Train a copy of ``model``; the input model is left untouched.

    The batch gradient is the sum of per-sample gradients plus the penalty
    gradient, i.e. the gradient of the objective evaluated on that batch.
    """
    model = model.copy()
    volumes = np.asarray(volumes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if len(volumes) != n:
        raise ValueError(f"{len(volumes)} volumes but {n} labels")
    if n and (labels.min() < 0 or labels.max() >= model.config.classes):
        raise ValueError(f"labels must lie in [0, {model.config.classes})")
    rng = make_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history: list[EpochMetrics] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        data_loss = 0.0
        correct = 0
        clamped = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            terms, grads, tr = model.loss_and_grads(
                volumes[idx], labels[idx], None if mask is None else mask[idx])
            if not np.isfinite(terms.total):
                raise TrainingDiverged(epoch, bi)
            data_loss += terms.data
            clamped += terms.clamped
            correct += int((tr.probs.argmax(axis=1) == labels[idx]).sum())
            with np.errstate(over="ignore", invalid="ignore"):
                norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if not np.isfinite(norm):
                raise TrainingDiverged(epoch, bi)
            if cfg.grad_clip is not None:
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    for g in grads.values():
                        g *= scale
            for k, p in model.params.items():
                v = velocity[k]
                v *= cfg.momentum
                v -= cfg.learning_rate * grads[k]
                p += v
        m = EpochMetrics(epoch, data_loss / max(n, 1), model.penalty(),
                         correct / max(n, 1), clamped)
        history.append(m)
        log.debug(m.line())
        if on_epoch is not None:
            on_epoch(m)
    return model, history


@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float
    skipped: int = 0         # entries that sit on a kink and cannot be differenced
    all_zero: bool = False   # analytic gradient identically zero (e.g. dead ReLUs)
    refined: int = 0         # entries differenced with a smaller step near a ReLU kink


@dataclass
class GradCheckReport:
    tensors: list[TensorCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((t.max_rel_error for t in self.tensors), default=0.0)

    def passed(self, tol: float) -> bool:
        return all(t.max_rel_error < tol for t in self.tensors)

    def lines(self) -> list[str]:
        out = []
        for t in self.tensors:
            note = " (all zero)" if t.all_zero else ""
            if t.skipped:
                note += f" ({t.skipped} skipped on a kink)"
            if t.refined:
                note += f" ({t.refined} refined near a ReLU kink)"
            out.append(f"{t.name:16s} max_rel={t.max_rel_error:.3e} at {t.worst_index} "
                       f"analytic={t.analytic:+.6e} numeric={t.numeric:+.6e}{note}")
        return out


REL_FLOOR = 1e-7
REFINE_STEPS = 4  # step / 10 ... step / 10**4


def _relu_pattern(model: StrnnModel, tr) -> np.ndarray | None:
    """Signs of every ReLU pre-activation in a trace; None without ReLUs."""
    if model.config.activation != "relu":
        return None
    parts = []
    if tr.srnn is not None:
        parts += [t.pre > 0 for t in tr.srnn.directions.values()]
    if tr.trnn is not None:
        parts += [tr.trnn.fwd.pre > 0, tr.trnn.bwd.pre > 0]
    return np.concatenate([p.ravel() for p in parts]) if parts else None


def grad_check(model: StrnnModel, volumes: np.ndarray, labels: np.ndarray,
               step: float = 1e-4, mask: np.ndarray | None = None) -> GradCheckReport:
    """Compare analytic gradients with central differences of the full objective.

    Relative error per entry is |a - n| / max(|a|, |n|, 1e-7). Projection
    entries within ``step`` of zero are skipped when their L1 weight is
    positive, because the difference quotient straddles the kink there.
    When a perturbation flips the sign of some ReLU pre-activation, that
    entry is differenced again with the step divided by 10 until no sign
    flips (at most four times); entries that still flip are skipped.
    """
    model = model.copy()
    _, grads, base = model.loss_and_grads(volumes, labels, mask)
    pattern = _relu_pattern(model, base)
    lc = model.config.loss_config()
    kink = {n: lc.lambda1 for n in model.spatial_projection_names()}
    kink.update({n: lc.lambda2 for n in model.temporal_projection_names()})
    report = GradCheckReport()
    for name, p in model.params.items():
        flat = p.reshape(-1)
        original = flat.copy()
        crossed: set[int] = set()

        def f(v, flat=flat, original=original, crossed=crossed):
            flat[:] = v
            tr = model.forward(volumes, mask)
            if pattern is not None and not np.array_equal(_relu_pattern(model, tr), pattern):
                crossed.update(np.flatnonzero(v != original).tolist())
            return model._terms(tr, labels).total

        numeric = finite_diff_grad(f, original, step)
        refined = 0
        unresolved = []
        for i in sorted(crossed):
            one = original.copy()

            def g(x, one=one, i=i):
                one[i] = x[0]
                return f(one)

            for k in range(1, REFINE_STEPS + 1):
                crossed.clear()
                value = finite_diff_grad(g, original[i:i + 1], step / 10 ** k)[0]
                if i not in crossed:
                    numeric[i] = value
                    refined += 1
                    break
            else:
                unresolved.append(i)
        flat[:] = original
        analytic = grads[name].reshape(-1)
        rel = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
        near = np.zeros(rel.shape, dtype=bool)
        if kink.get(name, 0.0) > 0:
            near = np.abs(original) <= step
        near[unresolved] = True
        rel[near] = 0.0
        worst = int(np.argmax(rel))
        report.tensors.append(TensorCheck(
            name, float(rel[worst]), tuple(int(i) for i in np.unravel_index(worst, p.shape)),
            float(analytic[worst]), float(numeric[worst]), int(near.sum()),
            bool(not np.any(analytic)), refined))
    return report


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # rows true class, columns predicted

    def per_class(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)


def evaluate(model: StrnnModel, volumes: np.ndarray, labels: np.ndarray,
             mask: np.ndarray | None = None, batch_size: int = 256) -> Evaluation:
    labels = np.asarray(labels, dtype=np.int64)
    C = model.config.classes
    conf = np.zeros((C, C), dtype=np.int64)
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        pred = model.predict(volumes[sl], None if mask is None else mask[sl])
        np.add.at(conf, (labels[sl], pred), 1)
    total = int(conf.sum())
    acc = float(np.trace(conf)) / total if total else 0.0
    return Evaluation(acc, conf)


def saliency(model: StrnnModel) -> np.ndarray:
    """Per-cell weight from the spatial projections, as an (H, W) map in [0, 1].

    For each direction, row k of |G| (summed over columns) belongs to the
    cell visited at step k. The four directions are averaged, then the map
    is divided by its maximum. Unoccupied cells are NaN.
    """
    if not model.config.uses_srnn:
        raise ValueError(f"mode {model.config.mode!r} has no spatial projections")
    lay = model.layout
    acc = np.zeros((lay.height, lay.width))
    for plan in model.plans:
        row_mass = np.abs(model.params[f"srnn.{plan.direction.short}.G"]).sum(axis=1)
        for k, (i, j) in enumerate(plan.order):
            acc[i, j] += row_mass[k]
    acc /= len(DIRECTIONS)
    top = acc[lay.occupancy].max()
    if top > 0:
        acc = acc / top
    acc[~lay.occupancy] = np.nan
    return acc
