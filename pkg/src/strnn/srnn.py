"""Quad-directional spatial RNN layer with sparse spatial projections.

Every time slice is scanned by four directional recurrences over the grid.
Each direction's hidden states (indexed by visit step) are compressed by a
projection ``G`` (K x K_p), flattened, mapped by ``V`` and summed over
directions to give one output vector per slice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DIRECTIONS, Direction, GridLayout, TraversalPlan
from .numerics import ShapeError, activation, activation_grad, glorot_uniform, ordered_map


MAX_PREDECESSORS = 3


@dataclass
class DirectionWeights:
    U: np.ndarray  # hidden x input
    W: np.ndarray  # hidden x hidden
    b: np.ndarray  # hidden
    G: np.ndarray  # K x K_p
    V: np.ndarray  # out x (hidden * K_p)


@dataclass
class SrnnParams:
    weights: dict[Direction, DirectionWeights]
    activation: str = "relu"

    @property
    def hidden(self) -> int:
        return self.weights[Direction.TOP_LEFT].W.shape[0]

    @property
    def k_proj(self) -> int:
        return self.weights[Direction.TOP_LEFT].G.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[Direction.TOP_LEFT].V.shape[0]

    def check(self, cells: int, input_dim: int) -> None:
        for d, w in self.weights.items():
            h = w.W.shape[0]
            kp = w.G.shape[1]
            expected = {"U": (h, input_dim), "W": (h, h), "b": (h,),
                        "G": (cells, kp), "V": (w.V.shape[0], h * kp)}
            for name, shape in expected.items():
                got = getattr(w, name).shape
                if got != shape:
                    raise ShapeError(f"srnn {d.short}.{name} has shape {got}, expected {shape}")


def init_srnn(rng: np.random.Generator, cells: int, input_dim: int, hidden: int,
              k_proj: int, out_dim: int, act: str = "relu") -> SrnnParams:
    weights = {}
    for d in DIRECTIONS:
        weights[d] = DirectionWeights(
            U=glorot_uniform(rng, hidden, input_dim),
            # a cell sums up to MAX_PREDECESSORS states through W and feeds as
            # many successors, so both fans count every recurrent connection
            W=glorot_uniform(rng, hidden, hidden, MAX_PREDECESSORS * hidden,
                             MAX_PREDECESSORS * hidden),
            b=np.zeros(hidden),
            G=glorot_uniform(rng, cells, k_proj),
            V=glorot_uniform(rng, out_dim, hidden * k_proj),
        )
    return SrnnParams(weights, act)


@dataclass
class DirectionTrace:
    pre: np.ndarray     # (N, K, hidden) pre-activations, by visit step
    hidden: np.ndarray  # (N, K, hidden)
    projected: np.ndarray  # (N, K_p * hidden), the flattened s_t


@dataclass
class SrnnTrace:
    inputs: np.ndarray  # (N, K, D) occupied-cell inputs in raster order, N = B*T
    directions: dict[Direction, DirectionTrace]
    output: np.ndarray  # (B, T, out)


def gather_cells(volume: np.ndarray, layout: GridLayout) -> np.ndarray:
    """(B, T, H, W, D) volume -> (B, T, K, D) occupied cells in raster order."""
    if volume.ndim != 5 or volume.shape[2:4] != (layout.height, layout.width):
        raise ShapeError(f"volume shape {volume.shape} does not match a "
                         f"{layout.height}x{layout.width} layout (B, T, H, W, D)")
    occ = layout.occupancy
    rows, cols = np.nonzero(occ)
    return volume[:, :, rows, cols, :]


def _scan(w: DirectionWeights, plan: TraversalPlan, x: np.ndarray, act: str):
    xs = x[:, plan.cell_index, :]
    pre = xs @ w.U.T + w.b
    hid = np.empty_like(pre)
    for k, preds in enumerate(plan.predecessors):
        if preds:
            acc = hid[:, preds[0]].copy()
            for p in preds[1:]:
                acc += hid[:, p]
            pre[:, k] += acc @ w.W.T
        hid[:, k] = activation(pre[:, k], act)
    proj = np.einsum("nkh,kl->nlh", hid, w.G).reshape(len(x), -1)
    return DirectionTrace(pre, hid, proj)


def srnn_forward(params: SrnnParams, plans: tuple[TraversalPlan, ...],
                 volume: np.ndarray, layout: GridLayout) -> SrnnTrace:
    cells = gather_cells(volume, layout)
    B, T, K, D = cells.shape
    params.check(K, D)
    x = cells.reshape(B * T, K, D)
    traces = ordered_map(lambda p: _scan(params.weights[p.direction], p, x, params.activation),
                         plans)
    out = np.zeros((B * T, params.out_dim))
    # fixed direction order keeps the reduction deterministic
    for plan, tr in zip(plans, traces):
        out += tr.projected @ params.weights[plan.direction].V.T
    return SrnnTrace(x, {p.direction: tr for p, tr in zip(plans, traces)},
                     out.reshape(B, T, -1))


def _scan_backward(w: DirectionWeights, plan: TraversalPlan, x: np.ndarray,
                   tr: DirectionTrace, dm: np.ndarray, act: str) -> DirectionWeights:
    N, K, h = tr.hidden.shape
    kp = w.G.shape[1]
    dV = dm.T @ tr.projected
    ds = (dm @ w.V).reshape(N, kp, h)
    dG = np.einsum("nkh,nlh->kl", tr.hidden, ds)
    dh = np.einsum("nlh,kl->nkh", ds, w.G)
    dU = np.zeros_like(w.U)
    dW = np.zeros_like(w.W)
    db = np.zeros_like(w.b)
    xs = x[:, plan.cell_index, :]
    for k in range(K - 1, -1, -1):
        da = dh[:, k] * activation_grad(tr.pre[:, k], tr.hidden[:, k], act)
        dU += da.T @ xs[:, k]
        db += da.sum(axis=0)
        preds = plan.predecessors[k]
        if preds:
            acc = tr.hidden[:, preds[0]].copy()
            for p in preds[1:]:
                acc += tr.hidden[:, p]
            dW += da.T @ acc
            back = da @ w.W
            for p in preds:
                dh[:, p] += back
    return DirectionWeights(dU, dW, db, dG, dV)


def srnn_backward(params: SrnnParams, plans: tuple[TraversalPlan, ...],
                  trace: SrnnTrace | None, grad_m: np.ndarray) -> SrnnParams:
    """Gradients of the loss w.r.t. every SRNN parameter.

    ``grad_m`` has the shape of ``trace.output``. Inputs are leaves, so no
    input gradient is returned.
    """
    if trace is None:
        raise ValueError("srnn_backward needs the trace from srnn_forward")
    if grad_m.shape != trace.output.shape:
        raise ShapeError(f"grad_m shape {grad_m.shape} != output shape {trace.output.shape}")
    dm = grad_m.reshape(-1, grad_m.shape[-1])
    grads = ordered_map(
        lambda p: _scan_backward(params.weights[p.direction], p, trace.inputs,
                                 trace.directions[p.direction], dm, params.activation),
        plans)
    return SrnnParams({p.direction: g for p, g in zip(plans, grads)}, params.activation)
