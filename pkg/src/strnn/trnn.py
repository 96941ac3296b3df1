"""Bidirectional temporal RNN with sparse temporal projections.

The forward chain reads m_1..m_L, the backward chain reads m_L..m_1. States
of both chains are indexed by scan step (the backward chain's step 0 has
consumed m_L), and the projections G_f, G_b (L x L_p) act on that index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, activation, activation_grad, glorot_uniform


@dataclass
class ChainWeights:
    W_ih: np.ndarray  # hidden x input
    W_hh: np.ndarray  # hidden x hidden
    b: np.ndarray     # hidden
    G: np.ndarray     # L x L_p
    V: np.ndarray     # classes x (hidden * L_p)


@dataclass
class TrnnParams:
    fwd: ChainWeights
    bwd: ChainWeights
    activation: str = "relu"

    @property
    def seq_len(self) -> int:
        return self.fwd.G.shape[0]

    @property
    def classes(self) -> int:
        return self.fwd.V.shape[0]

    def check(self, seq_len: int, input_dim: int) -> None:
        for tag, c in (("f", self.fwd), ("b", self.bwd)):
            h = c.W_hh.shape[0]
            lp = c.G.shape[1]
            expected = {"W_ih": (h, input_dim), "W_hh": (h, h), "b": (h,),
                        "G": (seq_len, lp), "V": (c.V.shape[0], h * lp)}
            for name, shape in expected.items():
                got = getattr(c, name).shape
                if got != shape:
                    raise ShapeError(f"trnn {tag}.{name} has shape {got}, expected {shape}")


def init_trnn(rng: np.random.Generator, input_dim: int, hidden: int, seq_len: int,
              l_proj: int, classes: int, act: str = "relu") -> TrnnParams:
    def chain():
        return ChainWeights(
            W_ih=glorot_uniform(rng, hidden, input_dim),
            W_hh=glorot_uniform(rng, hidden, hidden),
            b=np.zeros(hidden),
            G=glorot_uniform(rng, seq_len, l_proj),
            V=glorot_uniform(rng, classes, hidden * l_proj),
        )
    return TrnnParams(chain(), chain(), act)


@dataclass
class ChainTrace:
    pre: np.ndarray     # (B, L, hidden), by scan step
    hidden: np.ndarray  # (B, L, hidden)
    q: np.ndarray       # (B, L_p * hidden)


@dataclass
class TrnnTrace:
    fwd: ChainTrace
    bwd: ChainTrace
    logits: np.ndarray  # (B, C)
    mask: np.ndarray | None = None


def _chain(c: ChainWeights, m: np.ndarray, mask: np.ndarray | None, act: str) -> ChainTrace:
    B, L, _ = m.shape
    pre = m @ c.W_ih.T + c.b
    hid = np.empty_like(pre)
    for t in range(L):
        if t > 0:
            pre[:, t] += hid[:, t - 1] @ c.W_hh.T
        hid[:, t] = activation(pre[:, t], act)
    used = hid if mask is None else hid * mask[:, :, None]
    q = np.einsum("bth,tp->bph", used, c.G).reshape(B, -1)
    return ChainTrace(pre, hid, q)


def trnn_forward(params: TrnnParams, m: np.ndarray,
                 mask: np.ndarray | None = None) -> TrnnTrace:
    """Run both chains over ``m`` (B, L, input) and fuse into logits (B, C).

    ``mask`` (B, L), if given, marks real (1) vs padded (0) steps; padded
    steps are excluded from the projections.
    """
    if m.ndim != 3:
        raise ShapeError(f"expected (B, L, input) sequence, got {m.shape}")
    if m.shape[1] < 1:
        raise ValueError("empty sequence")
    params.check(m.shape[1], m.shape[2])
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != m.shape[:2]:
            raise ShapeError(f"mask shape {mask.shape} != {m.shape[:2]}")
    f = _chain(params.fwd, m, mask, params.activation)
    b = _chain(params.bwd, m[:, ::-1], None if mask is None else mask[:, ::-1],
               params.activation)
    logits = f.q @ params.fwd.V.T + b.q @ params.bwd.V.T
    return TrnnTrace(f, b, logits, mask)


def _chain_backward(c: ChainWeights, m: np.ndarray, tr: ChainTrace,
                    mask: np.ndarray | None, d_logits: np.ndarray, act: str):
    B, L, h = tr.hidden.shape
    lp = c.G.shape[1]
    dV = d_logits.T @ tr.q
    dq = (d_logits @ c.V).reshape(B, lp, h)
    used = tr.hidden if mask is None else tr.hidden * mask[:, :, None]
    dG = np.einsum("bth,bph->tp", used, dq)
    dh = np.einsum("bph,tp->bth", dq, c.G)
    if mask is not None:
        dh *= mask[:, :, None]
    dW_ih = np.zeros_like(c.W_ih)
    dW_hh = np.zeros_like(c.W_hh)
    db = np.zeros_like(c.b)
    dm = np.empty_like(m)
    carry = np.zeros((B, h))
    for t in range(L - 1, -1, -1):
        da = (dh[:, t] + carry) * activation_grad(tr.pre[:, t], tr.hidden[:, t], act)
        dW_ih += da.T @ m[:, t]
        db += da.sum(axis=0)
        dm[:, t] = da @ c.W_ih
        if t > 0:
            dW_hh += da.T @ tr.hidden[:, t - 1]
            carry = da @ c.W_hh
    return ChainWeights(dW_ih, dW_hh, db, dG, dV), dm


def trnn_backward(params: TrnnParams, m: np.ndarray, trace: TrnnTrace | None,
                  grad_o: np.ndarray) -> tuple[TrnnParams, np.ndarray]:
    """Return (parameter gradients, gradient w.r.t. the input sequence m)."""
    if trace is None:
        raise ValueError("trnn_backward needs the trace from trnn_forward")
    if grad_o.shape != trace.logits.shape:
        raise ShapeError(f"grad_o shape {grad_o.shape} != logits shape {trace.logits.shape}")
    mask = trace.mask
    gf, dm_f = _chain_backward(params.fwd, m, trace.fwd, mask, grad_o, params.activation)
    gb, dm_b = _chain_backward(params.bwd, m[:, ::-1], trace.bwd,
                               None if mask is None else mask[:, ::-1], grad_o,
                               params.activation)
    return TrnnParams(gf, gb, params.activation), dm_f + dm_b[:, ::-1]
