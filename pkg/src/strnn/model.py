"""The full network: SRNN -> TRNN -> softmax, plus the ablation variants.

Parameters live in one flat ``{name: ndarray}`` dict so the optimizer,
gradient checker and checkpoint code can treat them uniformly. Layer
parameter objects are built as views onto that dict.

Modes
-----
strnn       SRNN then TRNN, both projections L1-penalised.
non_sparse  same network, penalties forced to zero.
srnn_only   SRNN, then the slice outputs are averaged over time and mapped
            to class scores by one affine layer.
trnn_only   each slice is flattened over occupied cells and mapped by one
            affine layer, then TRNN.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .graph import DIRECTIONS, GridLayout, TraversalPlan, build_plans
from .loss import LossConfig, LossTerms, l1_penalty, objective_grad, objective_terms, softmax
from .numerics import ACTIVATIONS, ShapeError, glorot_uniform, make_rng
from .srnn import DirectionWeights, SrnnParams, SrnnTrace, gather_cells, init_srnn, \
    srnn_backward, srnn_forward
from .trnn import ChainWeights, TrnnParams, TrnnTrace, init_trnn, trnn_backward, \
    trnn_forward

MODES = ("strnn", "srnn_only", "trnn_only", "non_sparse")
SRNN_KEYS = ("U", "W", "b", "G", "V")
TRNN_KEYS = ("W_ih", "W_hh", "b", "G", "V")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 5
    srnn_hidden: int = 8
    srnn_out: int = 8
    k_proj: int = 4
    trnn_hidden: int = 8
    seq_len: int = 9
    l_proj: int = 3
    classes: int = 3
    activation: str = "relu"
    mode: str = "strnn"
    lambda1: float = 1e-3
    lambda2: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for name in ("input_dim", "srnn_hidden", "srnn_out", "k_proj", "trnn_hidden",
                     "seq_len", "l_proj"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        LossConfig(self.lambda1, self.lambda2, self.classes)

    @property
    def uses_srnn(self) -> bool:
        return self.mode != "trnn_only"

    @property
    def uses_trnn(self) -> bool:
        return self.mode != "srnn_only"

    def loss_config(self) -> LossConfig:
        if self.mode == "non_sparse":
            return LossConfig(0.0, 0.0, self.classes)
        return LossConfig(self.lambda1, self.lambda2, self.classes)


@dataclass
class ForwardTrace:
    srnn: SrnnTrace | None
    flat: np.ndarray | None   # trnn_only: flattened slices (B, T, K*D)
    m: np.ndarray             # (B, T, srnn_out)
    trnn: TrnnTrace | None
    logits: np.ndarray
    probs: np.ndarray


class StrnnModel:
    def __init__(self, config: ModelConfig, layout: GridLayout,
                 params: dict[str, np.ndarray]):
        self.config = config
        self.layout = layout
        self.plans: tuple[TraversalPlan, ...] = build_plans(layout)
        self.params = params
        expected = self.param_shapes()
        if set(params) != set(expected):
            raise ShapeError(f"parameter names {sorted(params)} != {sorted(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"{name} has shape {params[name].shape}, expected {shape}")

    @classmethod
    def init(cls, config: ModelConfig, layout: GridLayout, seed: int = 0) -> "StrnnModel":
        rng = make_rng(seed)
        c = config
        K = layout.cell_count
        params: dict[str, np.ndarray] = {}
        if c.uses_srnn:
            sp = init_srnn(rng, K, c.input_dim, c.srnn_hidden, c.k_proj, c.srnn_out,
                           c.activation)
            for d in DIRECTIONS:
                for k in SRNN_KEYS:
                    params[f"srnn.{d.short}.{k}"] = getattr(sp.weights[d], k)
        else:
            params["embed.W"] = glorot_uniform(rng, c.srnn_out, K * c.input_dim)
            params["embed.b"] = np.zeros(c.srnn_out)
        if c.uses_trnn:
            tp = init_trnn(rng, c.srnn_out, c.trnn_hidden, c.seq_len, c.l_proj,
                           c.classes, c.activation)
            for tag, chain in (("f", tp.fwd), ("b", tp.bwd)):
                for k in TRNN_KEYS:
                    params[f"trnn.{tag}.{k}"] = getattr(chain, k)
        else:
            params["head.W"] = glorot_uniform(rng, c.classes, c.srnn_out)
            params["head.b"] = np.zeros(c.classes)
        return cls(config, layout, params)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        K = self.layout.cell_count
        shapes: dict[str, tuple[int, ...]] = {}
        if c.uses_srnn:
            h = c.srnn_hidden
            for d in DIRECTIONS:
                shapes.update({
                    f"srnn.{d.short}.U": (h, c.input_dim),
                    f"srnn.{d.short}.W": (h, h),
                    f"srnn.{d.short}.b": (h,),
                    f"srnn.{d.short}.G": (K, c.k_proj),
                    f"srnn.{d.short}.V": (c.srnn_out, h * c.k_proj),
                })
        else:
            shapes["embed.W"] = (c.srnn_out, K * c.input_dim)
            shapes["embed.b"] = (c.srnn_out,)
        if c.uses_trnn:
            h = c.trnn_hidden
            for tag in ("f", "b"):
                shapes.update({
                    f"trnn.{tag}.W_ih": (h, c.srnn_out),
                    f"trnn.{tag}.W_hh": (h, h),
                    f"trnn.{tag}.b": (h,),
                    f"trnn.{tag}.G": (c.seq_len, c.l_proj),
                    f"trnn.{tag}.V": (c.classes, h * c.l_proj),
                })
        else:
            shapes["head.W"] = (c.classes, c.srnn_out)
            shapes["head.b"] = (c.classes,)
        return shapes

    def srnn_params(self) -> SrnnParams:
        p = self.params
        return SrnnParams({d: DirectionWeights(*(p[f"srnn.{d.short}.{k}"] for k in SRNN_KEYS))
                           for d in DIRECTIONS}, self.config.activation)

    def trnn_params(self) -> TrnnParams:
        p = self.params
        f = ChainWeights(*(p[f"trnn.f.{k}"] for k in TRNN_KEYS))
        b = ChainWeights(*(p[f"trnn.b.{k}"] for k in TRNN_KEYS))
        return TrnnParams(f, b, self.config.activation)

    def spatial_projection_names(self) -> list[str]:
        if not self.config.uses_srnn:
            return []
        return [f"srnn.{d.short}.G" for d in DIRECTIONS]

    def temporal_projection_names(self) -> list[str]:
        if not self.config.uses_trnn:
            return []
        return ["trnn.f.G", "trnn.b.G"]

    def penalty(self) -> float:
        p = self.params
        return l1_penalty([p[n] for n in self.spatial_projection_names()],
                          [p[n] for n in self.temporal_projection_names()],
                          self.config.loss_config())

    def copy(self) -> "StrnnModel":
        return StrnnModel(self.config, self.layout,
                          {k: v.copy() for k, v in self.params.items()})

    def with_config(self, **changes) -> "StrnnModel":
        return StrnnModel(replace(self.config, **changes), self.layout, self.params)

    def config_dict(self) -> dict:
        return asdict(self.config)

    def _check_volume(self, volumes: np.ndarray) -> np.ndarray:
        volumes = np.asarray(volumes, dtype=np.float64)
        c = self.config
        expected = (c.seq_len, self.layout.height, self.layout.width, c.input_dim)
        if volumes.ndim != 5 or volumes.shape[1:] != expected:
            raise ShapeError(f"volumes shape {volumes.shape} does not match "
                             f"(B, T, H, W, D) = (B, {', '.join(map(str, expected))})")
        return volumes

    def forward(self, volumes: np.ndarray, mask: np.ndarray | None = None) -> ForwardTrace:
        volumes = self._check_volume(volumes)
        srnn_tr = flat = trnn_tr = None
        if self.config.uses_srnn:
            srnn_tr = srnn_forward(self.srnn_params(), self.plans, volumes, self.layout)
            m = srnn_tr.output
        else:
            cells = gather_cells(volumes, self.layout)
            flat = cells.reshape(cells.shape[0], cells.shape[1], -1)
            m = flat @ self.params["embed.W"].T + self.params["embed.b"]
        if self.config.uses_trnn:
            trnn_tr = trnn_forward(self.trnn_params(), m, mask)
            logits = trnn_tr.logits
        else:
            if mask is None:
                avg = m.mean(axis=1)
            else:
                w = np.asarray(mask, dtype=np.float64)
                avg = (m * w[:, :, None]).sum(axis=1) / w.sum(axis=1, keepdims=True)
            logits = avg @ self.params["head.W"].T + self.params["head.b"]
        return ForwardTrace(srnn_tr, flat, m, trnn_tr, logits, softmax(logits))

    def predict(self, volumes: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return self.forward(volumes, mask).probs.argmax(axis=1)

    def loss(self, volumes, labels, mask=None) -> LossTerms:
        tr = self.forward(volumes, mask)
        return self._terms(tr, labels)

    def _terms(self, tr: ForwardTrace, labels) -> LossTerms:
        p = self.params
        return objective_terms(tr.probs, labels,
                               [p[n] for n in self.spatial_projection_names()],
                               [p[n] for n in self.temporal_projection_names()],
                               self.config.loss_config())

    def loss_and_grads(self, volumes, labels, mask=None):
        """Objective terms, gradients for every parameter, and the forward trace."""
        tr = self.forward(volumes, mask)
        terms = self._terms(tr, labels)
        p = self.params
        sp_names = self.spatial_projection_names()
        tp_names = self.temporal_projection_names()
        d_logits, d_sp, d_tp = objective_grad(tr.probs, labels, [p[n] for n in sp_names],
                                              [p[n] for n in tp_names],
                                              self.config.loss_config())
        grads: dict[str, np.ndarray] = {}
        if self.config.uses_trnn:
            tg, dm = trnn_backward(self.trnn_params(), tr.m, tr.trnn, d_logits)
            for tag, chain in (("f", tg.fwd), ("b", tg.bwd)):
                for k in TRNN_KEYS:
                    grads[f"trnn.{tag}.{k}"] = getattr(chain, k)
        else:
            T = tr.m.shape[1]
            if mask is None:
                w = np.full(tr.m.shape[:2], 1.0 / T)
            else:
                w = np.asarray(mask, dtype=np.float64)
                w = w / w.sum(axis=1, keepdims=True)
            avg = (tr.m * w[:, :, None]).sum(axis=1)
            grads["head.W"] = d_logits.T @ avg
            grads["head.b"] = d_logits.sum(axis=0)
            dm = (d_logits @ p["head.W"])[:, None, :] * w[:, :, None]
        if self.config.uses_srnn:
            sg = srnn_backward(self.srnn_params(), self.plans, tr.srnn, dm)
            for d in DIRECTIONS:
                for k in SRNN_KEYS:
                    grads[f"srnn.{d.short}.{k}"] = getattr(sg.weights[d], k)
        else:
            flat = tr.flat.reshape(-1, tr.flat.shape[-1])
            dm2 = dm.reshape(-1, dm.shape[-1])
            grads["embed.W"] = dm2.T @ flat
            grads["embed.b"] = dm2.sum(axis=0)
        for n, g in zip(sp_names, d_sp):
            grads[n] = grads[n] + g
        for n, g in zip(tp_names, d_tp):
            grads[n] = grads[n] + g
        return terms, grads, tr
