"""Binary dataset container (STV), checkpoints and the synthetic generator.

STV layout, all little-endian::

    b"STV1" | u32 T | u32 H | u32 W | u32 D | u32 count
    | count*T*H*W*D float32 payload | optional count u32 labels (0-based)

Labels are present exactly when the bytes after the payload number
``4 * count``.

Checkpoint layout::

    b"STRN" | u32 n | n bytes of "key=value" lines (UTF-8)
    | u32 blob count | per blob: u32 name length, name, u32 rows, u32 cols,
      rows*cols float64
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .graph import GridLayout
from .model import ModelConfig, StrnnModel
from .numerics import make_rng

STV_MAGIC = b"STV1"
CKPT_MAGIC = b"STRN"
_HEADER = struct.Struct("<4s5I")
MAX_STV_BYTES = 1 << 40


class StvError(ValueError):
    code = "stv_error"


class BadMagic(StvError):
    code = "bad_magic"


class Truncated(StvError):
    code = "truncated"


class DimOverflow(StvError):
    code = "dim_overflow"


class BadLabels(StvError):
    code = "bad_labels"


class CheckpointError(ValueError):
    pass


@dataclass
class StvFile:
    data: np.ndarray                # (count, T, H, W, D) float64
    labels: np.ndarray | None = None  # (count,) int64

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape[1:])  # type: ignore[return-value]

    def __len__(self):
        return len(self.data)


def encode_stv(data: np.ndarray, labels: np.ndarray | None = None) -> bytes:
    data = np.asarray(data)
    if data.ndim != 5:
        raise ValueError(f"expected (count, T, H, W, D) data, got shape {data.shape}")
    count, T, H, W, D = data.shape
    parts = [_HEADER.pack(STV_MAGIC, T, H, W, D, count),
             np.ascontiguousarray(data, dtype="<f4").tobytes()]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (count,):
            raise ValueError(f"expected {count} labels, got shape {labels.shape}")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        parts.append(labels.astype("<u4").tobytes())
    return b"".join(parts)


def decode_stv(buf: bytes) -> StvFile:
    if len(buf) < 4 or buf[:4] != STV_MAGIC:
        raise BadMagic("not an STV file (bad magic)")
    if len(buf) < _HEADER.size:
        raise Truncated(f"header needs {_HEADER.size} bytes, file has {len(buf)}")
    _, T, H, W, D, count = _HEADER.unpack_from(buf)
    per_sample = T * H * W * D
    if per_sample == 0 and count:
        raise DimOverflow(f"zero dimension in T,H,W,D = {T},{H},{W},{D}")
    payload = per_sample * count * 4
    if payload > MAX_STV_BYTES:
        raise DimOverflow(f"header declares {payload} payload bytes (limit {MAX_STV_BYTES})")
    rest = len(buf) - _HEADER.size
    if rest < payload:
        raise Truncated(f"payload needs {payload} bytes, file has {rest}")
    data = np.frombuffer(buf, dtype="<f4", count=per_sample * count, offset=_HEADER.size)
    data = data.astype(np.float64).reshape(count, T, H, W, D)
    tail = rest - payload
    if tail == 0:
        return StvFile(data)
    if tail != 4 * count:
        raise Truncated(f"label block should be {4 * count} bytes, found {tail}")
    labels = np.frombuffer(buf, dtype="<u4", count=count, offset=_HEADER.size + payload)
    return StvFile(data, labels.astype(np.int64))


def save_stv(path, data: np.ndarray, labels: np.ndarray | None = None) -> None:
    Path(path).write_bytes(encode_stv(data, labels))


def load_stv(path, classes: int | None = None) -> StvFile:
    stv = decode_stv(Path(path).read_bytes())
    if classes is not None and stv.labels is not None and stv.labels.size \
            and stv.labels.max() >= classes:
        raise BadLabels(f"label {stv.labels.max()} out of range for {classes} classes")
    return stv


# -- checkpoints -------------------------------------------------------------

def _config_text(config: ModelConfig) -> str:
    return "".join(f"{f.name}={getattr(config, f.name)!r}\n" for f in fields(ModelConfig))


def _parse_config(text: str) -> ModelConfig:
    kinds = {f.name: f.type for f in fields(ModelConfig)}
    values = {}
    for line in text.splitlines():
        if not line:
            continue
        key, _, raw = line.partition("=")
        if key not in kinds:
            raise CheckpointError(f"unknown config key {key!r} in checkpoint")
        kind = kinds[key]
        if kind in ("int", int):
            values[key] = int(raw)
        elif kind in ("float", float):
            values[key] = float(raw)
        else:
            values[key] = raw.strip("'\"")
    return ModelConfig(**values)


def _blob(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    rows, cols = (arr.shape if arr.ndim == 2 else (arr.size, 1))
    nb = name.encode()
    return (struct.pack("<I", len(nb)) + nb + struct.pack("<II", rows, cols)
            + arr.astype("<f8").tobytes())


def encode_checkpoint(model: StrnnModel) -> bytes:
    cfg = _config_text(model.config).encode()
    blobs = [_blob("layout", model.layout.occupancy.astype(np.float64))]
    blobs += [_blob(k, model.params[k]) for k in sorted(model.params)]
    return b"".join([CKPT_MAGIC, struct.pack("<I", len(cfg)), cfg,
                     struct.pack("<I", len(blobs))] + blobs)


def decode_checkpoint(buf: bytes) -> StrnnModel:
    if buf[:4] != CKPT_MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("checkpoint is truncated")
        out = buf[pos:pos + n]
        pos += n
        return out

    (n,) = struct.unpack("<I", take(4))
    config = _parse_config(take(n).decode())
    (nblobs,) = struct.unpack("<I", take(4))
    blobs = {}
    for _ in range(nblobs):
        (ln,) = struct.unpack("<I", take(4))
        name = take(ln).decode()
        rows, cols = struct.unpack("<II", take(8))
        blobs[name] = np.frombuffer(take(8 * rows * cols), dtype="<f8").astype(
            np.float64).reshape(rows, cols)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    if "layout" not in blobs:
        raise CheckpointError("checkpoint has no layout")
    occ = blobs.pop("layout")
    layout = GridLayout(occ.shape[0], occ.shape[1], occ != 0)
    shapes = StrnnModel.init(config, layout).param_shapes()
    if set(blobs) != set(shapes):
        raise CheckpointError(f"checkpoint tensors {sorted(blobs)} do not match the "
                              f"configured model {sorted(shapes)}")
    params = {}
    for name, shape in shapes.items():
        b = blobs[name]
        if b.size != int(np.prod(shape)) or b.shape[0] != shape[0]:
            raise CheckpointError(f"{name}: stored {b.shape}, expected {shape}")
        params[name] = b.reshape(shape).copy()
    return StrnnModel(config, layout, params)


def save_checkpoint(path, model: StrnnModel) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def load_checkpoint(path) -> StrnnModel:
    return decode_checkpoint(Path(path).read_bytes())


# -- synthetic data ----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 3
    height: int = 4
    width: int = 4
    T: int = 9
    D: int = 5
    samples: int = 30
    spatial_signal: float = 1.0
    temporal_signal: float = 1.0
    noise_sigma: float = 0.5
    active_cells: int = 3
    random_polarity: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")


@dataclass
class SyntheticTruth:
    templates: np.ndarray  # (C, H, W, D)
    envelopes: np.ndarray  # (C, T)
    direction: np.ndarray  # (D,) feature direction carrying the temporal signal


def class_means(spec: SyntheticSpec, truth: SyntheticTruth) -> np.ndarray:
    """Noise-free volume of every class, (C, T, H, W, D)."""
    occ = np.ones((spec.height, spec.width))
    spatial = spec.spatial_signal * truth.templates[:, None]
    temporal = (spec.temporal_signal * truth.envelopes[:, :, None, None, None]
                * occ[None, None, :, :, None] * truth.direction)
    return spatial + temporal


def gen_synthetic(spec: SyntheticSpec) -> tuple[StvFile, SyntheticTruth]:
    """Labelled volumes whose classes differ in space and/or time.

    Each class owns a sparse spatial template (``active_cells`` cells with a
    random feature vector each, constant over time) and a temporal envelope
    sin(2*pi*t/T + 2*pi*c/C) applied to every cell along one shared feature
    direction. The envelope sums to zero over time, so a time average only
    sees the spatial part. Gaussian noise is added to every entry.

    With ``random_polarity`` every active cell of every sample gets an
    independent random sign (fixed over time). The class is then carried by
    the magnitude pattern only, which a per-slice linear map cannot extract.
    """
    rng = make_rng(spec.seed)
    C, H, W, T, D = spec.classes, spec.height, spec.width, spec.T, spec.D
    K = H * W
    templates = np.zeros((C, H, W, D))
    for c in range(C):
        cells = rng.choice(K, size=min(spec.active_cells, K), replace=False)
        for k in cells:
            v = rng.normal(size=D)
            templates[c, k // W, k % W] = v / np.linalg.norm(v)
    t = np.arange(T)
    envelopes = np.stack([np.sin(2 * np.pi * t / T + 2 * np.pi * c / C) for c in range(C)])
    u = rng.normal(size=D)
    truth = SyntheticTruth(templates, envelopes, u / np.linalg.norm(u))

    labels = rng.permutation(np.arange(spec.samples) % C)
    data = class_means(spec, truth)[labels]
    if spec.random_polarity:
        signs = rng.choice([-1.0, 1.0], size=(spec.samples, 1, H, W, 1))
        spatial = spec.spatial_signal * truth.templates[labels][:, None]
        data = data + (signs - 1.0) * spatial
    data = data + spec.noise_sigma * rng.normal(size=(spec.samples, T, H, W, D))
    # the container stores float32; keep memory and disk identical
    data = data.astype(np.float32).astype(np.float64)
    return StvFile(data, labels.astype(np.int64)), truth


def pad_or_truncate(volumes: list[np.ndarray], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Fit variable-length (T_i, H, W, D) volumes to a fixed length.

    Missing slices are zero vectors; the returned mask (N, length) is 1 for
    real slices and 0 for padding.
    """
    if not volumes:
        raise ValueError("no volumes")
    shape = volumes[0].shape[1:]
    out = np.zeros((len(volumes), length) + shape)
    mask = np.zeros((len(volumes), length))
    for i, v in enumerate(volumes):
        if v.shape[1:] != shape:
            raise ValueError(f"volume {i} has slice shape {v.shape[1:]}, expected {shape}")
        n = min(len(v), length)
        out[i, :n] = v[:n]
        mask[i, :n] = 1.0
    return out, mask
