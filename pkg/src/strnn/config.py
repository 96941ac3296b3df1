"""Plain-text ``key=value`` run configuration and the named profiles."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .graph import GridLayout, LayoutError, load_layout
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


# published network sizes; K follows from the layout, L from seq_len
PROFILES: dict[str, dict[str, object]] = {
    "seed": dict(layout="seed62", input_dim=5, srnn_hidden=30, srnn_out=30, k_proj=10,
                 trnn_hidden=30, seq_len=9, l_proj=5, classes=3),
    "ckplus": dict(layout="7x7", input_dim=512, srnn_hidden=50, srnn_out=50, k_proj=10,
                   trnn_hidden=150, seq_len=44, l_proj=5, classes=7),
    "tiny": dict(layout="3x3", input_dim=2, srnn_hidden=4, srnn_out=4, k_proj=2,
                 trnn_hidden=3, seq_len=2, l_proj=2, classes=3),
}


@dataclass(frozen=True)
class RunConfig:
    profile: str | None = None
    layout: str | None = None
    mode: str = "strnn"
    activation: str = "relu"
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    input_dim: int | None = None
    srnn_hidden: int = 8
    srnn_out: int = 8
    k_proj: int = 4
    trnn_hidden: int = 8
    seq_len: int | None = None
    l_proj: int = 3
    classes: int = 3
    learning_rate: float = 1e-2
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 10
    seed: int = 0
    grad_clip: float | None = 5.0

    def with_profile(self, name: str) -> "RunConfig":
        if name not in PROFILES:
            raise ConfigError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
        return replace(self, profile=name, **PROFILES[name])

    def resolve(self, data_dims: tuple[int, int, int, int] | None = None
                ) -> tuple[ModelConfig, GridLayout, TrainConfig]:
        """Build model/train configs; unset sizes are taken from (T, H, W, D)."""
        T = H = W = D = None
        if data_dims is not None:
            T, H, W, D = data_dims
        try:
            if self.layout is not None:
                layout = load_layout(self.layout)
            elif H is not None:
                layout = GridLayout.full(H, W)
            else:
                raise ConfigError("no layout given and no data to infer it from")
        except (LayoutError, OSError) as e:
            raise ConfigError(f"layout: {e}") from e
        seq_len = self.seq_len if self.seq_len is not None else T
        input_dim = self.input_dim if self.input_dim is not None else D
        if seq_len is None or input_dim is None:
            raise ConfigError("seq_len and input_dim must be set when there is no data")
        try:
            model = ModelConfig(
                input_dim=input_dim, srnn_hidden=self.srnn_hidden, srnn_out=self.srnn_out,
                k_proj=self.k_proj, trnn_hidden=self.trnn_hidden, seq_len=seq_len,
                l_proj=self.l_proj, classes=self.classes, activation=self.activation,
                mode=self.mode, lambda1=self.lambda1, lambda2=self.lambda2)
            train = TrainConfig(self.learning_rate, self.momentum, self.epochs,
                                self.batch_size, self.seed, self.grad_clip)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if data_dims is not None and (T, H, W, D) != (seq_len, layout.height,
                                                      layout.width, input_dim):
            raise ConfigError(
                f"data dims (T,H,W,D)={data_dims} do not match the configured "
                f"({seq_len},{layout.height},{layout.width},{input_dim})")
        return model, layout, train


_KINDS = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _KINDS[key]
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("none", ""):
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.split()[0]}") from None
    return raw


def parse_config(text: str, profile: str | None = None) -> RunConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment.

    The profile (``profile`` argument, else a ``profile`` line) is applied
    first so the other keys override it.
    """
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KINDS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        pairs.append((key, value))
    cfg = RunConfig()
    if profile is None:
        profile = next((v.strip() for k, v in pairs if k == "profile"), None)
    if profile is not None:
        cfg = cfg.with_profile(profile)
    overrides = {k: _convert(k, v) for k, v in pairs if k != "profile"}
    return replace(cfg, **overrides)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)
