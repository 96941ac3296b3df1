"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (divergence, gradient check over tolerance).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio
from .config import ConfigError, RunConfig, parse_config
from .dataio import CheckpointError, StvError, SyntheticSpec
from .features import DEFAULT_BANDS, band_series, decimate, parse_bands, slice_windows
from .graph import LayoutError, load_layout
from .model import MODES, StrnnModel
from .numerics import NonFiniteError, ShapeError, make_rng
from .training import TrainingDiverged, evaluate, grad_check, saliency, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_config(args) -> RunConfig:
    """Profile, then config-file keys, then command-line flags."""
    text = ""
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    cfg = parse_config(text, profile=getattr(args, "profile", None))
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    h, _, w = args.grid.partition("x")
    spec = SyntheticSpec(classes=args.classes, height=int(h), width=int(w), T=args.T,
                         D=args.D, samples=args.samples, spatial_signal=args.spatial,
                         temporal_signal=args.temporal, noise_sigma=args.noise,
                         active_cells=args.active_cells,
                         random_polarity=args.random_polarity, seed=args.seed or 0)
    stv, _ = dataio.gen_synthetic(spec)
    dataio.save_stv(args.out, stv.data, stv.labels)
    print(f"wrote {len(stv)} samples of (T,H,W,D)={stv.dims} to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    stv = dataio.load_stv(args.data)
    if stv.labels is None:
        raise StvError(f"{args.data} has no label block")
    model_cfg, layout, train_cfg = cfg.resolve(stv.dims)
    if stv.labels.size and stv.labels.max() >= model_cfg.classes:
        raise StvError(f"label {stv.labels.max()} out of range for {model_cfg.classes} classes")
    model = StrnnModel.init(model_cfg, layout, seed=train_cfg.seed)
    print("epoch\tdata_loss\tpenalty\ttrain_acc")
    trained, _ = train(model, stv.data, stv.labels, train_cfg,
                       on_epoch=lambda m: print(m.line(), flush=True))
    dataio.save_checkpoint(args.out, trained)
    print(f"saved checkpoint to {args.out}", file=sys.stderr)
    return EXIT_OK


def format_confusion(conf: np.ndarray) -> str:
    C = conf.shape[0]
    head = "true\\pred " + " ".join(f"{c + 1:>6d}" for c in range(C))
    rows = [f"{r + 1:>9d} " + " ".join(f"{v:>6d}" for v in conf[r]) for r in range(C)]
    return "\n".join([head] + rows)


def cmd_eval(args) -> int:
    model = dataio.load_checkpoint(args.checkpoint)
    stv = dataio.load_stv(args.data)
    if stv.labels is None:
        raise StvError(f"{args.data} has no label block")
    c = model.config
    want = (c.seq_len, model.layout.height, model.layout.width, c.input_dim)
    if stv.dims != want:
        raise ShapeError(f"data dims {stv.dims} do not match checkpoint {want}")
    if stv.labels.size and stv.labels.max() >= c.classes:
        raise StvError(f"label {stv.labels.max()} out of range for {c.classes} classes")
    ev = evaluate(model, stv.data, stv.labels)
    print(f"accuracy\t{ev.accuracy:.4f}")
    for k, acc in enumerate(ev.per_class()):
        print(f"class {k + 1}\t{acc:.4f}\t(n={int(ev.confusion[k].sum())})")
    print(format_confusion(ev.confusion))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _run_config(args)
    if cfg.profile is None and not args.config:
        cfg = cfg.with_profile("tiny")
    ok = True
    for act in ("relu", "sigmoid"):
        model_cfg, layout, _ = replace(cfg, activation=act).resolve()
        model = StrnnModel.init(model_cfg, layout, seed=cfg.seed)
        rng = make_rng(cfg.seed + 1)
        x = rng.normal(size=(args.samples, model_cfg.seq_len, layout.height, layout.width,
                             model_cfg.input_dim))
        y = rng.integers(0, model_cfg.classes, size=args.samples)
        report = grad_check(model, x, y, step=args.step)
        passed = report.passed(args.tol)
        ok &= passed
        print(f"[{act}] mode={model_cfg.mode} max_rel={report.max_rel_error:.3e} "
              f"tol={args.tol:g} {'PASS' if passed else 'FAIL'}")
        for line in report.lines():
            print("  " + line)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_extract(args) -> int:
    raw = dataio.load_stv(args.data)
    T, H, W, D = raw.dims
    if W != 1 or D != 1:
        raise StvError(f"raw EEG container must have W=1 and D=1, got W={W} D={D}")
    layout = load_layout(args.layout)
    bands = parse_bands(args.bands) if args.bands else DEFAULT_BANDS
    vols, labels = [], []
    for i in range(len(raw)):
        signal = decimate(raw.data[i, :, :, 0, 0].T, args.decimate)
        series = band_series(signal, args.rate / args.decimate, bands)
        v, _ = slice_windows(series, layout, args.width)
        vols.append(v)
        if raw.labels is not None:
            labels.append(np.full(len(v), raw.labels[i]))
    data = np.concatenate(vols) if vols else np.zeros((0, args.width, layout.height,
                                                       layout.width, len(bands)))
    dataio.save_stv(args.out, data, np.concatenate(labels) if labels else None)
    print(f"wrote {len(data)} volumes of (T,H,W,D)={data.shape[1:]} to {args.out}",
          file=sys.stderr)
    return EXIT_OK


def cmd_saliency(args) -> int:
    model = dataio.load_checkpoint(args.checkpoint)
    if args.layout is not None and load_layout(args.layout) != model.layout:
        raise LayoutError("layout does not match the checkpoint's layout")
    sal = saliency(model)
    for row in sal:
        print(" ".join("  .  " if np.isnan(v) else f"{v:5.3f}" for v in row))
    if args.out:
        lines = ["row,col,weight"]
        for i, j in model.layout.cells():
            lines.append(f"{i},{j},{sal[i, j]:.17g}")
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {len(lines) - 1} cells to {args.out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="strnn", description="Spatial-temporal RNN tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        sp.add_argument("--seed", type=int)
        if config:
            sp.add_argument("--config")
            sp.add_argument("--profile")
            sp.add_argument("--mode", choices=MODES)

    s = sub.add_parser("train", help="train a model on an STV file")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="accuracy and confusion matrix")
    common(s, config=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="compare BPTT gradients with finite differences")
    common(s)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--step", type=float, default=1e-4)
    s.add_argument("--samples", type=int, default=3)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("extract", help="raw EEG STV -> DE feature volumes")
    common(s, config=False)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--layout", default="seed62")
    s.add_argument("--bands", help="name:low-high,... (default: the five EEG bands)")
    s.add_argument("--width", type=int, default=9)
    s.add_argument("--rate", type=float, default=256.0)
    s.add_argument("--decimate", type=int, default=1)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("saliency", help="spatial weight map from a checkpoint")
    common(s, config=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--layout")
    s.add_argument("--out", help="CSV of per-cell weights")
    s.set_defaults(func=cmd_saliency)

    s = sub.add_parser("synth", help="write a labelled synthetic dataset")
    common(s, config=False)
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--grid", default="4x4")
    s.add_argument("--T", type=int, default=9)
    s.add_argument("--D", type=int, default=5)
    s.add_argument("--samples", type=int, default=30)
    s.add_argument("--spatial", type=float, default=1.0)
    s.add_argument("--temporal", type=float, default=1.0)
    s.add_argument("--noise", type=float, default=0.5)
    s.add_argument("--active-cells", type=int, default=3)
    s.add_argument("--random-polarity", action="store_true")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # argparse exits on --help and on usage errors
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StvError, CheckpointError, LayoutError, ShapeError, OSError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
