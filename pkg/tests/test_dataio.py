import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strnn.dataio import BadLabels, BadMagic, CheckpointError, DimOverflow, SyntheticSpec, \
    Truncated, class_means, decode_checkpoint, decode_stv, encode_checkpoint, encode_stv, \
    gen_synthetic, load_checkpoint, load_stv, pad_or_truncate, save_checkpoint, save_stv
from strnn.graph import GridLayout
from strnn.model import MODES, ModelConfig, StrnnModel
from strnn.numerics import make_rng
from strnn.training import evaluate


def test_empty_file_is_bad_magic():
    with pytest.raises(BadMagic, match="bad magic"):
        decode_stv(b"")
    with pytest.raises(BadMagic):
        decode_stv(b"NOPE" + bytes(40))


def test_single_value_layout():
    data = np.full((1, 1, 1, 1, 1), 2.5)
    raw = encode_stv(data)
    assert len(raw) == 4 + 20 + 4
    assert raw[:4] == b"STV1"
    assert struct.unpack("<5I", raw[4:24]) == (1, 1, 1, 1, 1)
    assert struct.unpack("<f", raw[24:]) == (2.5,)
    labelled = encode_stv(data, [2])
    assert len(labelled) == 32
    back = decode_stv(labelled)
    assert back.data.tolist() == [[[[[2.5]]]]] and back.labels.tolist() == [2]
    assert decode_stv(raw).labels is None


def test_round_trip_thousand_samples(tmp_path):
    data = make_rng(0).normal(size=(1000, 2, 3, 3, 2)).astype(np.float32)
    labels = make_rng(1).integers(0, 7, size=1000)
    save_stv(tmp_path / "x.stv", data, labels)
    back = load_stv(tmp_path / "x.stv")
    assert back.data.astype(np.float32).tobytes() == data.tobytes()
    assert np.array_equal(back.labels, labels)
    assert encode_stv(back.data, back.labels) == (tmp_path / "x.stv").read_bytes()


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 4), st.booleans())
@settings(max_examples=40)
def test_round_trip_property(T, H, W, D, n, with_labels):
    data = make_rng(n).normal(size=(n, T, H, W, D)).astype(np.float32)
    labels = np.arange(n) % 3 if with_labels else None
    back = decode_stv(encode_stv(data, labels))
    assert back.data.astype(np.float32).tobytes() == data.tobytes()
    assert (back.labels is None) == (labels is None or n == 0)


def test_truncation_detected_everywhere():
    raw = encode_stv(np.ones((2, 1, 2, 2, 1)), [0, 1])
    for cut in range(4, len(raw)):
        if cut == len(raw) - 8:
            continue  # a complete unlabelled file
        with pytest.raises(Truncated):
            decode_stv(raw[:cut])


def test_dimension_overflow():
    big = b"STV1" + struct.pack("<5I", 2**31, 2**31, 1, 1, 4)
    with pytest.raises(DimOverflow):
        decode_stv(big)
    with pytest.raises(DimOverflow):
        decode_stv(b"STV1" + struct.pack("<5I", 0, 1, 1, 1, 1))


def test_label_range_checked(tmp_path):
    save_stv(tmp_path / "x.stv", np.zeros((2, 1, 1, 1, 1)), [0, 5])
    with pytest.raises(BadLabels):
        load_stv(tmp_path / "x.stv", classes=3)
    assert load_stv(tmp_path / "x.stv", classes=6).labels.tolist() == [0, 5]


@pytest.mark.parametrize("mode", MODES)
def test_checkpoint_round_trip(tmp_path, mode):
    occ = np.ones((3, 3), bool)
    occ[0, 2] = False
    cfg = ModelConfig(mode=mode, activation="sigmoid", seq_len=2, input_dim=2, lambda1=0.25)
    m = StrnnModel.init(cfg, GridLayout(3, 3, occ), seed=4)
    save_checkpoint(tmp_path / "m.ckpt", m)
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == m.config and back.layout == m.layout
    assert all(back.params[k].tobytes() == m.params[k].tobytes() for k in m.params)
    X = make_rng(0).normal(size=(12, 2, 3, 3, 2))
    y = np.arange(12) % 3
    a, b = evaluate(m, X, y), evaluate(back, X, y)
    assert a.accuracy == b.accuracy and np.array_equal(a.confusion, b.confusion)
    assert encode_checkpoint(back) == encode_checkpoint(m)


def test_checkpoint_errors():
    raw = encode_checkpoint(StrnnModel.init(ModelConfig(), GridLayout.full(2, 2)))
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX" + raw[4:])
    for cut in (3, 10, len(raw) // 2, len(raw) - 1):
        with pytest.raises(CheckpointError):
            decode_checkpoint(raw[:cut])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw + b"\0")


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(samples=20, seed=11)
    a, _ = gen_synthetic(spec)
    b, _ = gen_synthetic(spec)
    assert encode_stv(a.data, a.labels) == encode_stv(b.data, b.labels)
    c, _ = gen_synthetic(SyntheticSpec(samples=20, seed=12))
    assert encode_stv(c.data, c.labels) != encode_stv(a.data, a.labels)


@pytest.mark.parametrize("n,C", [(30, 3), (31, 3), (20, 7), (5, 2)])
def test_synthetic_class_balance(n, C):
    stv, _ = gen_synthetic(SyntheticSpec(samples=n, classes=C))
    counts = np.bincount(stv.labels, minlength=C)
    assert counts.max() - counts.min() <= 1


@pytest.mark.parametrize("temporal", [0.0, 1.0])
def test_noise_free_nearest_template_is_perfect(temporal):
    spec = SyntheticSpec(samples=60, noise_sigma=0.0, temporal_signal=temporal, seed=3)
    stv, truth = gen_synthetic(spec)
    means = class_means(spec, truth)
    d = ((stv.data[:, None] - means[None]) ** 2).reshape(60, spec.classes, -1).sum(axis=2)
    assert np.array_equal(d.argmin(axis=1), stv.labels)


def test_spatial_only_classes_share_time_course():
    spec = SyntheticSpec(samples=9, noise_sigma=0.0, spatial_signal=0.0, seed=1)
    stv, truth = gen_synthetic(spec)
    # time average removes the zero-sum envelopes
    assert np.allclose(stv.data.mean(axis=1), 0, atol=1e-6)
    assert np.allclose(truth.envelopes.sum(axis=1), 0, atol=1e-12)


def test_pad_or_truncate():
    vols = [np.ones((3, 1, 1, 2)), np.ones((6, 1, 1, 2))]
    out, mask = pad_or_truncate(vols, 4)
    assert out.shape == (2, 4, 1, 1, 2)
    assert mask.tolist() == [[1, 1, 1, 0], [1, 1, 1, 1]]
    assert not out[0, 3].any()
    with pytest.raises(ValueError):
        pad_or_truncate([np.ones((3, 1, 1, 2)), np.ones((3, 1, 2, 2))], 4)
