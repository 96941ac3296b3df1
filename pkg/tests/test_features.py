import math

import numpy as np
import pytest

from strnn.features import DEFAULT_BANDS, FRAME_LEN, BandSeries, BandSpec, band_bins, \
    band_series, de_feature, decimate, hanning, parse_bands, slice_windows, stft_frame, \
    stft_power
from strnn.graph import GridLayout, seed_layout_62
from strnn.numerics import make_rng


def full_power(half: np.ndarray) -> float:
    # rfft bins 1..N/2-1 stand for two conjugate bins each
    return float(half[0] + half[-1] + 2 * half[1:-1].sum())


def test_default_bands():
    assert [(b.name, b.low_hz, b.high_hz) for b in DEFAULT_BANDS] == [
        ("delta", 1, 3), ("theta", 4, 7), ("alpha", 8, 13), ("beta", 14, 30),
        ("gamma", 31, 50)]
    assert parse_bands("a:1-3, b:4-7") == (BandSpec("a", 1, 3), BandSpec("b", 4, 7))


def test_zero_signal_zero_spectrum():
    assert not stft_frame(np.zeros(FRAME_LEN)).any()


def test_sinusoid_main_lobe():
    k0 = 20
    n = np.arange(FRAME_LEN)
    p = stft_frame(np.cos(2 * np.pi * k0 * n / FRAME_LEN))
    assert int(np.argmax(p)) == k0
    # Hann window coefficients (1/2, -1/4, -1/4) give neighbours a quarter of
    # the peak amplitude ratio 1/2, i.e. a power ratio of 1/4
    assert p[k0 - 1] / p[k0] == pytest.approx(0.25, rel=0.03)
    assert p[k0 + 1] / p[k0] == pytest.approx(0.25, rel=0.03)
    far = np.delete(p, range(k0 - 2, k0 + 3))
    assert far.max() < 1e-3 * p[k0]


def test_parseval():
    x = make_rng(0).normal(size=FRAME_LEN)
    lhs = float(((hanning() * x) ** 2).sum())
    rhs = full_power(stft_frame(x)) / FRAME_LEN
    assert abs(lhs - rhs) / lhs < 1e-10


def test_frame_length_enforced():
    with pytest.raises(ValueError):
        stft_frame(np.zeros(100))
    assert stft_power(np.zeros(3 * FRAME_LEN + 7)).shape == (3, 129)


def test_de_examples():
    band = BandSpec("x", 4, 7)
    assert de_feature(np.full(129, 1 / (2 * np.pi * np.e)), band) == pytest.approx(0, abs=1e-15)
    p = make_rng(1).uniform(0.5, 2, size=129)
    assert abs(de_feature(4 * p, band) - de_feature(p, band) - math.log(2)) < 1e-10


def test_amplitude_doubling_through_spectrum():
    x = make_rng(2).normal(size=FRAME_LEN)
    for band in DEFAULT_BANDS:
        d = de_feature(stft_frame(2 * x), band) - de_feature(stft_frame(x), band)
        assert abs(d - math.log(2)) < 1e-10


@pytest.mark.parametrize("band", DEFAULT_BANDS, ids=lambda b: b.name)
def test_white_noise_de_matches_gaussian_entropy(band):
    x = make_rng(3).normal(size=1000 * FRAME_LEN)
    power = stft_power(x).mean(axis=0)
    # flat spectrum: expected bin power is sigma^2 * sum(w^2)
    sigma2 = float(x.var()) * float((hanning() ** 2).sum())
    assert abs(de_feature(power, band) - 0.5 * math.log(2 * math.pi * math.e * sigma2)) < 0.05


def test_band_limits():
    with pytest.raises(ValueError):
        band_bins(BandSpec("hi", 100, 140))
    assert band_bins(BandSpec("a", 8, 13)).tolist() == list(range(8, 14))


def test_band_series_shape_and_rate():
    raw = make_rng(4).normal(size=(3, 5 * FRAME_LEN))
    s = band_series(raw)
    assert s.values.shape == (3, 5, 5) and s.floored == 0
    with pytest.raises(ValueError):
        band_series(raw, rate=200)


def test_band_series_floors_silence(caplog):
    s = band_series(np.zeros((1, FRAME_LEN)))
    assert s.floored == 5
    assert np.allclose(s.values, 0.5 * math.log(2 * math.pi * math.e * 1e-12))


def test_decimate_keeps_low_frequency():
    t = np.arange(4000) / 1000.0
    x = np.sin(2 * np.pi * 5 * t)
    y = decimate(x, 4)
    assert y.shape == (1000,)
    assert np.abs(y[100:-100] - x[::4][100:-100]).max() < 0.02
    with pytest.raises(ValueError):
        decimate(x, 0)


def series(steps, channels=4, D=5, seed=0):
    v = make_rng(seed).normal(size=(channels, D, steps))
    return BandSeries(v, DEFAULT_BANDS[:D])


def test_slice_counts_and_centres():
    lay = GridLayout.full(2, 2)
    vols, centres = slice_windows(series(9), lay)
    assert vols.shape == (1, 9, 2, 2, 5) and centres.tolist() == [4]
    vols, centres = slice_windows(series(11), lay)
    # 0-based centres of 1-based steps 5, 6, 7
    assert len(vols) == 3 and centres.tolist() == [4, 5, 6]
    for steps in range(9, 40):
        assert len(slice_windows(series(steps), lay)[0]) == steps - 9 + 1


def test_slice_short_series_is_empty():
    vols, centres = slice_windows(series(5), GridLayout.full(2, 2))
    assert vols.shape[0] == 0 and centres.size == 0


def test_slice_placement_and_constant_series():
    lay = seed_layout_62()
    s = BandSeries(np.ones((62, 5, 12)) * np.arange(62)[:, None, None], DEFAULT_BANDS)
    vols, _ = slice_windows(s, lay)
    assert all(np.array_equal(vols[0], v) for v in vols)
    rows, cols = np.nonzero(lay.occupancy)
    assert vols[0, 0, rows[7], cols[7], 0] == 7
    assert not vols[0, 0][~lay.occupancy].any()
    with pytest.raises(ValueError):
        slice_windows(series(12, channels=61), lay)
