"""EEG feature pipeline: framed power spectra, band differential entropy,
and sliding windows that turn band series into spatio-temporal volumes.

Differential entropy of a band is computed under a Gaussian assumption as
0.5 * ln(2*pi*e * P), where P is the mean power over the DFT bins whose
centre frequencies fall inside the band (inclusive bounds).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .graph import GridLayout

log = logging.getLogger(__name__)

FRAME_LEN = 256
DEFAULT_RATE = 256.0
POWER_FLOOR = 1e-12


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 < self.low_hz <= self.high_hz:
            raise ValueError(f"band {self.name}: need 0 < low <= high")


DEFAULT_BANDS = (
    BandSpec("delta", 1, 3),
    BandSpec("theta", 4, 7),
    BandSpec("alpha", 8, 13),
    BandSpec("beta", 14, 30),
    BandSpec("gamma", 31, 50),
)


def parse_bands(text: str) -> tuple[BandSpec, ...]:
    """``name:low-high,name:low-high,...`` -> band specs."""
    bands = []
    for item in text.split(","):
        name, _, rng = item.strip().partition(":")
        lo, _, hi = rng.partition("-")
        bands.append(BandSpec(name, float(lo), float(hi)))
    return tuple(bands)


def hanning(n: int = FRAME_LEN) -> np.ndarray:
    # 0.5 * (1 - cos(2*pi*k / (n - 1)))
    return np.hanning(n)


def stft_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"frame must hold {FRAME_LEN} samples, got shape {frame.shape}")
    spec = np.fft.rfft(hanning(FRAME_LEN) * frame)
    return spec.real ** 2 + spec.imag ** 2


def stft_power(x: np.ndarray) -> np.ndarray:
    """Non-overlapping Hanning-windowed power spectra, (frames, 129).

    Trailing samples that do not fill a frame are dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x) // FRAME_LEN
    frames = x[: n * FRAME_LEN].reshape(n, FRAME_LEN) * hanning(FRAME_LEN)
    spec = np.fft.rfft(frames, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def band_bins(band: BandSpec, rate: float = DEFAULT_RATE, n: int = FRAME_LEN) -> np.ndarray:
    if band.high_hz > rate / 2:
        raise ValueError(f"band {band.name} exceeds the Nyquist frequency {rate / 2} Hz")
    freqs = np.arange(n // 2 + 1) * rate / n
    idx = np.nonzero((freqs >= band.low_hz) & (freqs <= band.high_hz))[0]
    if idx.size == 0:
        raise ValueError(f"band {band.name} contains no DFT bin at {rate} Hz")
    return idx


def de_feature(power: np.ndarray, band: BandSpec, rate: float = DEFAULT_RATE) -> float:
    p = float(np.mean(np.asarray(power)[band_bins(band, rate)]))
    if p < POWER_FLOOR:
        log.warning("band %s has power %g; floored to %g", band.name, p, POWER_FLOOR)
        p = POWER_FLOOR
    return 0.5 * np.log(2 * np.pi * np.e * p)


@dataclass
class BandSeries:
    values: np.ndarray   # (channels, bands, steps)
    bands: tuple[BandSpec, ...]
    floored: int = 0     # band powers that hit the floor

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[2]


def band_series(raw: np.ndarray, rate: float = DEFAULT_RATE,
                bands: tuple[BandSpec, ...] = DEFAULT_BANDS) -> BandSeries:
    """(channels, samples) recording -> DE per channel, band and 1 s step."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    if rate != FRAME_LEN:
        # a 256-point frame must span one second
        raise ValueError(f"expected {FRAME_LEN} Hz input; decimate first (got {rate} Hz)")
    powers = np.stack([stft_power(ch) for ch in raw])  # (C, steps, bins)
    out = np.empty((raw.shape[0], len(bands), powers.shape[1]))
    floored = 0
    for b, band in enumerate(bands):
        p = powers[:, :, band_bins(band, rate)].mean(axis=2)
        low = p < POWER_FLOOR
        floored += int(low.sum())
        out[:, b] = 0.5 * np.log(2 * np.pi * np.e * np.where(low, POWER_FLOOR, p))
    if floored:
        log.warning("%d band powers floored to %g", floored, POWER_FLOOR)
    return BandSeries(out, tuple(bands), floored)


def decimate(raw: np.ndarray, factor: int) -> np.ndarray:
    """Integer-factor downsampling along the last axis with anti-alias filtering."""
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    if factor == 1:
        return np.asarray(raw, dtype=np.float64)
    return sps.decimate(np.asarray(raw, dtype=np.float64), factor, axis=-1, zero_phase=True)


def slice_windows(series: BandSeries, layout: GridLayout,
                  width: int = 9) -> tuple[np.ndarray, np.ndarray]:
    """Sliding windows of ``width`` steps, moved one step at a time.

    Channel c is placed on the c-th occupied cell in raster order. Returns
    volumes (count, width, H, W, bands) and the 0-based centre step of each
    window. Unoccupied cells hold zeros.
    """
    if series.channels != layout.cell_count:
        raise ValueError(f"{series.channels} channels but the layout has "
                         f"{layout.cell_count} occupied cells")
    D = series.values.shape[1]
    count = series.steps - width + 1
    if count <= 0:
        log.warning("series has %d steps, fewer than the window width %d",
                    series.steps, width)
        return np.zeros((0, width, layout.height, layout.width, D)), np.zeros(0, dtype=int)
    rows, cols = np.nonzero(layout.occupancy)
    grid = np.zeros((series.steps, layout.height, layout.width, D))
    grid[:, rows, cols, :] = series.values.transpose(2, 0, 1)
    vols = np.stack([grid[s:s + width] for s in range(count)])
    centres = np.arange(count) + width // 2
    return vols, centres
