"""Power spectral density estimation and band-power feature extraction.

Welch's method with a Hann window is used throughout. The one-sided
density is scaled so that its integral over [0, fs/2] matches the mean
power of the analyzed signal, which makes band powers over a partition
of the spectrum add up to the total.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .errors import BandOutOfRange, SegmentTooShort
from .signal import EegSegment

log = logging.getLogger(__name__)

DEFAULT_WINDOW_LEN = 512   # 2 s at 256 Hz
MIN_WINDOW_LEN = 128
DEFAULT_OVERLAP = 0.5

# A power value of exactly zero would make the log transform blow up.
LOG_FLOOR = 1e-20


@dataclass(frozen=True)
class BandDef:
    """Half-open frequency band [lo_hz, hi_hz)."""

    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not (0.0 <= self.lo_hz < self.hi_hz):
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo_hz}, {self.hi_hz})")


# The 12-13 Hz sliver between alpha and beta belongs to no band, and
# gamma is capped at the bandpass upper edge.
DEFAULT_BANDS = (
    BandDef("theta", 4.0, 8.0),
    BandDef("alpha", 8.0, 12.0),
    BandDef("beta", 13.0, 30.0),
    BandDef("gamma", 30.0, 80.0),
)


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray      # strictly increasing, 0 .. fs/2
    power: np.ndarray      # one-sided density, >= 0
    window_len: int
    n_averages: int

    def __post_init__(self):
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must align")
        if self.n_averages < 1:
            raise ValueError("n_averages must be >= 1")

    @property
    def resolution_hz(self):
        return float(self.freqs[1] - self.freqs[0])


@dataclass(frozen=True)
class BandPowerFeatures:
    """Band powers for one segment, keyed by (channel, band name)."""

    channel_names: tuple
    band_names: tuple
    values: dict  # (channel, band) -> float, all >= 0

    def vector(self, log10: bool = True) -> np.ndarray:
        """Flatten to channel-major, band-minor order.

        The log10 transform (default on) compresses the heavy-tailed
        power distribution before the values reach a classifier.
        """
        raw = np.array(
            [self.values[(ch, b)] for ch in self.channel_names
             for b in self.band_names],
            dtype=np.float64,
        )
        if log10:
            return np.log10(np.maximum(raw, LOG_FLOOR))
        return raw

    def names(self) -> list:
        return [f"{ch}_{b}" for ch in self.channel_names for b in self.band_names]


def effective_window_len(n_samples: int, preferred: int = DEFAULT_WINDOW_LEN,
                         floor: int = MIN_WINDOW_LEN) -> int:
    """Shrink the analysis window to fit a short segment.

    Returns ``preferred`` when the segment is long enough, otherwise
    the largest power of two that fits. Segments shorter than ``floor``
    cannot be analyzed.
    """
    if n_samples < floor:
        raise SegmentTooShort(f"{n_samples} samples; need at least {floor}")
    if n_samples >= preferred:
        return preferred
    return 2 ** int(math.floor(math.log2(n_samples)))


def welch_psd(x: np.ndarray, fs: float, window_len: int = DEFAULT_WINDOW_LEN,
              overlap_frac: float = DEFAULT_OVERLAP) -> PsdEstimate:
    """Estimate the one-sided PSD of a 1-D signal.

    Hann-windowed periodograms over segments of ``window_len`` samples
    (50% overlap by default) are averaged; scaling is chosen so that
    the trapezoidal integral of the density over [0, fs/2] estimates
    the signal's mean power. Frequency resolution is fs / window_len.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("welch_psd expects a 1-D signal")
    if window_len % 2 != 0 or window_len < 2:
        raise ValueError("window_len must be a positive even number")
    if not (0.0 <= overlap_frac < 1.0):
        raise ValueError("overlap_frac must be in [0, 1)")
    if x.size < window_len:
        raise SegmentTooShort(f"{x.size} samples < window of {window_len}")

    noverlap = int(round(overlap_frac * window_len))
    freqs, power = welch(
        x, fs=fs, window="hann", nperseg=window_len, noverlap=noverlap,
        detrend=False, return_onesided=True, scaling="density",
    )
    step = window_len - noverlap
    n_averages = 1 + (x.size - window_len) // step
    return PsdEstimate(
        freqs=freqs,
        power=np.maximum(power, 0.0),
        window_len=window_len,
        n_averages=int(n_averages),
    )


def band_power(psd: PsdEstimate, band: BandDef) -> float:
    """Integrate the density over [lo_hz, hi_hz).

    The piecewise-linear density is integrated exactly between the
    band edges (trapezoidal rule with interpolated endpoints), so band
    powers over a partition of the spectrum sum to the total power.
    """
    f = psd.freqs
    if band.lo_hz < f[0] or band.hi_hz > f[-1] + 1e-12:
        raise BandOutOfRange(
            f"band [{band.lo_hz}, {band.hi_hz}) outside [{f[0]}, {f[-1]}]"
        )
    inner = f[(f > band.lo_hz) & (f < band.hi_hz)]
    grid = np.concatenate(([band.lo_hz], inner, [min(band.hi_hz, f[-1])]))
    dens = np.interp(grid, f, psd.power)
    return float(np.trapezoid(dens, grid))


def extract_features(segment: EegSegment, bands=DEFAULT_BANDS,
                     window_len: int = DEFAULT_WINDOW_LEN,
                     overlap_frac: float = DEFAULT_OVERLAP) -> BandPowerFeatures:
    """Compute per-channel band powers for one sentence segment.

    The analysis window auto-shrinks on short segments (see
    effective_window_len); with four channels and the default bands
    this yields 16 features per segment.
    """
    n = segment.samples.shape[0]
    win = effective_window_len(n, preferred=window_len)
    if win != window_len:
        log.debug("segment %s/%s: window shrunk to %d samples",
                  segment.spec.passage_id, segment.spec.sentence_id, win)
    values = {}
    for ci, ch in enumerate(segment.channel_names):
        psd = welch_psd(segment.samples[:, ci], float(segment.sample_rate_hz),
                        window_len=win, overlap_frac=overlap_frac)
        for band in bands:
            values[(ch, band.name)] = band_power(psd, band)
    return BandPowerFeatures(
        channel_names=tuple(segment.channel_names),
        band_names=tuple(b.name for b in bands),
        values=values,
    )
