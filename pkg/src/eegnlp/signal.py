"""Raw EEG handling: loading, normalization, filtering, artifact cleanup,
and slicing recordings into sentence-aligned segments.

The processing order used by the pipeline is: z-score per channel, then
Butterworth bandpass, then ocular artifact suppression on the frontal
channels, then segmentation against the sentence manifest.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import butter, sosfilt

from .errors import (
    EmptyRecording,
    InvalidBand,
    MissingChannel,
    NonMonotonicTime,
    SegmentOutOfRange,
    ZeroVarianceChannel,
)

log = logging.getLogger(__name__)

TIME_COLUMN = "timestamp_s"

# Column order of the raw CSV files, after the timestamp.
DEFAULT_CHANNELS = ("TP9", "AF7", "AF8", "TP10")

# Channels closest to the eyes; ocular artifacts are detected here.
FRONTAL_CHANNELS = ("AF7", "AF8")


@dataclass(frozen=True)
class EegRecording:
    """A multichannel recording sampled at a uniform rate."""

    participant_id: str
    sample_rate_hz: int
    channel_names: tuple
    samples: np.ndarray  # (n_samples, n_channels), float64

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.samples.ndim != 2:
            raise ValueError("samples must be 2-D (samples x channels)")
        if self.samples.shape[1] != len(self.channel_names):
            raise ValueError("channel count does not match channel_names")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("channel names must be unique")
        if self.samples.shape[0] < 1:
            raise EmptyRecording("recording has no samples")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise MissingChannel(f"channel {name!r} not in recording") from None


@dataclass(frozen=True)
class SegmentSpec:
    """Where one sentence lives inside a participant's recording."""

    passage_id: str
    sentence_id: str
    t_start_s: float
    t_end_s: float

    def __post_init__(self):
        if not (0.0 <= self.t_start_s < self.t_end_s):
            raise ValueError(
                f"need 0 <= t_start < t_end, got [{self.t_start_s}, {self.t_end_s})"
            )


@dataclass(frozen=True)
class EegSegment:
    """One sentence's worth of samples cut from a recording."""

    spec: SegmentSpec
    sample_rate_hz: int
    channel_names: tuple
    samples: np.ndarray  # (n_samples, n_channels)

    def __post_init__(self):
        if self.samples.shape[0] < 1:
            raise ValueError("segment must contain at least one sample")


@dataclass(frozen=True)
class FilterSpec:
    """Bandpass description; zero_phase selects forward-backward filtering."""

    lo_hz: float
    hi_hz: float
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not (0.0 < self.lo_hz < self.hi_hz):
            raise InvalidBand(f"need 0 < lo < hi, got [{self.lo_hz}, {self.hi_hz}]")


def load_recording(path, expected_channels=DEFAULT_CHANNELS) -> EegRecording:
    """Read one raw CSV recording.

    The file must carry a ``timestamp_s`` column plus every expected
    channel. Rows with non-numeric values are dropped (their count is
    logged), timestamps must strictly increase, and the sample rate is
    inferred from the median inter-sample interval rounded to the
    nearest integer Hz.

    Args:
        path: CSV file with header ``timestamp_s,<ch>,...``.
        expected_channels: channel columns that must be present; they
            become the column order of the returned sample matrix.

    Returns:
        EegRecording with participant_id taken from the file stem.
    """
    path = Path(path)
    frame = pd.read_csv(path, dtype=str)
    missing = [c for c in (TIME_COLUMN, *expected_channels) if c not in frame.columns]
    if missing:
        raise MissingChannel(f"{path.name}: missing columns {missing}")

    cols = [TIME_COLUMN, *expected_channels]
    numeric = frame[cols].apply(pd.to_numeric, errors="coerce")
    valid = ~numeric.isna().any(axis=1)
    n_dropped = int((~valid).sum())
    if n_dropped:
        log.info("%s: dropped %d non-numeric rows", path.name, n_dropped)
    numeric = numeric[valid]

    if len(numeric) < 2:
        raise EmptyRecording(f"{path.name}: {len(numeric)} valid rows")

    t = numeric[TIME_COLUMN].to_numpy(dtype=np.float64)
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0))
        raise NonMonotonicTime(f"{path.name}: timestamps not increasing at row {bad + 1}")

    rate = 1.0 / float(np.median(dt))
    sample_rate_hz = int(round(rate))
    if sample_rate_hz < 1:
        raise EmptyRecording(f"{path.name}: median interval implies rate < 1 Hz")

    samples = numeric[list(expected_channels)].to_numpy(dtype=np.float64)
    return EegRecording(
        participant_id=path.stem,
        sample_rate_hz=sample_rate_hz,
        channel_names=tuple(expected_channels),
        samples=samples,
    )


def zscore_normalize(rec: EegRecording) -> EegRecording:
    """Scale every channel to mean 0, variance 1 (population variance)."""
    x = rec.samples
    if x.shape[0] < 2:
        raise EmptyRecording("need at least two samples to normalize")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std, ddof=0
    # exact zero never survives float summation of a constant channel
    flat = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
    if flat.size:
        name = rec.channel_names[int(flat[0])]
        raise ZeroVarianceChannel(f"channel {name} is constant")
    return EegRecording(
        participant_id=rec.participant_id,
        sample_rate_hz=rec.sample_rate_hz,
        channel_names=rec.channel_names,
        samples=(x - mean) / std,
    )


def _design_bandpass(spec: FilterSpec, fs: float):
    nyquist = fs / 2.0
    if not (0.0 < spec.lo_hz < spec.hi_hz < nyquist):
        raise InvalidBand(
            f"band [{spec.lo_hz}, {spec.hi_hz}] must sit inside (0, {nyquist})"
        )
    return butter(spec.order, [spec.lo_hz, spec.hi_hz], btype="bandpass",
                  fs=fs, output="sos")


def apply_bandpass(x: np.ndarray, spec: FilterSpec, fs: float) -> np.ndarray:
    """Filter columns of ``x`` (or a 1-D signal), preserving length.

    Edges are handled by reflecting 3 * order samples on each side
    before filtering and trimming afterwards. With zero_phase the
    cascade runs forward then backward, squaring the magnitude
    response and cancelling the phase.
    """
    sos = _design_bandpass(spec, fs)
    one_d = x.ndim == 1
    work = x[:, None] if one_d else x
    n = work.shape[0]
    pad = min(3 * spec.order, n - 1)
    padded = np.pad(work, ((pad, pad), (0, 0)), mode="reflect")
    if spec.zero_phase:
        fwd_bwd = _backward(sos, sosfilt(sos, padded, axis=0))
        # averaging with the opposite pass order makes time-reversal
        # symmetry exact; a single order leaves direction-dependent
        # startup transients in the output
        bwd_fwd = sosfilt(sos, _backward(sos, padded), axis=0)
        out = 0.5 * (fwd_bwd + bwd_fwd)
    else:
        out = sosfilt(sos, padded, axis=0)
    out = out[pad:pad + n] if pad else out
    return out[:, 0] if one_d else out


def _backward(sos, x):
    return sosfilt(sos, x[::-1], axis=0)[::-1]


def butterworth_bandpass(rec: EegRecording, spec: FilterSpec) -> EegRecording:
    """Apply the bandpass to every channel of a recording."""
    return EegRecording(
        participant_id=rec.participant_id,
        sample_rate_hz=rec.sample_rate_hz,
        channel_names=rec.channel_names,
        samples=apply_bandpass(rec.samples, spec, float(rec.sample_rate_hz)),
    )


def suppress_eog(rec: EegRecording, threshold_uv: float = 100.0,
                 window_s: float = 0.5, detect_channels=FRONTAL_CHANNELS):
    """Blank out windows with ocular artifacts on the frontal channels.

    The recording is tiled with consecutive windows of ``window_s``.
    Any window where a frontal-channel sample exceeds ``threshold_uv``
    in magnitude is flagged; runs of flagged windows are replaced on
    all channels by linear interpolation between the samples just
    outside the run. The threshold is compared against the recording
    in whatever units it currently has.

    Returns:
        (cleaned recording, per-sample boolean artifact mask)
    """
    x = rec.samples.copy()
    n = x.shape[0]
    fs = rec.sample_rate_hz
    win = max(1, int(round(window_s * fs)))
    detect = [rec.channel_names.index(c) for c in detect_channels
              if c in rec.channel_names]
    mask = np.zeros(n, dtype=bool)
    if not detect:
        log.warning("no frontal channels present; artifact pass is a no-op")
        return _replace_samples(rec, x), mask

    starts = range(0, n, win)
    flagged = [s for s in starts
               if np.any(np.abs(x[s:s + win, detect]) > threshold_uv)]
    for s in flagged:
        mask[s:min(s + win, n)] = True

    for run_start, run_end in _runs(mask):
        left = x[run_start - 1] if run_start > 0 else None
        right = x[run_end] if run_end < n else None
        length = run_end - run_start
        if left is not None and right is not None:
            # interpolate across the run, anchored on its outside neighbors
            frac = (np.arange(1, length + 1) / (length + 1))[:, None]
            x[run_start:run_end] = left + frac * (right - left)
        elif left is not None:
            x[run_start:run_end] = left
        elif right is not None:
            x[run_start:run_end] = right
        else:
            log.warning("entire recording flagged as artifact; left unchanged")
    if flagged:
        log.info("%s: interpolated %d samples across %d flagged windows",
                 rec.participant_id, int(mask.sum()), len(flagged))
    return _replace_samples(rec, x), mask


def _replace_samples(rec, samples):
    return EegRecording(
        participant_id=rec.participant_id,
        sample_rate_hz=rec.sample_rate_hz,
        channel_names=rec.channel_names,
        samples=samples,
    )


def _runs(mask):
    """Yield (start, end) index pairs for maximal True runs."""
    n = len(mask)
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            yield i, j
            i = j
        else:
            i += 1


def cut_segments(rec: EegRecording, specs) -> list:
    """Slice the recording into sentence segments.

    Segment i covers sample indices [round(t_start * fs), round(t_end * fs)),
    so abutting sentences never share a sample.

    Raises:
        SegmentOutOfRange: if a segment leaves the recording or rounds
            down to zero samples.
    """
    fs = rec.sample_rate_hz
    out = []
    for spec in specs:
        start = int(round(spec.t_start_s * fs))
        end = int(round(spec.t_end_s * fs))
        if start < 0 or end > rec.n_samples:
            raise SegmentOutOfRange(
                f"segment {spec.passage_id}/{spec.sentence_id} "
                f"[{start}, {end}) exceeds {rec.n_samples} samples"
            )
        if end <= start:
            raise SegmentOutOfRange(
                f"segment {spec.passage_id}/{spec.sentence_id} is empty after rounding"
            )
        out.append(EegSegment(
            spec=spec,
            sample_rate_hz=fs,
            channel_names=rec.channel_names,
            samples=rec.samples[start:end].copy(),
        ))
    return out
