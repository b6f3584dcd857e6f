"""Temporal and spectral window features.

Seven features per window: sample entropy, skewness and kurtosis (temporal);
binned entropy, Fourier entropy, maximum Doppler and Doppler spread
(spectral). Spectral quantities use the plain periodogram of the mean-removed
window with the DC bin (and, for even lengths, the Nyquist bin) left out.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateWindow
from .preprocess import TimeSeries
from .synth import Label

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "sample_entropy",
    "skewness",
    "kurtosis",
    "binned_entropy",
    "fourier_entropy",
    "max_doppler_hz",
    "doppler_spread_hz",
)
CSV_COLUMNS = ("home_id", "label") + FEATURE_NAMES


def _central_moments(window, min_len):
    w = np.asarray(window, dtype=float)
    if w.size < min_len:
        raise ConfigError(f"window needs at least {min_len} samples, got {w.size}")
    if np.ptp(w) == 0:
        raise DegenerateWindow("window has zero variance")
    d = w - w.mean()
    m2 = np.mean(d**2)
    return d, m2


def skewness(window) -> float:
    """Fisher-Pearson coefficient ``m3 / m2**1.5``."""
    d, m2 = _central_moments(window, 3)
    return float(np.mean(d**3) / m2**1.5)


def kurtosis(window) -> float:
    """Excess kurtosis ``m4 / m2**2 - 3``."""
    d, m2 = _central_moments(window, 4)
    return float(np.mean(d**4) / m2**2 - 3.0)


def _count_matches(x, m, r, n_templates):
    t = np.lib.stride_tricks.sliding_window_view(x, m)[:n_templates]
    dist = np.max(np.abs(t[:, None, :] - t[None, :, :]), axis=-1)
    close = dist <= r
    return int(np.count_nonzero(np.triu(close, k=1)))


def sample_entropy(window, m: int = 2, r: float = 0.2) -> float:
    """SampEn with tolerance ``r`` given as a fraction of the window std.

    Both template lengths use the same ``N - m`` starting points, and
    self-matches are excluded. When no length ``m + 1`` match exists the value
    is capped at ``ln(B (B - 1))`` with ``B = N - m`` templates, which bounds
    every finite SampEn for the window.
    """
    x = np.asarray(window, dtype=float)
    n = x.size
    if n <= m + 1:
        raise ConfigError(f"sample entropy needs more than {m + 1} samples, got {n}")
    if not r > 0:
        raise ConfigError("r must be positive")
    std = x.std()
    if std == 0:
        return 0.0
    tol = r * std
    n_templates = n - m
    b = _count_matches(x, m, tol, n_templates)
    a = _count_matches(x, m + 1, tol, n_templates)
    if a == 0 or b == 0:
        return float(math.log(n_templates * (n_templates - 1)))
    return float(-math.log(a / b))


def binned_entropy(window, n_bins: int = 10) -> float:
    """Shannon entropy in bits of an equal-width histogram over [min, max]."""
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    x = np.asarray(window, dtype=float)
    if np.ptp(x) == 0:
        return 0.0
    counts, _ = np.histogram(x, bins=n_bins, range=(x.min(), x.max()))
    p = counts[counts > 0] / counts.sum()
    return float(max(0.0, -np.sum(p * np.log2(p))))


def periodogram(window, sample_rate_hz: float = 1.0):
    """One-sided periodogram of the mean-removed window without DC/Nyquist.

    Returns ``(freqs, power)`` for bins ``1 .. ceil(n/2) - 1``.
    """
    x = np.asarray(window, dtype=float)
    n = x.size
    spec = np.fft.rfft(x - x.mean())
    stop = (n + 1) // 2  # excludes the Nyquist bin for even n
    k = np.arange(1, stop)
    power = np.abs(spec[1:stop]) ** 2 / n
    return k * sample_rate_hz / n, power


def fourier_entropy(window) -> float:
    x = np.asarray(window, dtype=float)
    if x.size < 4:
        raise ConfigError("fourier entropy needs at least 4 samples")
    _, power = periodogram(x)
    total = power.sum()
    if total <= 0 or np.ptp(x) == 0:
        return 0.0
    p = power[power > 0] / total
    return float(max(0.0, -np.sum(p * np.log2(p))))


def doppler_features(window, sample_rate_hz: float) -> tuple[float, float]:
    """Peak frequency and power-weighted RMS spread of the periodogram.

    Peaks equal to within 1e-9 relative are resolved toward the lower
    frequency.
    """
    x = np.asarray(window, dtype=float)
    if x.size < 8:
        raise ConfigError("doppler features need at least 8 samples")
    f, power = periodogram(x, sample_rate_hz)
    total = power.sum()
    if total <= 0 or np.ptp(x) == 0:
        return 0.0, 0.0
    peak = power.max()
    max_doppler = float(f[np.flatnonzero(power >= peak * (1 - 1e-9))[0]])
    centroid = np.sum(power * f) / total
    spread = math.sqrt(max(0.0, float(np.sum(power * (f - centroid) ** 2) / total)))
    return max_doppler, spread


def feature_vector(window, sample_rate_hz: float) -> np.ndarray:
    """All seven features in ``FEATURE_NAMES`` order.

    Raises
    ------
    DegenerateWindow
        If the window is constant or any feature comes out non-finite.
    """
    w = np.asarray(window, dtype=float)
    vec = np.array(
        [
            sample_entropy(w),
            skewness(w),
            kurtosis(w),
            binned_entropy(w),
            fourier_entropy(w),
            *doppler_features(w, sample_rate_hz),
        ]
    )
    if not np.all(np.isfinite(vec)):
        raise DegenerateWindow("non-finite feature value")
    return vec


@dataclass
class FeatureMatrix:
    """Feature rows with per-row labels (1 = motion) and home ids."""

    X: np.ndarray
    labels: np.ndarray
    home_ids: np.ndarray
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(FEATURE_NAMES))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.home_ids = np.asarray(self.home_ids, dtype=object).reshape(-1)
        if not (len(self.X) == len(self.labels) == len(self.home_ids)):
            raise ConfigError("feature, label and home-id row counts differ")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.X.shape

    def one_hot(self) -> np.ndarray:
        return np.eye(2, dtype=int)[self.labels]

    def subset(self, mask) -> "FeatureMatrix":
        return FeatureMatrix(self.X[mask], self.labels[mask], self.home_ids[mask])

    @staticmethod
    def concat(parts) -> "FeatureMatrix":
        parts = list(parts)
        if not parts:
            return FeatureMatrix(np.empty((0, 7)), [], [])
        return FeatureMatrix(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.home_ids for p in parts]),
            sum(p.dropped for p in parts),
        )


def featurize(
    series: TimeSeries,
    window_len: int = 200,
    hop: int = 100,
    label=Label.NO_MOTION,
    home_id: str = "home",
) -> FeatureMatrix:
    values = series.values
    if hop < 1:
        raise ConfigError("hop must be >= 1")
    if window_len < 8 or window_len > values.size:
        raise ConfigError(
            f"window_len {window_len} must lie in [8, series length {values.size}]"
        )
    n_windows = (values.size - window_len) // hop + 1
    rows = []
    dropped = 0
    for i in range(n_windows):
        w = values[i * hop : i * hop + window_len]
        try:
            rows.append(feature_vector(w, series.sample_rate_hz))
        except DegenerateWindow:
            dropped += 1
    if dropped:
        log.info("%s: dropped %d of %d degenerate windows", home_id, dropped, n_windows)
    if not rows:
        raise DegenerateWindow(f"{home_id}: all {n_windows} windows are degenerate")
    lab = int(Label.parse(label))
    return FeatureMatrix(np.array(rows), [lab] * len(rows), [home_id] * len(rows), dropped)


def write_features_csv(path, fm: FeatureMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for hid, lab, row in zip(fm.home_ids, fm.labels, fm.X):
            w.writerow([hid, int(lab), *[repr(float(v)) for v in row]])


def read_features_csv(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ConfigError(
                f"{path}: expected columns {','.join(CSV_COLUMNS)}, got {header}"
            )
        hids, labs, rows = [], [], []
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_COLUMNS):
                raise ConfigError(f"{path}:{line_no}: expected {len(CSV_COLUMNS)} fields")
            hids.append(rec[0])
            labs.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    return FeatureMatrix(np.array(rows).reshape(-1, 7), labs, hids)
