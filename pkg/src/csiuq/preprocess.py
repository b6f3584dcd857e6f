"""CSI amplitude cleaning and reduction to a single 1-D series."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .errors import ConfigError, DegenerateWindow
from .synth import CsiTensor, csi_amplitude

log = logging.getLogger(__name__)

MAD_SCALE = 1.4826


@dataclass
class TimeSeries:
    values: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ConfigError("time series must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("time series contains non-finite values")

    def __len__(self):
        return self.values.size


@dataclass
class SubcarrierRanking:
    order: np.ndarray  # subcarrier indices, best first
    mean_power: np.ndarray
    variance: np.ndarray


@dataclass
class PreprocessParams:
    half_window: int = 5
    n_sigmas: float = 3.0
    top_k: int = 5
    max_passes: int = 500


def _windowed_median_mad(x: np.ndarray, half_window: int):
    """Median and MAD over centred windows truncated at the series ends.

    ``x`` may be 2-D; windows run along the last axis.
    """
    n = x.shape[-1]
    width = 2 * half_window + 1
    med = np.empty_like(x)
    mad = np.empty_like(x)
    if n >= width:
        win = sliding_window_view(x, width, axis=-1)
        m = np.median(win, axis=-1)
        med[..., half_window : n - half_window] = m
        mad[..., half_window : n - half_window] = np.median(np.abs(win - m[..., None]), axis=-1)
    edges = [i for i in range(n) if i < half_window or i >= n - half_window]
    for i in edges:
        w = x[..., max(0, i - half_window) : i + half_window + 1]
        m = np.median(w, axis=-1)
        med[..., i] = m
        mad[..., i] = np.median(np.abs(w - m[..., None]), axis=-1)
    return med, mad


def _hampel_pass(x, half_window, n_sigmas):
    med, mad = _windowed_median_mad(x, half_window)
    outlier = np.abs(x - med) > n_sigmas * MAD_SCALE * mad
    return np.where(outlier, med, x)


def _median_mad_at(padded, rows, cols, half_window):
    """Window median/MAD at (row, col) positions of a NaN-padded 2-D array."""
    offsets = np.arange(2 * half_window + 1)
    win = padded[rows[:, None], cols[:, None] + offsets]
    med = np.nanmedian(win, axis=1)
    mad = np.nanmedian(np.abs(win - med[:, None]), axis=1)
    return med, mad


def hampel_array(x, half_window: int = 5, n_sigmas: float = 3.0, max_passes: int = 500):
    """Hampel filter along the last axis of ``x``.

    Points deviating from their window median by more than
    ``n_sigmas * 1.4826 * MAD`` are replaced by that median. The pass is
    repeated until nothing changes (at most ``max_passes`` times), so the
    result is a fixed point: filtering it again is a no-op. Windows are
    truncated at the series ends.
    """
    x = np.asarray(x, dtype=float)
    if half_window < 1:
        raise ConfigError("half_window must be >= 1")
    if not n_sigmas > 0:
        raise ConfigError("n_sigmas must be positive")
    if x.shape[-1] <= 2 * half_window:
        raise ConfigError(
            f"series of length {x.shape[-1]} is too short for half_window {half_window}"
        )
    shape = x.shape
    x2 = x.reshape(-1, shape[-1])
    n = x2.shape[1]
    thresh = n_sigmas * MAD_SCALE

    med, mad = _windowed_median_mad(x2, half_window)
    padded = np.full((x2.shape[0], n + 2 * half_window), np.nan)
    padded[:, half_window : half_window + n] = x2
    cur = padded[:, half_window : half_window + n]  # view onto the working series
    rows, cols = np.nonzero(np.abs(x2 - med) > thresh * mad)
    new_vals = med[rows, cols]
    for _ in range(max_passes):
        if rows.size == 0:
            return cur.copy().reshape(shape)
        cur[rows, cols] = new_vals
        # every window containing a changed point must be re-examined
        r = np.repeat(rows, 2 * half_window + 1)
        c = (cols[:, None] + np.arange(-half_window, half_window + 1)).ravel()
        keep = (c >= 0) & (c < n)
        flat = np.unique(r[keep] * n + c[keep])
        r, c = flat // n, flat % n
        m, d = _median_mad_at(padded, r, c, half_window)
        hit = np.abs(cur[r, c] - m) > thresh * d
        rows, cols, new_vals = r[hit], c[hit], m[hit]
    log.warning("Hampel filter did not reach a fixed point in %d passes", max_passes)
    return cur.copy().reshape(shape)


def hampel_filter(series: TimeSeries, half_window: int = 5, n_sigmas: float = 3.0) -> TimeSeries:
    return TimeSeries(hampel_array(series.values, half_window, n_sigmas), series.sample_rate_hz)


def borda_order(mean_power, variance) -> np.ndarray:
    """Order items by summed descending ranks; ties go to the lower index."""
    mean_power = np.asarray(mean_power, dtype=float)
    variance = np.asarray(variance, dtype=float)
    score = rankdata(-mean_power, method="min") + rankdata(-variance, method="min")
    return np.argsort(score, kind="stable")


def rank_subcarriers(amp) -> SubcarrierRanking:
    amp = np.asarray(amp, dtype=float)
    if amp.ndim != 2 or amp.shape[0] < 1 or amp.shape[1] < 2:
        raise ConfigError("amplitude matrix must be (n_sc >= 1, n_samples >= 2)")
    power = np.mean(amp**2, axis=1)
    var = np.var(amp, axis=1)
    return SubcarrierRanking(borda_order(power, var), power, var)


def collapse_subcarriers(amp, ranking: SubcarrierRanking, k: int = 5, sample_rate_hz: float = 100.0):
    """Standardize the top-``k`` subcarriers and average them pointwise."""
    amp = np.asarray(amp, dtype=float)
    n_sc = amp.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n_sc:
        log.warning("only %d subcarriers available, using all instead of top %d", n_sc, k)
        k = n_sc
    rows = []
    for idx in ranking.order[:k]:
        row = amp[idx]
        std = row.std()
        if std == 0 or std <= 1e-12 * max(1.0, np.abs(row).max()):
            log.warning("subcarrier %d has zero variance; excluded", idx)
            continue
        rows.append((row - row.mean()) / std)
    if not rows:
        raise DegenerateWindow("all selected subcarriers are degenerate (zero variance)")
    return TimeSeries(np.mean(rows, axis=0), sample_rate_hz)


def preprocess_pipeline(tensor: CsiTensor, params: PreprocessParams | None = None) -> TimeSeries:
    """Amplitude, antenna-pair average, per-subcarrier Hampel, rank, collapse."""
    if not isinstance(tensor, CsiTensor):
        tensor = CsiTensor(np.asarray(tensor), 100.0)
    p = params or PreprocessParams()
    amp = csi_amplitude(tensor).mean(axis=(0, 1))
    amp = hampel_array(amp, p.half_window, p.n_sigmas, p.max_passes)
    ranking = rank_subcarriers(amp)
    return collapse_subcarriers(amp, ranking, p.top_k, tensor.sample_rate_hz)


def write_series_csv(path, series: TimeSeries) -> None:
    lines = [f"# sample_rate_hz={series.sample_rate_hz!r}", "sample_index,value"]
    lines += [f"{i},{v!r}" for i, v in enumerate(series.values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path) -> TimeSeries:
    rate = None
    values = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "sample_rate_hz":
                rate = float(val)
        elif line and not line.startswith("sample_index"):
            values.append(float(line.split(",")[1]))
    if rate is None:
        raise ConfigError(f"{path}: missing sample_rate_hz comment line")
    return TimeSeries(np.array(values), rate)
