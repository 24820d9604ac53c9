"""Adaptive MAD thresholds and negative-peak detection on filtered traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter1d

MAD_SAMPLE_BUDGET = 1 << 20  # per-channel cap on samples entering the median


def mad_threshold(signal: np.ndarray, kappa: float) -> float:
    """theta = -kappa * median(|x - median(x)|); 0 flags a degenerate channel."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty signal")
    med = np.median(x)
    return float(-kappa * np.median(np.abs(x - med)))


def compute_thresholds(filtered: np.ndarray, kappa: float) -> np.ndarray:
    """Per-channel thresholds from evenly strided subsamples of each trace."""
    n_channels, n_samples = filtered.shape
    stride = max(1, -(-n_samples // MAD_SAMPLE_BUDGET))
    return np.array([mad_threshold(filtered[c, ::stride], kappa)
                     for c in range(n_channels)])


def _window_minima(x: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Exclusive sliding minima before/after each sample over a +-r window."""
    n = x.size
    pad = np.full(r, np.inf)
    before = minimum_filter1d(np.concatenate([pad, x]), size=r,
                              mode="constant", cval=np.inf)
    after = minimum_filter1d(np.concatenate([x, pad]), size=r,
                             mode="constant", cval=np.inf)
    k = r // 2
    idx = np.arange(n)
    return before[idx + k], after[idx + 1 + k]


def detect_peaks(signal: np.ndarray, theta: float, refractory_samples: int,
                 local_min_only: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Negative peaks of a 1-D trace; returns (times, values).

    Threshold mode keeps samples at or below theta that are minima over the
    +-refractory window (strictly below everything earlier, at-or-below
    everything later, so the earliest of equal minima wins); this guarantees
    no two peaks closer than the refractory. With local_min_only the
    threshold is ignored and strict minima over the window are returned.
    """
    if refractory_samples < 1:
        raise ValueError("refractory_samples must be >= 1")
    x = np.asarray(signal, dtype=np.float64)
    before, after = _window_minima(x, refractory_samples)
    if local_min_only:
        mask = (x < before) & (x < after)
    else:
        mask = (x <= theta) & (x < before) & (x <= after)
    times = np.flatnonzero(mask)
    return times.astype(np.int64), x[times]


@dataclass
class PeakTrain:
    """Per-channel detected peaks on a filtered recording."""

    times: list[np.ndarray]       # sample indices, strictly increasing
    values: list[np.ndarray]      # peak voltages (<= threshold)
    excursions: list[np.ndarray]  # threshold - value, >= 0
    thresholds: np.ndarray        # (C,)

    @property
    def degenerate(self) -> np.ndarray:
        """Channels whose MAD collapsed to zero (flat signal)."""
        return self.thresholds == 0.0

    def summed_excursions(self) -> np.ndarray:
        return np.array([a.sum() for a in self.excursions])


def build_peak_train(filtered: np.ndarray, thresholds: np.ndarray,
                     refractory_samples: int,
                     valid: tuple[int, int] | None = None) -> PeakTrain:
    """Threshold-detect every channel, discarding peaks outside `valid`."""
    lo, hi = (0, filtered.shape[1]) if valid is None else valid
    times, values, excursions = [], [], []
    for c in range(filtered.shape[0]):
        t, v = detect_peaks(filtered[c], thresholds[c], refractory_samples)
        keep = (t >= lo) & (t < hi)
        t, v = t[keep], v[keep]
        times.append(t)
        values.append(v)
        excursions.append(thresholds[c] - v)
    return PeakTrain(times=times, values=values, excursions=excursions,
                     thresholds=np.asarray(thresholds, dtype=np.float64))
