"""Adaptive boundary placement from windowed spike-amplitude fluctuations.

A per-channel series S(t) sums peak excursions inside a sliding window; the
drift measure H(t) accumulates |S(t) - S(t - L)| across channels. Local
maxima of H that clear 2x its median become segment boundaries, greedily,
each at least one minimum segment length from the ends and from each other.

Sustained drift raises H everywhere, so its median stops being a noise
floor; when the lag-2L drift measure runs well above the lag-L one (a
steady amplitude trend, not isolated events), boundary selection drops the
2x-median floor and keeps every admissible H maximum, falling back to
minimum-length segments that track the drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detection import PeakTrain

GRID_SECONDS = 1.0  # evaluation grid for S and H
BOUNDARY_FACTOR = 2.0  # local maxima must exceed this multiple of median(H)
SUSTAINED_DRIFT_RATIO = 1.5  # median(H at lag 2L) / median(H at lag L) trigger


@dataclass
class SegmentationPlan:
    grid_step: int          # samples between grid points
    window: int             # sliding-window length in samples
    s_matrix: np.ndarray    # (C, K) amplitude sums, S[c, k] at t = k*grid_step
    h_offset: int           # grid index of the first H value
    h_values: np.ndarray    # drift measure at grid indices h_offset..
    boundaries: list[int]   # accepted boundaries, sample indices


def sliding_amplitude_sum(times: np.ndarray, excursions: np.ndarray,
                          window: int, grid_step: int, n_grid: int) -> np.ndarray:
    """S[k] = sum of excursions with k*grid_step < t < k*grid_step + window."""
    prefix = np.concatenate([[0.0], np.cumsum(excursions)])
    starts = np.arange(n_grid, dtype=np.int64) * grid_step
    lo = np.searchsorted(times, starts, side="right")
    hi = np.searchsorted(times, starts + window, side="left")
    return prefix[hi] - prefix[lo]


def drift_measure(s_matrix: np.ndarray, lag: int) -> np.ndarray:
    """H[k] = sum over channels of |S[c, k] - S[c, k - lag]|, k >= lag."""
    if s_matrix.shape[1] <= lag:
        return np.zeros(0)
    diff = s_matrix[:, lag:] - s_matrix[:, :-lag]
    return np.abs(diff).sum(axis=0)


def detect_sustained_drift(s_matrix: np.ndarray, lag: int) -> bool:
    """True when amplitude sums trend steadily instead of fluctuating.

    Stationary recordings have median |S(t) - S(t-2L)| close to the lag-L
    value; a steady drift roughly doubles it.
    """
    h1 = drift_measure(s_matrix, lag)
    h2 = drift_measure(s_matrix, 2 * lag)
    if h1.size == 0 or h2.size == 0:
        return False
    floor = np.median(h1)
    if floor <= 0:
        return False
    return bool(np.median(h2) / floor > SUSTAINED_DRIFT_RATIO)


def _local_maxima(h: np.ndarray) -> np.ndarray:
    if h.size == 0:
        return np.zeros(0, dtype=np.int64)
    left_ok = np.empty(h.size, dtype=bool)
    right_ok = np.empty(h.size, dtype=bool)
    left_ok[0] = True
    left_ok[1:] = h[1:] >= h[:-1]
    right_ok[-1] = True
    right_ok[:-1] = h[:-1] >= h[1:]
    return np.flatnonzero(left_ok & right_ok)


def select_boundaries(h_values: np.ndarray, h_offset: int, grid_step: int,
                      window: int, n_samples: int,
                      sustained_drift: bool = False) -> list[int]:
    """Greedy pick of H peaks, strongest first, honoring minimum spacing.

    With sustained_drift the 2x-median floor is waived: every admissible
    local maximum becomes a boundary candidate.
    """
    if n_samples < 2 * window or h_values.size == 0:
        return []
    floor = -np.inf if sustained_drift else BOUNDARY_FACTOR * np.median(h_values)
    candidates = [k for k in _local_maxima(h_values) if h_values[k] > floor]
    candidates.sort(key=lambda k: (-h_values[k], k))
    accepted: list[int] = []
    for k in candidates:
        b = (h_offset + k) * grid_step
        if b < window or n_samples - b < window:
            continue
        if any(abs(b - a) < window for a in accepted):
            continue
        accepted.append(b)
    accepted.sort()
    return accepted


def plan_segmentation(train: PeakTrain, n_samples: int, f_s: float,
                      l_min_seconds: float) -> SegmentationPlan:
    """Evaluate S and H on a coarse grid and place boundaries."""
    grid_step = int(round(GRID_SECONDS * f_s))
    lag = max(1, int(round(l_min_seconds / GRID_SECONDS)))
    window = lag * grid_step
    # S(t) needs the full window ahead of t
    n_grid = max(0, n_samples - window) // grid_step + 1
    s_matrix = np.vstack([
        sliding_amplitude_sum(train.times[c], train.excursions[c],
                              window, grid_step, n_grid)
        for c in range(len(train.times))
    ]) if n_grid > 0 else np.zeros((len(train.times), 0))
    h_values = drift_measure(s_matrix, lag)
    boundaries = select_boundaries(
        h_values, lag, grid_step, window, n_samples,
        sustained_drift=detect_sustained_drift(s_matrix, lag))
    return SegmentationPlan(grid_step=grid_step, window=window,
                            s_matrix=s_matrix, h_offset=lag,
                            h_values=h_values, boundaries=boundaries)


def segment_ranges(boundaries: list[int], n_samples: int) -> list[tuple[int, int]]:
    """Half-open sample ranges covering the recording."""
    edges = [0, *boundaries, n_samples]
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
