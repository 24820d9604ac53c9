"""Iterative detect-and-subtract sorting within one drift-stationary segment.

Each round picks the channel with the strongest remaining spike activity,
forms a template there by binary-splitting clustering, matches every
conforming spike via a template filter plus a second clustering pass,
validates the cluster, subtracts its mean waveform from the residual, and
repeats until no channel yields a valid unit.
"""

from __future__ import annotations

import heapq
import sys
from dataclasses import dataclass, field

import numpy as np

from .config import SorterConfig
from .detection import detect_peaks
from .probe_io import ProbeGeometry, nearest_channels

NEIGHBORHOOD = 5
POWER_MAX_ITER = 30
POWER_TOL = 1e-6
MAX_UNITS_PER_CHANNEL = 8  # safety valve against runaway accept loops


@dataclass
class SegmentUnit:
    """One accepted unit, in segment-local sample coordinates."""

    local_id: int
    spikes: np.ndarray       # strictly increasing
    ref_channel: int
    channels: np.ndarray     # neighborhood ids, ref first
    template: np.ndarray     # (len(channels), window) mean waveform
    snippet: np.ndarray      # (C, window) full-probe mean waveform
    amplitude: np.ndarray    # (C,) max negative deflection of the snippet


@dataclass
class SegmentSort:
    """Sorted units of one segment; spike times global to the recording."""

    start: int
    end: int
    units: list[SegmentUnit] = field(default_factory=list)


def select_reference_channel(summed_excursions: np.ndarray,
                             blacklist: np.ndarray) -> int | None:
    """Non-blacklisted channel with the largest excursion sum, if any."""
    sums = np.where(blacklist, -np.inf, summed_excursions)
    c = int(np.argmax(sums))  # ties resolve to the lowest id
    if sums[c] <= 0 or not np.isfinite(sums[c]):
        return None
    return c


def principal_projection(waveforms: np.ndarray) -> np.ndarray:
    """Project flattened waveforms onto their dominant variance axis.

    Power iteration, started from the normalized mean-absolute waveform and
    stopped after POWER_MAX_ITER rounds or once the axis moves less than
    POWER_TOL. Zero-variance input projects to all zeros.
    """
    flat = np.asarray(waveforms, dtype=np.float64).reshape(len(waveforms), -1)
    if len(flat) < 2:
        raise ValueError("need at least two waveforms")
    start = np.abs(flat).mean(axis=0)
    norm = np.linalg.norm(start)
    if norm == 0:
        return np.zeros(len(flat))
    centered = flat - flat.mean(axis=0)
    v = start / norm
    scale = 1.0 / (len(flat) - 1)
    for _ in range(POWER_MAX_ITER):
        y = centered.T @ (centered @ v) * scale
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            return np.zeros(len(flat))
        y /= y_norm
        moved = np.linalg.norm(y - v)
        v = y
        if moved < POWER_TOL:
            break
    if np.dot(v, start) < 0:
        v = -v
    return centered @ v


def cluster_1d(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Agglomerate 1-D points into two clusters; returns their index sets.

    Only neighbours in sorted order may merge; the merge cost is
    (mean_x - mean_y)^2 * min(|x|, |y|), and cost ties resolve to the
    leftmost pair. A heap over adjacent pairs gives O(n log n).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.size
    if n < 2:
        raise ValueError("need at least two points")
    order = np.argsort(pts, kind="stable")
    xs = pts[order]

    start = list(range(n))      # leftmost sorted position per cluster slot
    size = [1] * n
    total = xs.tolist()
    left = list(range(-1, n - 1))
    right = list(range(1, n + 1))
    right[-1] = -1
    alive = [True] * n
    version = [0] * n

    def pair_cost(a: int, b: int) -> float:
        gap = total[a] / size[a] - total[b] / size[b]
        return gap * gap * min(size[a], size[b])

    heap = [(pair_cost(i, i + 1), start[i], i, i + 1, 0, 0)
            for i in range(n - 1)]
    heapq.heapify(heap)

    remaining = n
    while remaining > 2:
        cost, _, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        total[a] += total[b]
        size[a] += size[b]
        right[a] = right[b]
        if right[b] != -1:
            left[right[b]] = a
        alive[b] = False
        version[a] += 1
        remaining -= 1
        if left[a] != -1:
            heapq.heappush(heap, (pair_cost(left[a], a), start[left[a]],
                                  left[a], a, version[left[a]], version[a]))
        if right[a] != -1:
            heapq.heappush(heap, (pair_cost(a, right[a]), start[a],
                                  a, right[a], version[a], version[right[a]]))

    slots = [i for i in range(n) if alive[i]]
    slots.sort(key=lambda i: start[i])
    lo, hi = slots
    left_idx = np.sort(order[start[lo]:start[lo] + size[lo]])
    right_idx = np.sort(order[start[hi]:start[hi] + size[hi]])
    return left_idx, right_idx


def difference_vector(template: np.ndarray) -> np.ndarray:
    """Per ordered channel pair (i, j): max over the window of W_i - W_j."""
    k = template.shape[0]
    out = np.empty(k * (k - 1))
    pos = 0
    for i in range(k):
        for j in range(k):
            if i != j:
                out[pos] = np.max(template[i] - template[j])
                pos += 1
    return out


def same_neuron(d_x: np.ndarray, d_y: np.ndarray, merge_lambda: float) -> bool:
    """||D_x - D_y|| <= lambda * max(||D_x||, ||D_y||)."""
    dist = np.linalg.norm(d_x - d_y)
    return dist <= merge_lambda * max(np.linalg.norm(d_x), np.linalg.norm(d_y))


def binary_split_cluster(waveforms: np.ndarray, merge_lambda: float,
                         mode: str = "largest-amplitude",
                         target_d: np.ndarray | None = None) -> np.ndarray:
    """Isolate one coherent cluster of waveforms; returns retained indices.

    Repeatedly split along the principal axis: if the two halves look like
    the same neuron (difference-vector test) stop and keep the whole set,
    otherwise descend into the half with the larger mean peak amplitude on
    the reference channel ("largest-amplitude") or the half whose difference
    vector is nearer target_d ("nearest-to-template").
    """
    if mode not in ("largest-amplitude", "nearest-to-template"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "nearest-to-template" and target_d is None:
        raise ValueError("nearest-to-template mode needs target_d")
    if len(waveforms) == 0:
        raise ValueError("empty waveform set")
    center = waveforms.shape[-1] // 2
    current = np.arange(len(waveforms))
    while current.size > 2:
        subset = waveforms[current]
        proj = principal_projection(subset)
        left, right = cluster_1d(proj)
        d_left = difference_vector(subset[left].mean(axis=0))
        d_right = difference_vector(subset[right].mean(axis=0))
        if same_neuron(d_left, d_right, merge_lambda):
            return current
        if mode == "largest-amplitude":
            score_left = np.abs(subset[left][:, 0, center]).mean()
            score_right = np.abs(subset[right][:, 0, center]).mean()
            pick = left if score_left >= score_right else right
        else:
            dist_left = np.linalg.norm(d_left - target_d)
            dist_right = np.linalg.norm(d_right - target_d)
            pick = left if dist_left <= dist_right else right
        current = current[pick]
    return current


def template_filter(features: np.ndarray, template_vec: np.ndarray) -> np.ndarray:
    """Indices of feature vectors at least as close to the template as to 0.

    Keeps v with v . T >= ||T||^2 / 2 (boundary inclusive).
    """
    norm_sq = float(np.dot(template_vec, template_vec))
    if norm_sq == 0:
        raise ValueError("degenerate template (zero norm)")
    return np.flatnonzero(features @ template_vec >= 0.5 * norm_sq)


def gather_waveforms(residual: np.ndarray, channels: np.ndarray,
                     times: np.ndarray, half: int,
                     pad_edges: bool = False) -> np.ndarray:
    """(n, len(channels), 2*half+1) waveform windows around each time."""
    offsets = np.arange(-half, half + 1)
    idx = times[:, None] + offsets[None, :]
    if pad_edges:
        ok = (idx >= 0) & (idx < residual.shape[1])
        w = residual[channels[:, None, None],
                     np.clip(idx, 0, residual.shape[1] - 1)[None, :, :]]
        w = w.astype(np.float64)
        w *= ok[None, :, :]
    else:
        w = residual[channels[:, None, None], idx[None, :, :]].astype(np.float64)
    return np.transpose(w, (1, 0, 2))


def subtract_unit(residual: np.ndarray, spikes: np.ndarray,
                  snippet: np.ndarray) -> None:
    """Subtract the mean waveform at every spike time, clipped at edges."""
    n = residual.shape[1]
    half = snippet.shape[1] // 2
    patch = snippet.astype(residual.dtype, copy=False)
    for t in spikes:
        lo = max(0, t - half)
        hi = min(n, t + half + 1)
        residual[:, lo:hi] -= patch[:, lo - (t - half):hi - (t - half)]


def extract_unit(residual: np.ndarray, c_star: int, peak_times: np.ndarray,
                 theta: float, neighborhood: np.ndarray, half: int,
                 n_min: int, merge_lambda: float,
                 valid: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """One template-formation / matching / validation round on channel c_star.

    Returns (spike times, template, snippet) or None when no acceptable
    cluster exists on this channel.
    """
    n = residual.shape[1]
    interior = peak_times[(peak_times >= half) & (peak_times < n - half)]
    if interior.size == 0:
        return None

    seeds = gather_waveforms(residual, neighborhood, interior, half)
    kept = binary_split_cluster(seeds, merge_lambda, mode="largest-amplitude")
    template = seeds[kept].mean(axis=0)
    template_vec = template[:, half]
    if np.dot(template_vec, template_vec) == 0:
        return None
    target_d = difference_vector(template)

    cand, _ = detect_peaks(residual[c_star], 0.0, half, local_min_only=True)
    cand = cand[(cand >= valid[0]) & (cand < valid[1])]
    if cand.size == 0:
        return None
    features = residual[neighborhood][:, cand].T.astype(np.float64)
    cand = cand[template_filter(features, template_vec)]
    if cand.size == 0:
        return None

    matched = gather_waveforms(residual, neighborhood, cand, half, pad_edges=True)
    final = binary_split_cluster(matched, merge_lambda,
                                 mode="nearest-to-template", target_d=target_d)
    spikes = cand[final]
    if spikes.size < n_min:
        return None
    mean_peak = matched[final][:, 0, half].mean()
    if not mean_peak <= theta:
        return None

    all_channels = np.arange(residual.shape[0])
    snippet = gather_waveforms(residual, all_channels, spikes, half,
                               pad_edges=True).mean(axis=0)
    unit_template = matched[final].mean(axis=0)
    return spikes, unit_template, snippet


def sort_segment(residual: np.ndarray, thresholds: np.ndarray,
                 geometry: ProbeGeometry, f_s: float, cfg: SorterConfig,
                 valid: tuple[int, int] | None = None) -> list[SegmentUnit]:
    """Sort one segment in place; the residual array is consumed.

    Returns accepted units (local ids in acceptance order, spike times local
    to the segment). `valid` restricts detection to a sample range, e.g. to
    drop the filter's unreliable recording edges.
    """
    n_channels, n = residual.shape
    half = int(round(1e-3 * f_s))
    if valid is None:
        valid = (0, n)

    def detect(c: int) -> tuple[np.ndarray, np.ndarray]:
        t, v = detect_peaks(residual[c], thresholds[c], half)
        keep = (t >= valid[0]) & (t < valid[1])
        t = t[keep]
        return t, (thresholds[c] - v[keep])

    times: list[np.ndarray] = [None] * n_channels
    sums = np.zeros(n_channels)
    for c in range(n_channels):
        t, a = detect(c)
        times[c] = t
        sums[c] = a.sum()

    blacklist = np.zeros(n_channels, dtype=bool)
    units: list[SegmentUnit] = []
    cap = MAX_UNITS_PER_CHANNEL * n_channels
    while True:
        c_star = select_reference_channel(sums, blacklist)
        if c_star is None:
            break
        neighborhood = nearest_channels(geometry, c_star,
                                        min(NEIGHBORHOOD, n_channels))
        found = extract_unit(residual, c_star, times[c_star],
                             thresholds[c_star], neighborhood, half,
                             cfg.n_min, cfg.merge_lambda, valid)
        if found is None:
            blacklist[c_star] = True
            continue
        spikes, template, snippet = found
        subtract_unit(residual, spikes, snippet)
        for c in neighborhood:
            t, a = detect(int(c))
            times[c] = t
            sums[c] = a.sum()
        units.append(SegmentUnit(
            local_id=len(units), spikes=spikes, ref_channel=c_star,
            channels=neighborhood, template=template, snippet=snippet,
            amplitude=np.max(-snippet, axis=1)))
        if len(units) >= cap:
            print(f"driftsort: segment unit cap reached ({cap}); stopping",
                  file=sys.stderr)
            break
    return units
