"""Cross-segment unit alignment via simulated axial drift and assignment.

Units are summarized by per-channel amplitude vectors. For each candidate
displacement on a 5 um grid, both segments' vectors are shifted half-way
toward each other by linear interpolation along each probe column, a
minimum-cost one-to-one assignment is solved exactly, and the displacement
with the cheapest assignment wins. Matched pairs keep one global identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .probe_io import ProbeGeometry, SegmentInfo, SegmentMatch, SortedUnit, SortResult
from .sifter import SegmentSort

SHIFT_STEP_UM = 5.0


def amplitude_vector(snippet: np.ndarray) -> np.ndarray:
    """Per-channel maximum negative deflection of a (C, window) waveform."""
    return np.max(-np.asarray(snippet, dtype=np.float64), axis=1)


def make_shift_grid(d_max_um: float) -> np.ndarray:
    """Displacements {-D..-5, 0, 5..D} in exact 5 um steps."""
    m = int(d_max_um // SHIFT_STEP_UM)
    return SHIFT_STEP_UM * np.arange(-m, m + 1)


def _columns(geometry: ProbeGeometry) -> list[tuple[np.ndarray, np.ndarray]]:
    """(sorted y positions, channel ids) per lateral column."""
    cols = []
    for x in np.unique(geometry.x):
        ids = np.flatnonzero(geometry.x == x)
        order = np.argsort(geometry.y[ids], kind="stable")
        ids = ids[order]
        cols.append((geometry.y[ids], ids))
    return cols


def shift_amplitudes(amplitudes: np.ndarray, delta: float,
                     geometry: ProbeGeometry) -> np.ndarray:
    """Amplitude vectors after the tissue moves by delta um along the probe.

    Each channel at axial position y takes the column profile's value at
    y - delta (linear interpolation, end values beyond the column extent).
    Works on a single (C,) vector or a stack (n, C).
    """
    amps = np.asarray(amplitudes, dtype=np.float64)
    single = amps.ndim == 1
    if single:
        amps = amps[None, :]
    out = np.empty_like(amps)
    for ys, ids in _columns(geometry):
        for row in range(amps.shape[0]):
            out[row, ids] = np.interp(ys - delta, ys, amps[row, ids])
    return out[0] if single else out


@dataclass
class ShiftMatch:
    delta: float
    pairs: list[tuple[int, int]]
    pair_dists: np.ndarray
    total_cost: float
    shifted_a: np.ndarray
    shifted_b: np.ndarray


def matching_cost(amps_a: np.ndarray, amps_b: np.ndarray, delta: float,
                  geometry: ProbeGeometry) -> ShiftMatch:
    """Optimal one-to-one matching after symmetric +-delta/2 displacement."""
    if len(amps_a) == 0 or len(amps_b) == 0:
        raise ValueError("both segments need at least one unit")
    shifted_a = shift_amplitudes(amps_a, +delta / 2.0, geometry)
    shifted_b = shift_amplitudes(amps_b, -delta / 2.0, geometry)
    dist = cdist(shifted_a, shifted_b)
    rows, cols = linear_sum_assignment(dist)
    pair_dists = dist[rows, cols]
    return ShiftMatch(delta=delta, pairs=list(zip(rows.tolist(), cols.tolist())),
                      pair_dists=pair_dists, total_cost=float(pair_dists.sum()),
                      shifted_a=shifted_a, shifted_b=shifted_b)


def best_shift(amps_a: np.ndarray, amps_b: np.ndarray, grid: np.ndarray,
               geometry: ProbeGeometry) -> ShiftMatch:
    """Cheapest displacement on the grid; ties prefer small then negative."""
    if grid.size == 0:
        raise ValueError("empty shift grid")
    order = sorted(range(grid.size), key=lambda i: (abs(grid[i]), grid[i] > 0))
    best = None
    for i in order:
        match = matching_cost(amps_a, amps_b, float(grid[i]), geometry)
        if best is None or match.total_cost < best.total_cost:
            best = match
    return best


def stitch(segments: list[SegmentSort], geometry: ProbeGeometry,
           d_max_um: float, mu: float, sample_rate: float,
           total_samples: int) -> SortResult:
    """Chain segment sorts left to right into globally identified units.

    A matched pair keeps its global id only when its residual distance is
    within mu of the larger shifted amplitude norm; everything else gets a
    fresh id. Spike trains concatenate per global id.
    """
    grid = make_shift_grid(d_max_um)
    next_gid = 0
    unit_spikes: dict[int, list[np.ndarray]] = {}
    unit_seed: dict[int, tuple[int, int, object]] = {}
    seg_infos: list[SegmentInfo] = []
    prev_amps: np.ndarray | None = None
    prev_gids: list[int] = []

    for si, seg in enumerate(segments):
        n_units = len(seg.units)
        amps = (np.vstack([u.amplitude for u in seg.units])
                if n_units else np.zeros((0, geometry.n_channels)))
        gids = [-1] * n_units
        shift_um = 0.0
        if si > 0 and n_units and prev_amps is not None and len(prev_amps):
            match = best_shift(prev_amps, amps, grid, geometry)
            shift_um = match.delta
            for (i, j), d in zip(match.pairs, match.pair_dists):
                gate = mu * max(np.linalg.norm(match.shifted_a[i]),
                                np.linalg.norm(match.shifted_b[j]))
                if d <= gate:
                    gids[j] = prev_gids[i]
        for j, u in enumerate(seg.units):
            if gids[j] == -1:
                gids[j] = next_gid
                next_gid += 1
                unit_spikes[gids[j]] = []
                unit_seed[gids[j]] = (si, j, u)
            unit_spikes[gids[j]].append(np.asarray(u.spikes, dtype=np.int64))
        seg_infos.append(SegmentInfo(
            start=seg.start, end=seg.end, shift_um=shift_um,
            units=[SegmentMatch(local_id=j, global_id=gids[j],
                                amplitude=seg.units[j].amplitude)
                   for j in range(n_units)]))
        prev_amps, prev_gids = amps, gids

    units = []
    for gid in range(next_gid):
        si, j, u = unit_seed[gid]
        units.append(SortedUnit(
            unit_id=gid, spikes=np.concatenate(unit_spikes[gid]),
            ref_channel=u.ref_channel, channels=u.channels,
            template=u.template, snippet=u.snippet, amplitude=u.amplitude,
            origin=(si, j)))
    boundaries = [seg.start for seg in segments[1:]]
    return SortResult(units=units, boundaries=boundaries, segments=seg_infos,
                      sample_rate=sample_rate, total_samples=total_samples)
