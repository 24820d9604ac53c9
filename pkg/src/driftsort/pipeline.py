"""End-to-end sorting plus the programmatic hooks the CLI exposes.

The monolithic path (sort_recording) filters once and sorts segment views of
the filtered array. The hook path re-filters each raw slice with enough
margin that the filtered values are bit-identical (integer box cascades),
so segment + per-segment sorting + merge reproduces the monolithic output
exactly.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SorterConfig
from .detection import build_peak_train, compute_thresholds
from .dog_filter import (DogKernelSpec, design_kernel, dog_filter_channel,
                         filter_margin, unreliable_edge)
from .probe_io import (ProbeGeometry, Recording, SegmentInfo, SegmentMatch,
                       SortedUnit, SortResult)
from .segmentation import plan_segmentation, segment_ranges
from .sifter import SegmentSort, SegmentUnit, sort_segment
from .stitcher import best_shift, make_shift_grid, stitch


class PhaseLog:
    """Wall-clock accounting of the pipeline phases, reported on stderr."""

    def __init__(self, emit=None):
        self.phases: list[tuple[str, float]] = []
        self.emit = emit

    def record(self, name: str, seconds: float, note: str = "") -> None:
        self.phases.append((name, seconds))
        if self.emit is not None:
            tail = f" ({note})" if note else ""
            self.emit(f"driftsort: {name}: {seconds:.2f} s{tail}")


@dataclass
class SegmentationManifest:
    """Everything a per-segment re-sort needs to reproduce monolithic output."""

    sample_rate: float
    total_samples: int
    boundaries: list[int]
    thresholds: np.ndarray
    valid: tuple[int, int]
    w_high_cut: int
    w_low_cut: int
    invert: bool

    def kernel(self) -> DogKernelSpec:
        return DogKernelSpec(w_high_cut=self.w_high_cut,
                             w_low_cut=self.w_low_cut, f_s=self.sample_rate)

    def ranges(self) -> list[tuple[int, int]]:
        return segment_ranges(self.boundaries, self.total_samples)


def save_manifest(manifest: SegmentationManifest, path: str | Path) -> None:
    doc = {
        "sample_rate": manifest.sample_rate,
        "total_samples": manifest.total_samples,
        "boundaries": [int(b) for b in manifest.boundaries],
        "thresholds": np.asarray(manifest.thresholds).tolist(),
        "valid": list(manifest.valid),
        "w_high_cut": manifest.w_high_cut,
        "w_low_cut": manifest.w_low_cut,
        "invert": manifest.invert,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_manifest(path: str | Path) -> SegmentationManifest:
    with open(path) as fh:
        doc = json.load(fh)
    return SegmentationManifest(
        sample_rate=doc["sample_rate"], total_samples=doc["total_samples"],
        boundaries=list(doc["boundaries"]),
        thresholds=np.asarray(doc["thresholds"], dtype=np.float64),
        valid=tuple(doc["valid"]), w_high_cut=doc["w_high_cut"],
        w_low_cut=doc["w_low_cut"], invert=doc["invert"])


def filter_recording(rec: Recording, cfg: SorterConfig,
                     log: PhaseLog | None = None) -> tuple[np.ndarray, DogKernelSpec]:
    """Bandpass the whole recording to float32, channel by channel."""
    t0 = time.perf_counter()
    spec = design_kernel(cfg.band_low_hz, cfg.band_high_hz, rec.sample_rate)
    sign = -1.0 if cfg.invert_polarity else 1.0
    filtered = np.empty(rec.samples.shape, dtype=np.float32)
    for c in range(rec.n_channels):
        filtered[c] = sign * dog_filter_channel(rec.samples[c], spec)
    if log:
        log.record("filter", time.perf_counter() - t0,
                   f"{rec.n_channels} channels, boxes {spec.w_high_cut}/{spec.w_low_cut}")
    return filtered, spec


def split_into_segments(rec: Recording, cfg: SorterConfig,
                        log: PhaseLog | None = None
                        ) -> tuple[SegmentationManifest, np.ndarray]:
    """Filter, detect, and place segment boundaries; returns the manifest."""
    filtered, spec = filter_recording(rec, cfg, log)
    t0 = time.perf_counter()
    thresholds = compute_thresholds(filtered, cfg.kappa)
    edge = unreliable_edge(spec)
    valid = (min(edge, rec.n_samples), max(rec.n_samples - edge, 0))
    refractory = int(round(1e-3 * rec.sample_rate))
    train = build_peak_train(filtered, thresholds, refractory, valid)
    if log:
        n_peaks = sum(len(t) for t in train.times)
        log.record("detect", time.perf_counter() - t0, f"{n_peaks} peaks")
    t0 = time.perf_counter()
    plan = plan_segmentation(train, rec.n_samples, rec.sample_rate,
                             cfg.l_min_seconds)
    if log:
        log.record("segment", time.perf_counter() - t0,
                   f"{len(plan.boundaries)} boundaries")
    manifest = SegmentationManifest(
        sample_rate=rec.sample_rate, total_samples=rec.n_samples,
        boundaries=plan.boundaries, thresholds=thresholds, valid=valid,
        w_high_cut=spec.w_high_cut, w_low_cut=spec.w_low_cut,
        invert=cfg.invert_polarity)
    return manifest, filtered


def _sort_slice(segment: np.ndarray, start: int, end: int,
                manifest: SegmentationManifest, geometry: ProbeGeometry,
                cfg: SorterConfig) -> SegmentSort:
    """Sort one segment residual (mutated in place); offsets times to global."""
    lo = max(manifest.valid[0], start) - start
    hi = min(manifest.valid[1], end) - start
    units = sort_segment(segment, manifest.thresholds, geometry,
                         manifest.sample_rate, cfg, valid=(lo, max(lo, hi)))
    for u in units:
        u.spikes = u.spikes + start
    return SegmentSort(start=start, end=end, units=units)


def sort_one_segment(rec: Recording, manifest: SegmentationManifest,
                     start: int, end: int, cfg: SorterConfig) -> SegmentSort:
    """Hook path: re-filter one raw slice (with margin) and sort it."""
    spec = manifest.kernel()
    margin = filter_margin(spec)
    lo = max(0, start - margin)
    hi = min(rec.n_samples, end + margin)
    sign = -1.0 if manifest.invert else 1.0
    segment = np.empty((rec.n_channels, end - start), dtype=np.float32)
    for c in range(rec.n_channels):
        segment[c] = (sign * dog_filter_channel(rec.samples[c, lo:hi],
                                                spec))[start - lo:end - lo]
    return _sort_slice(segment, start, end, manifest, rec.geometry, cfg)


def sort_filtered_segments(filtered: np.ndarray,
                           manifest: SegmentationManifest,
                           geometry: ProbeGeometry, cfg: SorterConfig,
                           log: PhaseLog | None = None) -> list[SegmentSort]:
    """Monolithic path: sort the (mutated) filtered array segment by segment."""
    t0 = time.perf_counter()
    ranges = manifest.ranges()

    def run(span: tuple[int, int]) -> SegmentSort:
        start, end = span
        return _sort_slice(filtered[:, start:end], start, end, manifest,
                           geometry, cfg)

    if cfg.threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            sorted_segments = list(pool.map(run, ranges))
    else:
        sorted_segments = [run(span) for span in ranges]
    if log:
        n_units = sum(len(s.units) for s in sorted_segments)
        log.record("sort", time.perf_counter() - t0,
                   f"{len(ranges)} segments, {n_units} units")
    return sorted_segments


def merge_sorted_segments(segments: list[SegmentSort],
                          geometry: ProbeGeometry, cfg: SorterConfig,
                          sample_rate: float, total_samples: int,
                          log: PhaseLog | None = None) -> SortResult:
    t0 = time.perf_counter()
    result = stitch(segments, geometry, cfg.d_max_um, cfg.mu,
                    sample_rate, total_samples)
    if log:
        log.record("stitch", time.perf_counter() - t0,
                   f"{len(result.units)} global units")
    return result


def sort_recording(rec: Recording, cfg: SorterConfig,
                   log: PhaseLog | None = None) -> SortResult:
    """The full pipeline: filter, detect, segment, sort, stitch."""
    manifest, filtered = split_into_segments(rec, cfg, log)
    segments = sort_filtered_segments(filtered, manifest, rec.geometry, cfg, log)
    return merge_sorted_segments(segments, rec.geometry, cfg,
                                 rec.sample_rate, rec.n_samples, log)


def map_unit_correspondence(result_a: SortResult, result_b: SortResult,
                            geometry: ProbeGeometry, cfg: SorterConfig):
    """Best displacement and unit pairing between two results' unit sets."""
    amps_a = np.vstack([u.amplitude for u in result_a.units]) \
        if result_a.units else np.zeros((0, geometry.n_channels))
    amps_b = np.vstack([u.amplitude for u in result_b.units]) \
        if result_b.units else np.zeros((0, geometry.n_channels))
    if len(amps_a) == 0 or len(amps_b) == 0:
        return None
    return best_shift(amps_a, amps_b, make_shift_grid(cfg.d_max_um), geometry)


# --------------------------------------------------------------------------
# segment-sort files (the hook path's interchange format)


def save_segment_sort(seg: SegmentSort, sample_rate: float,
                      path: str | Path) -> None:
    doc = {
        "start": int(seg.start),
        "end": int(seg.end),
        "sample_rate": sample_rate,
        "units": [
            {
                "local_id": u.local_id,
                "ref_channel": int(u.ref_channel),
                "channels": np.asarray(u.channels).tolist(),
                "spikes": np.asarray(u.spikes).tolist(),
                "template": np.asarray(u.template).tolist(),
                "snippet": np.asarray(u.snippet).tolist(),
                "amplitude": np.asarray(u.amplitude).tolist(),
            }
            for u in seg.units
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_segment_sort(path: str | Path) -> tuple[SegmentSort, float]:
    with open(path) as fh:
        doc = json.load(fh)
    units = [
        SegmentUnit(
            local_id=d["local_id"],
            spikes=np.asarray(d["spikes"], dtype=np.int64),
            ref_channel=d["ref_channel"],
            channels=np.asarray(d["channels"], dtype=np.int64),
            template=np.asarray(d["template"], dtype=np.float64),
            snippet=np.asarray(d["snippet"], dtype=np.float64),
            amplitude=np.asarray(d["amplitude"], dtype=np.float64),
        )
        for d in doc["units"]
    ]
    seg = SegmentSort(start=doc["start"], end=doc["end"], units=units)
    return seg, doc["sample_rate"]


# --------------------------------------------------------------------------
# merging two sorted recordings recorded back to back


def concatenate_results(first: SortResult, second: SortResult,
                        geometry: ProbeGeometry,
                        cfg: SorterConfig) -> SortResult:
    """Stitch two consecutive recordings' results into one.

    The second result's sample times shift by the first's length; its units
    inherit the first result's global ids where the boundary-pair matching
    (with the usual acceptance gate) links them.
    """
    offset = first.total_samples
    remap: dict[int, int] = {}
    boundary_shift = 0.0
    if (first.segments and second.segments
            and first.segments[-1].units and second.segments[0].units):
        last = first.segments[-1]
        head = second.segments[0]
        amps_a = np.vstack([m.amplitude for m in last.units])
        amps_b = np.vstack([m.amplitude for m in head.units])
        match = best_shift(amps_a, amps_b, make_shift_grid(cfg.d_max_um),
                           geometry)
        boundary_shift = match.delta
        for (i, j), d in zip(match.pairs, match.pair_dists):
            gate = cfg.mu * max(np.linalg.norm(match.shifted_a[i]),
                                np.linalg.norm(match.shifted_b[j]))
            if d <= gate:
                remap[head.units[j].global_id] = last.units[i].global_id

    next_gid = len(first.units)
    for u in second.units:
        if u.unit_id not in remap:
            remap[u.unit_id] = next_gid
            next_gid += 1

    units = [SortedUnit(unit_id=u.unit_id, spikes=u.spikes.copy(),
                        ref_channel=u.ref_channel, channels=u.channels,
                        template=u.template, snippet=u.snippet,
                        amplitude=u.amplitude, origin=u.origin)
             for u in first.units]
    by_gid = {u.unit_id: u for u in units}
    seg_base = len(first.segments)
    for u in sorted(second.units, key=lambda v: remap[v.unit_id]):
        gid = remap[u.unit_id]
        shifted = u.spikes + offset
        if gid in by_gid:
            by_gid[gid].spikes = np.concatenate([by_gid[gid].spikes, shifted])
        else:
            new = SortedUnit(unit_id=gid, spikes=shifted,
                             ref_channel=u.ref_channel, channels=u.channels,
                             template=u.template, snippet=u.snippet,
                             amplitude=u.amplitude,
                             origin=(u.origin[0] + seg_base, u.origin[1]))
            units.append(new)
            by_gid[gid] = new

    segments = list(first.segments)
    for k, s in enumerate(second.segments):
        segments.append(SegmentInfo(
            start=s.start + offset, end=s.end + offset,
            shift_um=boundary_shift if k == 0 else s.shift_um,
            units=[SegmentMatch(local_id=m.local_id,
                                global_id=remap[m.global_id],
                                amplitude=m.amplitude)
                   for m in s.units]))
    boundaries = (list(first.boundaries) + [offset]
                  + [b + offset for b in second.boundaries])
    return SortResult(units=units, boundaries=boundaries, segments=segments,
                      sample_rate=first.sample_rate,
                      total_samples=first.total_samples + second.total_samples)
