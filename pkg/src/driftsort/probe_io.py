"""Recording/probe file IO, channel-neighborhood queries, result serialization.

On-disk formats:
  signal   `<name>.raw`: int16 little-endian, frame-interleaved (sample-major),
           no header; the sample rate is supplied out of band.
  probe    `<name>.probe`: text lines `channel <id> <x_um> <y_um>`.
  results  directory with `spikes.csv` (unit_id,sample_index) and `units.json`
           (templates, amplitude vectors, boundaries, per-segment match table).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Malformed or inconsistent input data."""


# --------------------------------------------------------------------------
# probe geometry


@dataclass(frozen=True)
class ProbeGeometry:
    """Electrode layout; drift is modeled along the axial (y) direction only."""

    x: np.ndarray  # um, shape (C,), indexed by channel id
    y: np.ndarray  # um, shape (C,)

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))
        if self.x.ndim != 1 or self.x.shape != self.y.shape or self.x.size == 0:
            raise FormatError("probe needs matching non-empty x/y arrays")
        pos = set(zip(self.x.tolist(), self.y.tolist()))
        if len(pos) != self.x.size:
            raise FormatError("two channels share one position")

    @property
    def n_channels(self) -> int:
        return self.x.size

    def distances_from(self, c: int) -> np.ndarray:
        return np.hypot(self.x - self.x[c], self.y - self.y[c])


def nearest_channels(geometry: ProbeGeometry, c: int, k: int) -> np.ndarray:
    """The k channel ids closest to channel c (c first; ties to lower id)."""
    if not 0 <= c < geometry.n_channels:
        raise FormatError(f"unknown channel id {c}")
    if not 1 <= k <= geometry.n_channels:
        raise ValueError(f"k={k} out of range for {geometry.n_channels} channels")
    d = geometry.distances_from(c)
    order = np.lexsort((np.arange(geometry.n_channels), d))
    return order[:k].astype(np.int64)


def load_probe(path: str | Path) -> ProbeGeometry:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "channel":
            raise FormatError(f"{path}: bad probe line {lineno}: {line!r}")
        try:
            cid, cx, cy = int(parts[1]), float(parts[2]), float(parts[3])
        except ValueError:
            raise FormatError(f"{path}: bad probe line {lineno}: {line!r}") from None
        if cid in entries:
            raise FormatError(f"{path}: duplicate channel {cid}")
        entries[cid] = (cx, cy)
    if not entries:
        raise FormatError(f"{path}: no channels")
    if sorted(entries) != list(range(len(entries))):
        raise FormatError(f"{path}: channel ids must be dense 0..C-1")
    xs = np.array([entries[i][0] for i in range(len(entries))])
    ys = np.array([entries[i][1] for i in range(len(entries))])
    return ProbeGeometry(xs, ys)


def save_probe(geometry: ProbeGeometry, path: str | Path) -> None:
    lines = [
        f"channel {i} {geometry.x[i]:g} {geometry.y[i]:g}"
        for i in range(geometry.n_channels)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# recordings


@dataclass(frozen=True)
class Recording:
    """Channel-major int16 voltage trace plus its probe geometry."""

    samples: np.ndarray  # (C, T) int16; may be a transposed view
    sample_rate: float
    geometry: ProbeGeometry

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise FormatError("samples must be a (channels, samples) array")
        if self.samples.shape[0] != self.geometry.n_channels:
            raise FormatError("channel count does not match probe")
        if self.samples.shape[1] < 1:
            raise FormatError("empty recording")
        if self.sample_rate <= 0:
            raise FormatError("sample_rate must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


def load_recording(path_signal: str | Path, path_probe: str | Path,
                   sample_rate: float) -> Recording:
    """Load a frame-interleaved int16 .raw file against its probe file."""
    geometry = load_probe(path_probe)
    c = geometry.n_channels
    nbytes = Path(path_signal).stat().st_size
    if nbytes % (2 * c) != 0:
        raise FormatError(
            f"{path_signal}: truncated frame ({nbytes} bytes not divisible by "
            f"{2 * c} for {c} channels)")
    if nbytes == 0:
        raise FormatError(f"{path_signal}: empty recording")
    frames = np.fromfile(path_signal, dtype="<i2").reshape(-1, c)
    return Recording(samples=frames.T, sample_rate=float(sample_rate),
                     geometry=geometry)


def save_recording_raw(samples: np.ndarray, path: str | Path) -> None:
    """Write a (C, T) int16 array as frame-interleaved little-endian raw."""
    np.ascontiguousarray(samples.T, dtype="<i2").tofile(path)


# --------------------------------------------------------------------------
# sort results


@dataclass
class SortedUnit:
    """A globally stitched unit: spike train plus spatial signature."""

    unit_id: int
    spikes: np.ndarray        # global sample indices, strictly increasing
    ref_channel: int
    channels: np.ndarray      # neighborhood channel ids (template rows)
    template: np.ndarray      # (5, window) mean waveform on `channels`
    snippet: np.ndarray       # (C, window) full-probe mean waveform
    amplitude: np.ndarray     # (C,) per-channel peak negative deflection
    origin: tuple[int, int]   # (segment index, local id) of first appearance


@dataclass
class SegmentMatch:
    """Match-table row: one local unit of one segment."""

    local_id: int
    global_id: int
    amplitude: np.ndarray     # (C,) amplitude vector observed in this segment


@dataclass
class SegmentInfo:
    start: int
    end: int
    shift_um: float           # stitch displacement vs previous segment
    units: list[SegmentMatch] = field(default_factory=list)


@dataclass
class SortResult:
    units: list[SortedUnit]
    boundaries: list[int]     # interior segment boundaries, sample indices
    segments: list[SegmentInfo]
    sample_rate: float
    total_samples: int

    def __post_init__(self):
        for u in self.units:
            t = np.asarray(u.spikes)
            if t.size and not (np.all(np.diff(t) > 0)):
                raise FormatError(f"unit {u.unit_id}: spike times not increasing")
            if t.size and (t[0] < 0 or t[-1] >= self.total_samples):
                raise FormatError(f"unit {u.unit_id}: spike time out of range")


def write_results(result: SortResult, outdir: str | Path) -> None:
    """Emit spikes.csv and units.json into outdir (created if needed)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    rows = [(int(t), u.unit_id) for u in result.units for t in u.spikes]
    rows.sort()
    with open(outdir / "spikes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "sample_index"])
        writer.writerows((uid, t) for t, uid in rows)

    doc = {
        "sample_rate": result.sample_rate,
        "total_samples": result.total_samples,
        "boundaries": [int(b) for b in result.boundaries],
        "units": [
            {
                "unit_id": u.unit_id,
                "ref_channel": int(u.ref_channel),
                "channels": np.asarray(u.channels).tolist(),
                "origin": list(u.origin),
                "spikes": np.asarray(u.spikes).tolist(),
                "template": np.asarray(u.template).tolist(),
                "snippet": np.asarray(u.snippet).tolist(),
                "amplitude": np.asarray(u.amplitude).tolist(),
            }
            for u in result.units
        ],
        "segments": [
            {
                "start": int(s.start),
                "end": int(s.end),
                "shift_um": s.shift_um,
                "units": [
                    {
                        "local_id": m.local_id,
                        "global_id": m.global_id,
                        "amplitude": np.asarray(m.amplitude).tolist(),
                    }
                    for m in s.units
                ],
            }
            for s in result.segments
        ],
    }
    with open(outdir / "units.json", "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_results(outdir: str | Path) -> SortResult:
    with open(Path(outdir) / "units.json") as fh:
        doc = json.load(fh)
    units = [
        SortedUnit(
            unit_id=d["unit_id"],
            spikes=np.asarray(d["spikes"], dtype=np.int64),
            ref_channel=d["ref_channel"],
            channels=np.asarray(d["channels"], dtype=np.int64),
            template=np.asarray(d["template"], dtype=np.float64),
            snippet=np.asarray(d["snippet"], dtype=np.float64),
            amplitude=np.asarray(d["amplitude"], dtype=np.float64),
            origin=tuple(d["origin"]),
        )
        for d in doc["units"]
    ]
    segments = [
        SegmentInfo(
            start=d["start"],
            end=d["end"],
            shift_um=d["shift_um"],
            units=[
                SegmentMatch(m["local_id"], m["global_id"],
                             np.asarray(m["amplitude"], dtype=np.float64))
                for m in d["units"]
            ],
        )
        for d in doc["segments"]
    ]
    return SortResult(units=units, boundaries=list(doc["boundaries"]),
                      segments=segments, sample_rate=doc["sample_rate"],
                      total_samples=doc["total_samples"])
