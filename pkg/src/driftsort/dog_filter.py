"""Bandpass filtering via a difference of two four-stage box-filter cascades.

Each cascade of four width-w box filters approximates a Gaussian blur; the
narrow cascade minus the wide cascade approximates a 300-3000 Hz bandpass.
Box sums over integer input are accumulated exactly in int64 with a single
final division, so a filtered slice is bit-identical whether the slice was
cut before or after filtering (given enough raw context, see filter_margin).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probe_io import Recording

CASCADE_STAGES = 4


@dataclass(frozen=True)
class DogKernelSpec:
    """Box widths (odd, samples) of the narrow and wide cascades."""

    w_high_cut: int  # narrow boxes, set by the upper band edge
    w_low_cut: int   # wide boxes, set by the lower band edge
    f_s: float

    def __post_init__(self):
        for w in (self.w_high_cut, self.w_low_cut):
            if w < 3 or w % 2 == 0:
                raise ValueError(f"box width {w} must be an odd integer >= 3")
        if self.w_low_cut <= self.w_high_cut:
            raise ValueError("wide cascade must be wider than narrow cascade")


def _box_width(f_cut: float, f_s: float) -> int:
    # Gaussian -3 dB point: sigma = f_s*sqrt(ln 2)/(2*pi*f_cut); four boxes of
    # width w have total variance (w^2-1)/3, matched to sigma^2.
    sigma = f_s * np.sqrt(np.log(2.0)) / (2.0 * np.pi * f_cut)
    target = np.sqrt(3.0 * sigma * sigma + 1.0)
    w = 2 * int(round((target - 1.0) / 2.0)) + 1
    return max(3, w)


def design_kernel(f_low: float, f_high: float, f_s: float) -> DogKernelSpec:
    """Pick cascade widths approximating the [f_low, f_high] band at f_s."""
    if not 0 < f_low < f_high < f_s / 2:
        raise ValueError(f"invalid band [{f_low}, {f_high}] at f_s={f_s}")
    w_high = _box_width(f_high, f_s)
    w_low = _box_width(f_low, f_s)
    if w_low <= w_high:
        raise ValueError(
            f"band [{f_low}, {f_high}] too narrow at f_s={f_s}: "
            f"both cascades round to width {w_high}")
    return DogKernelSpec(w_high_cut=w_high, w_low_cut=w_low, f_s=f_s)


def filter_margin(spec: DogKernelSpec) -> int:
    """Raw samples of context each filtered sample depends on, per side."""
    return CASCADE_STAGES * (spec.w_low_cut - 1) // 2


def unreliable_edge(spec: DogKernelSpec) -> int:
    """Samples at each recording end contaminated by the zero padding."""
    return 2 * spec.w_low_cut


def box_pass(signal: np.ndarray, w: int) -> np.ndarray:
    """Centered moving average of odd width w, zero-padded at the edges."""
    if w < 1 or w % 2 == 0:
        raise ValueError(f"width {w} must be odd and positive")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("box_pass expects a 1-D series")
    if w == 1:
        return x.copy()
    k = w // 2
    padded = np.concatenate([np.zeros(k), x, np.zeros(k)])
    cs = np.concatenate([[0.0], np.cumsum(padded)])
    return (cs[w:] - cs[:-w]) / w


def _box_sum_cascade(x: np.ndarray, w: int, stages: int = CASCADE_STAGES) -> np.ndarray:
    """Unnormalized box-sum cascade over int64 input; exact integer output."""
    k = w // 2
    for _ in range(stages):
        padded = np.concatenate([np.zeros(k, dtype=np.int64), x,
                                 np.zeros(k, dtype=np.int64)])
        cs = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(padded)])
        x = cs[w:] - cs[:-w]
    return x


def dog_filter_channel(x: np.ndarray, spec: DogKernelSpec) -> np.ndarray:
    """Filter one channel of integer samples; float64 output."""
    xi = np.asarray(x, dtype=np.int64)
    narrow = _box_sum_cascade(xi, spec.w_high_cut)
    wide = _box_sum_cascade(xi, spec.w_low_cut)
    return (narrow / float(spec.w_high_cut) ** CASCADE_STAGES
            - wide / float(spec.w_low_cut) ** CASCADE_STAGES)


def apply_dog(rec: Recording, spec: DogKernelSpec, *, invert: bool = False,
              dtype=np.float32) -> Recording:
    """Bandpass every channel; returns a float Recording of the same shape.

    dtype=float32 keeps the working set half the size; pass float64 when
    downstream analysis needs the full precision of the cascade arithmetic.
    """
    out = np.empty(rec.samples.shape, dtype=dtype)
    sign = -1.0 if invert else 1.0
    for c in range(rec.n_channels):
        out[c] = sign * dog_filter_channel(rec.samples[c], spec)
    return Recording(samples=out, sample_rate=rec.sample_rate,
                     geometry=rec.geometry)


def impulse_response(spec: DogKernelSpec, half_length: int | None = None) -> np.ndarray:
    """Symmetric impulse response of the filter, for spectrum checks."""
    if half_length is None:
        half_length = 2 * filter_margin(spec)
    n = 2 * half_length + 1
    imp = np.zeros(n, dtype=np.int64)
    imp[half_length] = 1
    return dog_filter_channel(imp, spec)


def gain_at(h: np.ndarray, f: float, f_s: float) -> float:
    """Magnitude response of impulse response h at one frequency."""
    t = np.arange(h.size)
    return float(abs(np.sum(h * np.exp(-2j * np.pi * f * t / f_s))))
