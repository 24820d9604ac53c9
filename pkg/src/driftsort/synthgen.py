"""Synthetic recordings with exact ground truth for oracles and experiments.

Each neuron fires a biphasic template (negative lobe, then a smaller positive
lobe, about half a millisecond wide) whose per-channel amplitude falls off
with distance as 1/(1 + d/25um)^2, normalized so the stated amplitude is what
the initially nearest channel records. Drift moves neuron positions along
the probe axis; spike trains are Poisson with a 2 ms refractory period.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .probe_io import ProbeGeometry, Recording

DECAY_UM = 25.0
REFRACTORY_S = 0.002
MIN_SEPARATION_UM = 15.0
EDGE_PAD_S = 0.01  # keep spikes clear of the recording ends
RAW_MAD_PER_SIGMA = 0.6744897501960817  # MAD of a unit Gaussian


@dataclass(frozen=True)
class DriftSpec:
    """Axial drift trajectory: none, linear, one abrupt jump, or smooth random."""

    kind: str = "none"
    rate_um_per_min: float = 0.0
    jump_um: float = 0.0
    jump_at_s: float = 0.0
    span_um: float = 25.0

    @staticmethod
    def parse(text: str) -> "DriftSpec":
        """Parse CLI syntax: none | linear:<um_per_min> | jump:<um>@<s> | gp[:<span_um>]."""
        kind, _, arg = text.partition(":")
        if kind == "none":
            return DriftSpec()
        if kind == "linear":
            return DriftSpec(kind="linear", rate_um_per_min=float(arg))
        if kind == "jump":
            size, _, at = arg.partition("@")
            return DriftSpec(kind="jump", jump_um=float(size), jump_at_s=float(at))
        if kind == "gp":
            return DriftSpec(kind="gp", span_um=float(arg) if arg else 25.0)
        raise ValueError(f"unknown drift spec {text!r}")

    def describe(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "linear":
            return f"linear:{self.rate_um_per_min:g}"
        if self.kind == "jump":
            return f"jump:{self.jump_um:g}@{self.jump_at_s:g}"
        return f"gp:{self.span_um:g}"


@dataclass(frozen=True)
class GenSpec:
    n_neurons: int = 10
    seconds: float = 60.0
    noise_sigma: float = 100.0       # ADC units
    drift: DriftSpec = field(default_factory=DriftSpec)
    seed: int = 0
    sample_rate: float = 20000.0
    n_channels: int = 16
    amplitude_mad: tuple[float, float] = (8.0, 15.0)  # x raw-signal MAD
    rate_hz: tuple[float, float] = (1.0, 50.0)


@dataclass
class NeuronTruth:
    x: float
    y: float
    amplitude: float          # ADC peak on the initially nearest channel
    rate_hz: float
    spikes: np.ndarray        # sample indices


@dataclass
class GroundTruth:
    neurons: list[NeuronTruth]
    noise_sigma: float
    sample_rate: float
    n_samples: int
    drift: DriftSpec
    seed: int


def two_column_probe(n_channels: int = 16, pitch_um: float = 15.0,
                     gap_um: float = 32.0) -> ProbeGeometry:
    """Two columns, row-interleaved ids, 15 um pitch, 32 um column spacing."""
    ids = np.arange(n_channels)
    return ProbeGeometry(x=gap_um * (ids % 2), y=pitch_um * (ids // 2))


def spike_template(sample_rate: float, rise_ms: float = 0.1,
                   fall_ms: float = 0.1, delay_ms: float = 0.25,
                   ratio: float = 0.4, rebound_width_ms: float = 0.15) -> np.ndarray:
    """Unit-amplitude biphasic spike shape with its minimum at the center.

    An asymmetric negative lobe (separate rise/fall widths) followed by a
    smaller positive rebound; the parameters vary per neuron so that units
    differ in shape, not just in scale.
    """
    half = int(round(1e-3 * sample_rate))
    t = (np.arange(2 * half + 1) - half) / sample_rate
    width = np.where(t < 0, rise_ms, fall_ms) * 1e-3
    shape = (-np.exp(-t**2 / (2 * width**2))
             + ratio * np.exp(-(t - delay_ms * 1e-3)**2
                              / (2 * (rebound_width_ms * 1e-3)**2)))
    shape /= abs(shape.min())
    return np.roll(shape, half - int(np.argmin(shape)))


def _draw_template(sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    # trough widths of a few samples at 20 kHz, like real extracellular spikes
    return spike_template(sample_rate,
                          rise_ms=rng.uniform(0.08, 0.13),
                          fall_ms=rng.uniform(0.11, 0.18),
                          delay_ms=rng.uniform(0.25, 0.4),
                          ratio=rng.uniform(0.25, 0.5),
                          rebound_width_ms=rng.uniform(0.12, 0.22))


def _poisson_train(rate_hz: float, t_lo: float, t_hi: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Dead-time-corrected Poisson spike times (seconds) in [t_lo, t_hi)."""
    corrected = rate_hz / (1.0 - rate_hz * REFRACTORY_S)
    times = []
    t = t_lo
    while True:
        t += REFRACTORY_S + rng.exponential(1.0 / corrected)
        if t >= t_hi:
            break
        times.append(t)
    return np.array(times)


def _place_neurons(n: int, geometry: ProbeGeometry,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    x_lo, x_hi = geometry.x.min() - 10.0, geometry.x.max() + 10.0
    y_lo, y_hi = geometry.y.min(), geometry.y.max()
    xs: list[float] = []
    ys: list[float] = []
    attempts = 0
    while len(xs) < n:
        attempts += 1
        if attempts > 10000:
            raise ValueError(
                f"cannot place {n} neurons >= {MIN_SEPARATION_UM} um apart "
                f"in the probe area")
        px = rng.uniform(x_lo, x_hi)
        py = rng.uniform(y_lo, y_hi)
        if all(np.hypot(px - qx, py - qy) >= MIN_SEPARATION_UM
               for qx, qy in zip(xs, ys)):
            xs.append(px)
            ys.append(py)
    return np.array(xs), np.array(ys)


def _gp_offsets(duration_s: float, span_um: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Smooth random trajectory sampled at 10 Hz, scaled to span peak-to-peak."""
    grid = np.arange(0.0, duration_s + 0.1, 0.1)
    walk = np.cumsum(rng.standard_normal(grid.size))
    smooth = gaussian_filter1d(walk, sigma=30.0)
    smooth -= smooth[0]
    ptp = smooth.max() - smooth.min()
    if ptp > 0:
        smooth *= span_um / ptp
    return grid, smooth


def _decay(dist_um: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + dist_um / DECAY_UM) ** 2


def generate(spec: GenSpec) -> tuple[Recording, GroundTruth]:
    """Deterministic synthetic recording plus its exact ground truth."""
    geometry = two_column_probe(spec.n_channels)
    rng_layout = np.random.default_rng([spec.seed, 0])
    rng_noise = np.random.default_rng([spec.seed, 1])
    rng_drift = np.random.default_rng([spec.seed, 2])

    n_samples = int(round(spec.seconds * spec.sample_rate))
    xs, ys = _place_neurons(spec.n_neurons, geometry, rng_layout)
    amp_scale = RAW_MAD_PER_SIGMA * spec.noise_sigma if spec.noise_sigma > 0 else 1.0
    amplitudes = rng_layout.uniform(*spec.amplitude_mad, spec.n_neurons) * amp_scale
    rates = rng_layout.uniform(*spec.rate_hz, spec.n_neurons)
    trains_s = [_poisson_train(rates[i], EDGE_PAD_S, spec.seconds - EDGE_PAD_S,
                               rng_layout) for i in range(spec.n_neurons)]

    drift = spec.drift
    if drift.kind == "gp":
        gp_t, gp_y = _gp_offsets(spec.seconds, drift.span_um, rng_drift)

        def offset_at(t_s: np.ndarray) -> np.ndarray:
            return np.interp(t_s, gp_t, gp_y)
    elif drift.kind == "linear":
        def offset_at(t_s):
            return drift.rate_um_per_min * np.asarray(t_s) / 60.0
    elif drift.kind == "jump":
        def offset_at(t_s):
            return np.where(np.asarray(t_s) >= drift.jump_at_s, drift.jump_um, 0.0)
    else:
        def offset_at(t_s):
            return np.zeros_like(np.asarray(t_s, dtype=np.float64))

    shapes = [_draw_template(spec.sample_rate, rng_layout)
              for _ in range(spec.n_neurons)]
    half = shapes[0].size // 2
    data = np.zeros((spec.n_channels, n_samples), dtype=np.float64)
    neurons = []
    for i in range(spec.n_neurons):
        shape = shapes[i]
        base_dist = np.hypot(geometry.x - xs[i], geometry.y - ys[i])
        scale = amplitudes[i] / _decay(base_dist.min())
        t_s = trains_s[i]
        samples = np.round(t_s * spec.sample_rate).astype(np.int64)
        offsets = offset_at(t_s)
        for k, t in enumerate(samples):
            dist = np.hypot(geometry.x - xs[i], geometry.y - (ys[i] + offsets[k]))
            gains = scale * _decay(dist)
            data[:, t - half:t + half + 1] += gains[:, None] * shape[None, :]
        neurons.append(NeuronTruth(x=float(xs[i]), y=float(ys[i]),
                                   amplitude=float(amplitudes[i]),
                                   rate_hz=float(rates[i]), spikes=samples))

    if spec.noise_sigma > 0:
        for c in range(spec.n_channels):
            data[c] += rng_noise.normal(0.0, spec.noise_sigma, n_samples)
    quantized = np.clip(np.rint(data), -32768, 32767).astype(np.int16)
    rec = Recording(samples=quantized, sample_rate=spec.sample_rate,
                    geometry=geometry)
    truth = GroundTruth(neurons=neurons, noise_sigma=spec.noise_sigma,
                        sample_rate=spec.sample_rate, n_samples=n_samples,
                        drift=drift, seed=spec.seed)
    return rec, truth


def save_truth(truth: GroundTruth, path: str | Path) -> None:
    doc = {
        "sample_rate": truth.sample_rate,
        "n_samples": truth.n_samples,
        "noise_sigma": truth.noise_sigma,
        "drift": truth.drift.describe(),
        "seed": truth.seed,
        "neurons": [
            {"x": n.x, "y": n.y, "amplitude": n.amplitude, "rate_hz": n.rate_hz,
             "spikes": n.spikes.tolist()}
            for n in truth.neurons
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_truth(path: str | Path) -> GroundTruth:
    with open(path) as fh:
        doc = json.load(fh)
    neurons = [NeuronTruth(x=d["x"], y=d["y"], amplitude=d["amplitude"],
                           rate_hz=d["rate_hz"],
                           spikes=np.asarray(d["spikes"], dtype=np.int64))
               for d in doc["neurons"]]
    return GroundTruth(neurons=neurons, noise_sigma=doc["noise_sigma"],
                       sample_rate=doc["sample_rate"],
                       n_samples=doc["n_samples"],
                       drift=DriftSpec.parse(doc["drift"]), seed=doc["seed"])
