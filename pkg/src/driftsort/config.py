"""Sorter configuration: defaults, config-file parsing, flag overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class SorterConfig:
    """Tunable parameters of the sorting pipeline.

    kappa          detection threshold in MAD units
    merge_lambda   relative distance below which two clusters are one neuron
    n_min          minimum spikes per accepted unit
    l_min_seconds  minimum segment duration
    d_max_um       largest probe displacement tested when stitching segments
    mu             relative gate on accepting a cross-segment unit match
    band_low_hz    lower edge of the filtering band
    band_high_hz   upper edge of the filtering band
    invert_polarity  flip signal sign before detection (positive-spike probes)
    tol_ms         spike-time matching tolerance used by the evaluator
    threads        worker threads for independent segments (1 = sequential)
    """

    kappa: float = 10.0
    merge_lambda: float = 0.4
    n_min: int = 5
    l_min_seconds: float = 10.0
    d_max_um: float = 30.0
    mu: float = 0.6
    band_low_hz: float = 300.0
    band_high_hz: float = 3000.0
    invert_polarity: bool = False
    tol_ms: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.kappa <= 0 or self.merge_lambda <= 0 or self.mu <= 0:
            raise ValueError("kappa, lambda and mu must be positive")
        if self.n_min < 1:
            raise ValueError("n_min must be at least 1")
        if self.l_min_seconds <= 0 or self.d_max_um <= 0 or self.tol_ms <= 0:
            raise ValueError("l_min_seconds, d_max_um and tol_ms must be positive")
        if not 0 < self.band_low_hz < self.band_high_hz:
            raise ValueError("require 0 < band_low_hz < band_high_hz")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


# config-file key -> dataclass field ("lambda" is a Python keyword)
_KEY_TO_FIELD = {f.name: f.name for f in dataclasses.fields(SorterConfig)}
_KEY_TO_FIELD["lambda"] = "merge_lambda"
del _KEY_TO_FIELD["merge_lambda"]

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _coerce(field_name: str, raw: str):
    kind = SorterConfig.__dataclass_fields__[field_name].type
    if kind == "bool":
        try:
            return _BOOL_WORDS[raw.strip().lower()]
        except KeyError:
            raise ValueError(f"bad boolean {raw!r} for {field_name}") from None
    if kind == "int":
        return int(raw)
    return float(raw)


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines (# comments allowed) into field overrides."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, raw = line.partition("=")
        else:
            key, _, raw = line.partition(" ")
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ValueError(f"unknown config key {key!r} (line {lineno})")
        field_name = _KEY_TO_FIELD[key]
        overrides[field_name] = _coerce(field_name, raw.strip())
    return overrides


def load_config(path: str | Path | None, **flag_overrides) -> SorterConfig:
    """Build a SorterConfig from an optional file plus flag overrides.

    Overrides with value None are ignored, so CLI flags can default to None.
    """
    overrides = {}
    if path is not None:
        overrides.update(parse_config_text(Path(path).read_text()))
    overrides.update({k: v for k, v in flag_overrides.items() if v is not None})
    return SorterConfig(**overrides)
