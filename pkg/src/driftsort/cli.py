"""Command-line entry point.

Subcommands: sort, segment, sort-segment, merge, map, generate, eval, info.
Parameters come from defaults, then an optional key=value config file, then
flags. Exit status: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import SorterConfig, load_config
from .evaluator import score_units, summarize
from .probe_io import (FormatError, load_probe, load_recording, load_results,
                       save_probe, save_recording_raw, write_results)
from .synthgen import DriftSpec, GenSpec, generate, load_truth, save_truth


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("sorter parameters (override config file)")
    g.add_argument("--config", metavar="FILE", help="key = value config file")
    g.add_argument("--kappa", type=float)
    g.add_argument("--lambda", dest="merge_lambda", type=float,
                   help="cluster merge threshold")
    g.add_argument("--n-min", dest="n_min", type=int)
    g.add_argument("--l-min", dest="l_min_seconds", type=float,
                   help="minimum segment duration, seconds")
    g.add_argument("--d-max", dest="d_max_um", type=float,
                   help="maximum stitching displacement, um")
    g.add_argument("--mu", type=float, help="cross-segment match gate")
    g.add_argument("--band-low", dest="band_low_hz", type=float)
    g.add_argument("--band-high", dest="band_high_hz", type=float)
    g.add_argument("--invert-polarity", dest="invert_polarity",
                   action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--tol-ms", dest="tol_ms", type=float)
    g.add_argument("--threads", type=int)
    return p


def _cfg_from(args: argparse.Namespace) -> SorterConfig:
    keys = ("kappa", "merge_lambda", "n_min", "l_min_seconds", "d_max_um",
            "mu", "band_low_hz", "band_high_hz", "invert_polarity", "tol_ms",
            "threads")
    return load_config(args.config,
                       **{k: getattr(args, k, None) for k in keys})


def _add_recording_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="signal", required=True, metavar="RAW",
                   help="int16 little-endian frame-interleaved signal")
    p.add_argument("--probe", required=True, metavar="PROBE",
                   help="probe geometry file")
    p.add_argument("--sample-rate", type=float, required=True, metavar="HZ")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _cmd_sort(args) -> int:
    cfg = _cfg_from(args)
    rec = load_recording(args.signal, args.probe, args.sample_rate)
    log = pipeline.PhaseLog(emit=_log)
    result = pipeline.sort_recording(rec, cfg, log)
    write_results(result, args.out)
    _log(f"driftsort: wrote {len(result.units)} units to {args.out}")
    return 0


def _cmd_segment(args) -> int:
    cfg = _cfg_from(args)
    rec = load_recording(args.signal, args.probe, args.sample_rate)
    log = pipeline.PhaseLog(emit=_log)
    manifest, _ = pipeline.split_into_segments(rec, cfg, log)
    if args.out:
        pipeline.save_manifest(manifest, args.out)
    print(f"boundaries {len(manifest.boundaries)}")
    for b in manifest.boundaries:
        print(f"{b} {b / rec.sample_rate:.3f}")
    return 0


def _cmd_sort_segment(args) -> int:
    cfg = _cfg_from(args)
    manifest = pipeline.load_manifest(args.manifest)
    rec = load_recording(args.signal, args.probe, manifest.sample_rate)
    if args.index is not None:
        ranges = manifest.ranges()
        if not 0 <= args.index < len(ranges):
            raise FormatError(f"segment index {args.index} out of range "
                              f"(have {len(ranges)} segments)")
        start, end = ranges[args.index]
    elif args.start is not None and args.end is not None:
        start, end = args.start, args.end
    else:
        raise FormatError("need --index or both --start and --end")
    seg = pipeline.sort_one_segment(rec, manifest, start, end, cfg)
    pipeline.save_segment_sort(seg, manifest.sample_rate, args.out)
    _log(f"driftsort: segment [{start}, {end}) -> {len(seg.units)} units")
    return 0


def _cmd_merge(args) -> int:
    cfg = _cfg_from(args)
    geometry = load_probe(args.probe)
    paths = [Path(p) for p in args.inputs]
    if all(p.is_dir() for p in paths):
        if len(paths) < 2:
            raise FormatError("merging results needs at least two directories")
        result = load_results(paths[0])
        for p in paths[1:]:
            result = pipeline.concatenate_results(result, load_results(p),
                                                  geometry, cfg)
    elif all(p.is_file() for p in paths):
        loaded = [pipeline.load_segment_sort(p) for p in paths]
        rate = loaded[0][1]
        segs = sorted((s for s, _ in loaded), key=lambda s: s.start)
        total = max(s.end for s in segs)
        result = pipeline.merge_sorted_segments(segs, geometry, cfg, rate,
                                                total)
    else:
        raise FormatError("merge inputs must be all result directories or "
                          "all segment files")
    write_results(result, args.out)
    _log(f"driftsort: merged {len(paths)} inputs -> {len(result.units)} units")
    return 0


def _cmd_map(args) -> int:
    cfg = _cfg_from(args)
    geometry = load_probe(args.probe)
    res_a = load_results(args.result_a)
    res_b = load_results(args.result_b)
    match = pipeline.map_unit_correspondence(res_a, res_b, geometry, cfg)
    if match is None:
        print("shift_um 0.0")
        print("pairs 0")
        return 0
    print(f"shift_um {match.delta:g}")
    print(f"pairs {len(match.pairs)}")
    print("unit_a,unit_b,distance,accepted")
    for (i, j), d in zip(match.pairs, match.pair_dists):
        gate = cfg.mu * max(np.linalg.norm(match.shifted_a[i]),
                            np.linalg.norm(match.shifted_b[j]))
        uid_a = res_a.units[i].unit_id
        uid_b = res_b.units[j].unit_id
        print(f"{uid_a},{uid_b},{d:.6g},{int(d <= gate)}")
    return 0


def _cmd_generate(args) -> int:
    spec = GenSpec(
        n_neurons=args.neurons, seconds=args.seconds,
        noise_sigma=args.noise, drift=DriftSpec.parse(args.drift),
        seed=args.seed, sample_rate=args.sample_rate,
        n_channels=args.channels,
        amplitude_mad=(args.amp_lo, args.amp_hi),
        rate_hz=(args.rate_lo, args.rate_hi))
    rec, truth = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_recording_raw(rec.samples, out / "rec.raw")
    save_probe(rec.geometry, out / "probe.probe")
    save_truth(truth, out / "truth.json")
    n_spikes = sum(len(n.spikes) for n in truth.neurons)
    _log(f"driftsort: generated {spec.n_channels}ch x {spec.seconds:g}s, "
         f"{spec.n_neurons} neurons, {n_spikes} spikes -> {out}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _cfg_from(args)
    result = load_results(args.result)
    truth = load_truth(args.truth)
    tol = int(round(cfg.tol_ms * 1e-3 * result.sample_rate))
    unit_trains = [(u.unit_id, u.spikes) for u in result.units]
    truth_trains = [(i, n.spikes) for i, n in enumerate(truth.neurons)]
    scores = score_units(unit_trains, truth_trains, tol)
    print("unit_id,neuron_id,n_spikes,fp,fn,score,label")
    for s in scores:
        neuron = "" if s.neuron_id is None else s.neuron_id
        print(f"{s.unit_id},{neuron},{s.n_spikes},{s.fp:.4f},{s.fn:.4f},"
              f"{s.score:.4f},{s.label}")
    counts = summarize(scores, len(truth.neurons))
    print(f"# identified={counts['identified']} "
          f"unclassified={counts['unclassified']} "
          f"spurious={counts['spurious']} units={counts['units']} "
          f"neurons={counts['neurons']} missed={counts['missed']}")
    return 0


def _cmd_info(args) -> int:
    rec = load_recording(args.signal, args.probe, args.sample_rate)
    g = rec.geometry
    print(f"channels {rec.n_channels}")
    print(f"samples {rec.n_samples}")
    print(f"sample_rate {rec.sample_rate:g}")
    print(f"duration_s {rec.duration:.3f}")
    print(f"probe_extent_um x [{g.x.min():g}, {g.x.max():g}] "
          f"y [{g.y.min():g}, {g.y.max():g}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftsort",
        description="Drift-resilient spike sorting on standard CPUs.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _config_parent()

    p = sub.add_parser("sort", parents=[common],
                       help="run the full pipeline on a recording")
    _add_recording_args(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_sort)

    p = sub.add_parser("segment", parents=[common],
                       help="report adaptive segment boundaries")
    _add_recording_args(p)
    p.add_argument("--out", metavar="MANIFEST",
                   help="write a segmentation manifest for sort-segment")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("sort-segment", parents=[common],
                       help="sort one segment of a recording")
    p.add_argument("--in", dest="signal", required=True, metavar="RAW")
    p.add_argument("--probe", required=True)
    p.add_argument("--manifest", required=True,
                   help="manifest written by `segment --out`")
    p.add_argument("--index", type=int, help="segment index in the manifest")
    p.add_argument("--start", type=int, help="segment start sample")
    p.add_argument("--end", type=int, help="segment end sample")
    p.add_argument("--out", required=True, metavar="SEGJSON")
    p.set_defaults(func=_cmd_sort_segment)

    p = sub.add_parser("merge", parents=[common],
                       help="stitch segment files, or concatenate two results")
    p.add_argument("inputs", nargs="+",
                   help="segment .json files, or >=2 result directories")
    p.add_argument("--probe", required=True)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("map", parents=[common],
                       help="report unit correspondence between two results")
    p.add_argument("result_a")
    p.add_argument("result_b")
    p.add_argument("--probe", required=True)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("generate", parents=[common],
                       help="synthesize a ground-truth recording")
    p.add_argument("--neurons", type=int, default=10)
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--noise", type=float, default=100.0,
                   help="noise sigma in ADC units")
    p.add_argument("--drift", default="none",
                   help="none | linear:<um_per_min> | jump:<um>@<s> | gp[:<span>]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--sample-rate", type=float, default=20000.0)
    p.add_argument("--amp-lo", type=float, default=8.0,
                   help="lowest neuron amplitude, x raw MAD")
    p.add_argument("--amp-hi", type=float, default=15.0)
    p.add_argument("--rate-lo", type=float, default=1.0)
    p.add_argument("--rate-hi", type=float, default=50.0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", parents=[common],
                       help="score a result directory against ground truth")
    p.add_argument("--result", required=True, metavar="DIR")
    p.add_argument("--truth", required=True, metavar="TRUTHJSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("info", parents=[common],
                       help="print recording metadata")
    _add_recording_args(p)
    p.set_defaults(func=_cmd_info)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"driftsort: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
