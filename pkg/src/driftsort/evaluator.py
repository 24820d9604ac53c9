"""Score sorted units against ground truth: Score = 1 - FP - FN.

Spike trains match one-to-one within a timing tolerance; unit-neuron pairs
are then assigned greedily by descending score. Units scoring above 0.95
count as identified, below 0.8 (or left unassigned) as spurious, and
anything between stays unclassified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTIFIED_SCORE = 0.95
SPURIOUS_SCORE = 0.8


def match_spike_trains(detected: np.ndarray, truth: np.ndarray,
                       tol_samples: int) -> int:
    """Maximum one-to-one matches with |t_d - t_g| <= tol; greedy in time."""
    i = j = matched = 0
    nd, nt = len(detected), len(truth)
    while i < nd and j < nt:
        d, t = detected[i], truth[j]
        if abs(int(d) - int(t)) <= tol_samples:
            matched += 1
            i += 1
            j += 1
        elif d < t:
            i += 1
        else:
            j += 1
    return matched


@dataclass
class UnitScore:
    unit_id: int
    neuron_id: int | None   # matched ground-truth neuron, if any
    n_spikes: int
    fp: float
    fn: float
    score: float
    label: str              # identified | unclassified | spurious


def _classify(score: float, assigned: bool) -> str:
    if not assigned or score < SPURIOUS_SCORE:
        return "spurious"
    if score > IDENTIFIED_SCORE:
        return "identified"
    return "unclassified"


def score_units(unit_trains: list[tuple[int, np.ndarray]],
                truth_trains: list[tuple[int, np.ndarray]],
                tol_samples: int) -> list[UnitScore]:
    """Score every unit against its greedily assigned ground-truth neuron."""
    n_u, n_g = len(unit_trains), len(truth_trains)
    score = np.full((n_u, n_g), -np.inf)
    fp = np.zeros((n_u, n_g))
    fn = np.zeros((n_u, n_g))
    for a, (_, du) in enumerate(unit_trains):
        for b, (_, tg) in enumerate(truth_trains):
            if len(du) == 0 or len(tg) == 0:
                continue
            m = match_spike_trains(du, tg, tol_samples)
            fp[a, b] = (len(du) - m) / len(du)
            fn[a, b] = (len(tg) - m) / len(tg)
            score[a, b] = 1.0 - fp[a, b] - fn[a, b]

    order = sorted(((a, b) for a in range(n_u) for b in range(n_g)),
                   key=lambda ab: (-score[ab], ab[0], ab[1]))
    unit_to_neuron: dict[int, int] = {}
    taken_units: set[int] = set()
    taken_neurons: set[int] = set()
    for a, b in order:
        if not np.isfinite(score[a, b]):
            continue
        if a in taken_units or b in taken_neurons:
            continue
        unit_to_neuron[a] = b
        taken_units.add(a)
        taken_neurons.add(b)

    results = []
    for a, (uid, du) in enumerate(unit_trains):
        if a in unit_to_neuron:
            b = unit_to_neuron[a]
            s = float(score[a, b])
            results.append(UnitScore(
                unit_id=uid, neuron_id=truth_trains[b][0], n_spikes=len(du),
                fp=float(fp[a, b]), fn=float(fn[a, b]), score=s,
                label=_classify(s, assigned=True)))
        else:
            results.append(UnitScore(
                unit_id=uid, neuron_id=None, n_spikes=len(du),
                fp=1.0, fn=1.0, score=-1.0,
                label=_classify(-1.0, assigned=False)))
    return results


def summarize(scores: list[UnitScore], n_neurons: int) -> dict:
    counts = {"identified": 0, "unclassified": 0, "spurious": 0}
    for s in scores:
        counts[s.label] += 1
    counts["units"] = len(scores)
    counts["neurons"] = n_neurons
    counts["missed"] = n_neurons - sum(
        1 for s in scores if s.label == "identified")
    return counts
