"""Drift-resilient spike sorting on standard CPUs.

The pipeline splits a recording at drift-induced amplitude fluctuations,
sorts each segment with an iterative detect-and-subtract scheme, and stitches
unit identities across segments by aligning per-channel amplitude vectors
under simulated axial displacements.
"""

from .config import SorterConfig, load_config
from .detection import PeakTrain, build_peak_train, detect_peaks, mad_threshold
from .dog_filter import DogKernelSpec, apply_dog, box_pass, design_kernel
from .evaluator import UnitScore, match_spike_trains, score_units, summarize
from .pipeline import (concatenate_results, merge_sorted_segments,
                       sort_one_segment, sort_recording, split_into_segments)
from .probe_io import (FormatError, ProbeGeometry, Recording, SortedUnit,
                       SortResult, load_probe, load_recording, load_results,
                       nearest_channels, save_probe, write_results)
from .segmentation import plan_segmentation
from .sifter import (SegmentSort, SegmentUnit, binary_split_cluster,
                     cluster_1d, difference_vector, principal_projection,
                     same_neuron, sort_segment, subtract_unit,
                     template_filter)
from .stitcher import (amplitude_vector, best_shift, make_shift_grid,
                       matching_cost, shift_amplitudes, stitch)
from .synthgen import DriftSpec, GenSpec, GroundTruth, generate, load_truth

__version__ = "0.1.0"
