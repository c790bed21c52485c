"""Multi-algorithm comparison runs and report files.

``compare`` tunes every baseline on the training recordings, trains or
loads the learned filter, scores everything on the test recordings, and
assembles per-placement rows plus an average row per algorithm.
Aggregate rows combine recordings by root mean square per error
component, which keeps every row's total error equal to the hypotenuse
of its own roll and pitch columns.

Protocol isolation is enforced mechanically: test recordings are
wrapped in an access counter and the run fails if any algorithm reads a
test recording more or less than exactly once.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .baselines import run_filter
from .data import Recording
from .gainnet import GainNet
from .metrics import compute_metrics, euler_errors_deg
from .training import TrainConfig, train
from .tuning import tune_baseline

__all__ = [
    "CountedRecordings",
    "AlgorithmResult",
    "compare",
    "write_report",
    "write_trace",
]


class CountedRecordings:
    """Sequence of recordings that counts every access."""

    def __init__(self, recordings):
        self._recordings = list(recordings)
        self.counts = [0] * len(self._recordings)

    def __len__(self) -> int:
        return len(self._recordings)

    def __getitem__(self, i) -> Recording:
        self.counts[i] += 1
        return self._recordings[i]

    def peek_ids(self):
        """Identifiers without touching the counters."""
        return [r.rec_id for r in self._recordings]


@dataclass(frozen=True)
class ReportRow:
    algorithm: str
    placement: str
    config: str
    e_phi: float
    e_theta: float
    e: float
    n_recordings: int


@dataclass(frozen=True)
class AlgorithmResult:
    algorithm: str
    config: object
    rows: tuple
    per_recording: tuple  # ((rec_id, MetricsRow), ...)


def _config_label(algorithm: str, config) -> str:
    if algorithm == "dae":
        return "trained"
    if algorithm == "mahony":
        kp, ki = config
        return f"kp={kp:.6g} ki={ki:.6g}"
    if algorithm == "madgwick":
        return f"beta={float(config):.6g}"
    return f"k={float(config):.6g}"


def _aggregate_row(algorithm, placement, label, metrics_rows) -> ReportRow:
    e_phi = float(np.sqrt(np.mean([m.e_phi ** 2 for m in metrics_rows])))
    e_theta = float(np.sqrt(np.mean([m.e_theta ** 2 for m in metrics_rows])))
    return ReportRow(algorithm, placement, label, e_phi, e_theta,
                     math.hypot(e_phi, e_theta), len(metrics_rows))


def _resolve_config(algorithm, train_recordings, grids, dae_net,
                    train_config):
    if algorithm == "dae":
        if dae_net is not None:
            return dae_net
        cfg = train_config or TrainConfig(epochs=10, segment_length=1000)
        return train(list(train_recordings), cfg).net
    grid = (grids or {}).get(algorithm)
    return tune_baseline(algorithm, grid, train_recordings).best


def compare(algorithms, train_recordings, test_recordings, grids=None,
            dae_net: GainNet | None = None,
            train_config: TrainConfig | None = None):
    """Tune on train, evaluate on test, and build report rows.

    Returns (rows, results): ``rows`` is a flat list of ``ReportRow``
    covering every placement present plus an ``average`` row per
    algorithm; ``results`` maps algorithm name to ``AlgorithmResult``.
    """
    train_recordings = list(train_recordings)
    test_set = CountedRecordings(test_recordings)
    rows = []
    results = {}
    for algorithm in algorithms:
        config = _resolve_config(algorithm, train_recordings, grids,
                                 dae_net, train_config)
        before = list(test_set.counts)
        per_rec = []
        by_placement = {}
        for i in range(len(test_set)):
            rec = test_set[i]
            est = run_filter(algorithm, config, rec)
            m = compute_metrics(est, rec.gt)
            per_rec.append((rec.rec_id, m))
            by_placement.setdefault(rec.placement, []).append(m)
        taken = [c - b for c, b in zip(test_set.counts, before)]
        if any(t != 1 for t in taken):
            raise RuntimeError(
                f"protocol violation: {algorithm} accessed test "
                f"recordings {taken} times (expected once each)"
            )
        label = _config_label(algorithm, config)
        algo_rows = []
        for placement in sorted(by_placement):
            algo_rows.append(_aggregate_row(algorithm, placement, label,
                                            by_placement[placement]))
        algo_rows.append(_aggregate_row(algorithm, "average", label,
                                        [m for _, m in per_rec]))
        rows.extend(algo_rows)
        results[algorithm] = AlgorithmResult(algorithm, config,
                                             tuple(algo_rows),
                                             tuple(per_rec))
    return rows, results


def write_report(rows, path) -> None:
    """Write report rows as deterministic CSV."""
    with open(path, "w", newline="") as fh:
        fh.write("algorithm,placement,config,e_phi_deg,e_theta_deg,"
                 "e_deg,n_recordings\n")
        for r in rows:
            fh.write(f"{r.algorithm},{r.placement},{r.config},"
                     f"{r.e_phi:.9g},{r.e_theta:.9g},{r.e:.9g},"
                     f"{r.n_recordings}\n")


def write_trace(recording: Recording, estimated, path) -> None:
    """Per-timestep roll/pitch error trace for one recording (CSV)."""
    err = euler_errors_deg(estimated, recording.gt)
    with open(path, "w", newline="") as fh:
        fh.write("t,roll_err_deg,pitch_err_deg\n")
        for i in range(len(recording)):
            fh.write(f"{recording.t[i]:.9g},{err[i, 0]:.9g},"
                     f"{err[i, 1]:.9g}\n")


def trace_path(out_dir, algorithm: str, rec_id: str) -> str:
    return os.path.join(out_dir, f"trace_{algorithm}_{rec_id}.csv")
