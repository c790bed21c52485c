"""Training pipeline: segmentation, SGD over unrolled filter gradients.

Recordings are cut into fixed-length segments, each segment is run
through the filter end to end, and the RMS gravity-angle loss is
backpropagated through the whole unroll to the gain-network parameters.
Batches average segment gradients; plain SGD updates the parameters.

A fraction of the segments is held out for validation and the returned
parameters are the checkpoint with the best validation loss, which
makes the epoch budget forgiving: training longer cannot make the
result worse.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import backend, so3
from .errors import RecordingTooShort
from .gainnet import RESIDUAL_MODES, GainNet

__all__ = [
    "TrainConfig",
    "TrainingSegment",
    "EpochRecord",
    "TrainResult",
    "segment_dataset",
    "perturb_initial_condition",
    "segment_loss",
    "train",
    "evaluate",
]

HISTORY_HEADER = "# epoch train_jf_rad val_jf_rad grad_norm"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and pipeline switches.

    The three flags mirror the pipeline ablations: ``ic_perturb``
    randomizes each segment's initial attitude inside ``ic_error_max``
    degrees, ``augmented`` feeds the gain networks the power expansion
    of the residual instead of the raw scalar, and ``shuffle`` breaks
    up the recording order when forming batches.
    """

    epochs: int
    seed: int = 0
    segment_length: int = 8000
    batch_size: int = 5
    learning_rate: float = 3e-4
    ic_error_deg: float = 0.1
    shuffle: bool = True
    ic_perturb: bool = True
    augmented: bool = True
    residual_mode: str = "signed-clamp"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.segment_length < 2:
            raise ValueError("segment_length must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.ic_error_deg < 0.0:
            raise ValueError("ic_error_deg must be >= 0")
        if self.residual_mode not in RESIDUAL_MODES:
            raise ValueError(f"unknown residual mode {self.residual_mode!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")

    @property
    def mode_code(self) -> int:
        return RESIDUAL_MODES.index(self.residual_mode)


@dataclass(frozen=True)
class TrainingSegment:
    """Kernel-ready arrays for one contiguous slice of a recording."""

    rec_id: str
    start: int
    r0_gt: NDArray[np.float64]
    dt: NDArray[np.float64]
    gyro: NDArray[np.float64]
    acc_g: NDArray[np.float64]
    g_gt: NDArray[np.float64]


@dataclass(frozen=True)
class EpochRecord:
    """One line of training history."""

    epoch: int
    train_jf: float
    val_jf: float
    grad_norm: float


@dataclass
class TrainResult:
    net: GainNet
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf


def segment_dataset(recordings, config: TrainConfig) -> list[TrainingSegment]:
    """Cut recordings into non-overlapping segments of exact length.

    The trailing remainder of each recording is dropped.  Segment order
    is a seeded permutation when ``config.shuffle`` is on, else the
    recording order.  Segments never span recording boundaries.
    """
    length = config.segment_length
    segments = []
    for rec in recordings:
        n_seg = len(rec) // length
        if n_seg == 0:
            raise RecordingTooShort(
                f"recording {rec.rec_id}: {len(rec)} samples < "
                f"segment length {length}"
            )
        _, dt, gyro, acc_g, g_gt = rec.step_arrays()
        for j in range(n_seg):
            s = j * length
            r0 = rec.gt[s]
            if np.abs(r0 @ r0.T - np.eye(3)).max() > 1e-9:
                raise ValueError(
                    f"recording {rec.rec_id}: ground truth at sample "
                    f"{s} is not orthogonal"
                )
            sl = slice(s, s + length - 1)
            segments.append(TrainingSegment(
                rec.rec_id, s, r0, dt[sl], gyro[sl], acc_g[sl], g_gt[sl]
            ))
    if config.shuffle:
        order = np.random.default_rng(config.seed).permutation(len(segments))
        segments = [segments[i] for i in order]
    return segments


def perturb_initial_condition(r_gt, max_deg: float, rng) -> NDArray[np.float64]:
    """Compose a small random body-frame rotation onto an attitude.

    Roll, pitch, and yaw offsets are each uniform in [-max_deg, max_deg]
    degrees, so the total angle is bounded by sqrt(3) * max_deg.
    """
    r_gt = np.asarray(r_gt, dtype=np.float64)
    if max_deg < 0.0:
        raise ValueError("max_deg must be >= 0")
    if max_deg == 0.0:
        return r_gt.copy()
    offs = np.radians(rng.uniform(-max_deg, max_deg, 3))
    return r_gt @ so3.from_euler(*offs)


def segment_loss(flat, segment: TrainingSegment, config: TrainConfig,
                 rng=None, backend_name=None):
    """Loss and parameter gradient of one segment.

    The initial condition is the segment's ground truth, perturbed when
    ``config.ic_perturb`` is set and an ``rng`` is supplied.
    """
    k = backend.get_backend(backend_name)
    r0 = segment.r0_gt
    if config.ic_perturb and rng is not None:
        r0 = perturb_initial_condition(r0, config.ic_error_deg, rng)
    return k.dae_loss_grad(r0, segment.dt, segment.gyro, segment.acc_g,
                           segment.g_gt, flat, int(config.augmented),
                           config.mode_code)


def _segment_val_loss(k, flat, segment, config) -> float:
    return k.dae_loss(segment.r0_gt, segment.dt, segment.gyro,
                      segment.acc_g, segment.g_gt, flat,
                      int(config.augmented), config.mode_code)


def _write_history(path, history) -> None:
    with open(path, "w") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for rec in history:
            fh.write(f"{rec.epoch} {rec.train_jf:.17g} "
                     f"{rec.val_jf:.17g} {rec.grad_norm:.17g}\n")


def train(recordings, config: TrainConfig, out_dir=None,
          backend_name=None) -> TrainResult:
    """Train gain networks on a set of recordings.

    Returns the checkpoint with the lowest validation loss (lowest
    training loss when the validation split is empty).  Deterministic:
    identical recordings, config, and backend produce bit-identical
    parameters.  When ``out_dir`` is given, writes per-epoch parameter
    checkpoints and a plain-text history file there.
    """
    recordings = list(recordings)
    if not recordings:
        raise ValueError("no training recordings")
    k = backend.get_backend(backend_name)
    segments = segment_dataset(recordings, config)
    n_val = int(round(config.val_fraction * len(segments)))
    n_val = min(n_val, len(segments) - 1)
    val_segments = segments[len(segments) - n_val:]
    train_segments = segments[:len(segments) - n_val]

    net = GainNet.init(config.seed, augmented=config.augmented,
                       residual_mode=config.residual_mode)
    flat = net.flat.copy()
    rng = np.random.default_rng(config.seed + 1)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def val_loss(params) -> float:
        if not val_segments:
            return np.nan
        return float(np.mean([
            _segment_val_loss(k, params, s, config) for s in val_segments
        ]))

    result = TrainResult(net)
    history = result.history
    best_flat = flat.copy()
    best_key = np.inf
    for epoch in range(config.epochs):
        if config.shuffle:
            order = rng.permutation(len(train_segments))
        else:
            order = np.arange(len(train_segments))
        losses = []
        grad_norms = []
        for ofs in range(0, len(order), config.batch_size):
            batch = order[ofs:ofs + config.batch_size]
            mean_grad = np.zeros_like(flat)
            for si in batch:
                j, grad = segment_loss(flat, train_segments[si], config,
                                       rng=rng, backend_name=backend_name)
                losses.append(j)
                mean_grad += grad
            mean_grad /= batch.size
            grad_norms.append(float(np.linalg.norm(mean_grad)))
            flat -= config.learning_rate * mean_grad
        train_jf = float(np.mean(losses))
        val_jf = val_loss(flat)
        history.append(EpochRecord(epoch, train_jf, val_jf,
                                   float(np.mean(grad_norms))))
        key = val_jf if val_segments else train_jf
        if key < best_key:
            best_key = key
            best_flat = flat.copy()
            result.best_epoch = epoch
            result.best_val = key
        if out_dir is not None:
            ckpt = GainNet(flat.copy(), config.augmented, config.residual_mode)
            ckpt.save(os.path.join(out_dir, f"checkpoint_{epoch:04d}.gnp"))
            _write_history(os.path.join(out_dir, "history.txt"), history)

    if config.epochs == 0:
        best_flat = flat
        result.best_epoch = -1
    result.net = GainNet(best_flat, config.augmented, config.residual_mode)
    if out_dir is not None:
        result.net.save(os.path.join(out_dir, "best.gnp"))
        _write_history(os.path.join(out_dir, "history.txt"), history)
    return result


def evaluate(net: GainNet, recordings, backend_name=None):
    """Full-length losses with ground-truth initial conditions.

    Returns (per-recording losses in recording order, mean loss).
    """
    k = backend.get_backend(backend_name)
    mode = RESIDUAL_MODES.index(net.residual_mode)
    losses = []
    for rec in recordings:
        r0, dt, gyro, acc_g, g_gt = rec.step_arrays()
        losses.append(float(k.dae_loss(r0, dt, gyro, acc_g, g_gt, net.flat,
                                       int(net.augmented), mode)))
    return losses, float(np.mean(losses))
