"""Attitude error metrics over estimated trajectories.

Scores are RMS roll and pitch errors in degrees plus their quadrature
sum.  Heading is deliberately not scored: with gravity as the only
reference direction it is unobservable, so all algorithms are compared
on the observable part of the attitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3

__all__ = [
    "MetricsRow",
    "wrap_degrees",
    "euler_errors_deg",
    "compute_metrics",
    "gravity_rms_loss",
]


@dataclass(frozen=True)
class MetricsRow:
    """RMS attitude errors for one estimated trajectory, in degrees."""

    e_phi: float
    e_theta: float
    e: float
    n_samples: int


def wrap_degrees(x):
    """Wrap angle differences into (-180, 180] degrees."""
    return 180.0 - np.mod(180.0 - np.asarray(x, dtype=np.float64), 360.0)


def euler_errors_deg(estimated, gt):
    """Per-sample wrapped roll and pitch errors in degrees, (n, 2)."""
    estimated = np.asarray(estimated, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if estimated.shape != gt.shape or estimated.shape[1:] != (3, 3):
        raise ValueError("need aligned (n, 3, 3) trajectories")
    n = estimated.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        r_e, p_e, _ = so3.to_euler(estimated[i])
        r_g, p_g, _ = so3.to_euler(gt[i])
        out[i, 0] = wrap_degrees(np.degrees(r_e - r_g))
        out[i, 1] = wrap_degrees(np.degrees(p_e - p_g))
    return out


def compute_metrics(estimated, gt) -> MetricsRow:
    """RMS roll/pitch errors and their quadrature sum, in degrees."""
    err = euler_errors_deg(estimated, gt)
    e_phi = float(np.sqrt(np.mean(err[:, 0] ** 2)))
    e_theta = float(np.sqrt(np.mean(err[:, 1] ** 2)))
    return MetricsRow(e_phi, e_theta, float(np.hypot(e_phi, e_theta)),
                      err.shape[0])


def gravity_rms_loss(estimated, gt) -> float:
    """RMS gravity-direction angle between trajectories, in radians.

    This is the quantity the trainer minimizes; tuning the baselines
    against the same scalar keeps the comparison fair.
    """
    estimated = np.asarray(estimated, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    dots = np.einsum("ij,ij->i", estimated[:, 2, :], gt[:, 2, :])
    ang = np.arccos(np.clip(dots, -1.0 + 1e-9, 1.0 - 1e-9))
    return float(np.sqrt(np.mean(ang ** 2)))
