"""Uniform front end for running any estimator over a recording.

Every algorithm is initialized from the ground-truth attitude at the
first sample and produces one rotation matrix per sample, so trajectory
metrics compare like with like.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from . import backend
from .data import Recording
from .gainnet import GainNet

__all__ = [
    "ALGORITHMS",
    "DEFAULT_GRIDS",
    "run_filter",
]

ALGORITHMS = ("fixed-gain-cf", "madgwick", "mahony", "dae")

# log-spaced 20-point grids; the integral gain stays off so every
# baseline corrects attitude only, never gyro bias
DEFAULT_GRIDS = {
    "fixed-gain-cf": [0.0] + list(np.geomspace(1e-3, 1.0, 20)),
    "madgwick": list(np.geomspace(1e-3, 0.5, 20)),
    "mahony": [(kp, 0.0) for kp in np.geomspace(0.1, 10.0, 20)],
}


def run_filter(algorithm: str, config, recording: Recording,
               backend_name: str | None = None) -> NDArray[np.float64]:
    """Estimate the full attitude trajectory of one recording.

    Parameters
    ----------
    algorithm : str
        One of ``ALGORITHMS``.
    config
        Algorithm parameter: gain(s) for ``fixed-gain-cf``, beta for
        ``madgwick``, ``(kp, ki)`` for ``mahony``, and a ``GainNet``
        (or flat parameter vector) for ``dae``.
    recording : Recording
        Input samples and ground truth; only the first ground-truth
        attitude is consumed, as the initial condition.

    Returns
    -------
    ndarray (n, 3, 3)
        One attitude per sample; element 0 is the initial condition.
    """
    k = backend.get_backend(backend_name)
    r0, dt, gyro, acc_g, _ = recording.step_arrays()
    if algorithm == "fixed-gain-cf":
        stepped, _ = k.run_const_cf(r0, dt, gyro, acc_g, config)
    elif algorithm == "madgwick":
        stepped = k.run_madgwick(r0, dt, gyro, acc_g, float(config))
    elif algorithm == "mahony":
        kp, ki = config
        stepped = k.run_mahony(r0, dt, gyro, acc_g, float(kp), float(ki))
    elif algorithm == "dae":
        net = config if isinstance(config, GainNet) else GainNet(config)
        mode = 1 if net.residual_mode == "absolute" else 0
        stepped, _, _ = k.run_dae(r0, dt, gyro, acc_g, net.flat,
                                  int(net.augmented), mode)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return np.concatenate([r0[None], stepped], axis=0)
