"""Adaptive-gain complementary filter for IMU attitude estimation.

The estimator blends gyroscope integration with accelerometer gravity
observations through per-axis gains produced by three small neural
networks.  The package also ships the training pipeline that
backpropagates a gravity-angle loss through the unrolled filter, plus a
benchmark harness with classic baseline filters (Madgwick, Mahony,
fixed-gain complementary filter), a synthetic IMU generator, and a CLI.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import errors, so3

__all__ = ["errors", "so3", "__version__"]
