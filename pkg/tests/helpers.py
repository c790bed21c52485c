"""Shared test utilities."""

import numpy as np

from daecf import so3


def random_rotation(rng):
    """Random rotation that stays away from gimbal lock."""
    roll = rng.uniform(-np.pi, np.pi)
    pitch = rng.uniform(-1.2, 1.2)
    yaw = rng.uniform(-np.pi, np.pi)
    return so3.from_euler(roll, pitch, yaw)


def imu_trajectory(n, seed, amp=0.8, noise=0.01, dt_nominal=0.005):
    """Noisy IMU sequence over a smooth sinusoidal rotation.

    Returns (r0, dt, gyro, acc, g_gt) in the kernel conventions: acc is
    already in gravity units (unit norm when noise-free) and r0 is a
    perturbed version of the true initial attitude.
    """
    rng = np.random.default_rng(seed)
    dt = np.full(n, dt_nominal) + rng.uniform(-0.1, 0.1, n) * dt_nominal
    t = np.cumsum(dt)
    w = np.stack([
        amp * np.sin(2 * np.pi * 0.7 * t + 0.3),
        amp * 0.6 * np.sin(2 * np.pi * 1.1 * t + 1.1),
        amp * 0.4 * np.sin(2 * np.pi * 0.4 * t + 2.0),
    ], axis=1)
    r0 = so3.from_euler(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                        rng.uniform(-np.pi, np.pi))
    g_gt = np.empty((n, 3))
    rot = r0.copy()
    for i in range(n):
        rot = so3.orthogonalize(rot + rot @ so3.skew(w[i]) * dt[i])
        g_gt[i] = rot[2, :]
    gyro = w + rng.normal(0.0, 0.002, (n, 3))
    acc = g_gt + rng.normal(0.0, noise, (n, 3))
    r0_est = so3.orthogonalize(r0 + 0.02 * rng.normal(0.0, 1.0, (3, 3)))
    return r0_est, dt, gyro, acc, g_gt


def gyro_only_trajectory(r0, times, gyros):
    """Reference pure gyro integration: Euler step + orthogonalization."""
    r = np.array(r0, dtype=float)
    out = []
    t_prev = None
    for t, w in zip(times, gyros):
        if t_prev is not None:
            dt = t - t_prev
            r = so3.orthogonalize(r + r @ so3.skew(w) * dt)
            out.append(r.copy())
        t_prev = t
    return out


def random_params(seed, augmented=True, scale=0.3):
    """Uniform random parameter vector for gradient probing.

    A moderate uniform scale keeps every coordinate's loss surface
    smooth at finite-difference step sizes, unlike the operating
    initialization whose input columns span many orders of magnitude.
    """
    from daecf.gainnet import GainNet, layer_shapes

    n = 3 * sum(o * i + o for o, i in layer_shapes(augmented))
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, n)
