"""Adaptive complementary filter core.

One filter step blends gyroscope propagation with an accelerometer
gravity observation:

1. propagate the attitude with the gyro sample (Euler step followed by
   re-orthogonalization),
2. predict the body-frame gravity direction from the propagated
   attitude,
3. form the residual between the measured specific force (converted to
   gravity-direction units) and that prediction,
4. obtain per-axis blending gains from a gain provider (a constant for
   the classic filter, the gain networks for the adaptive one),
5. apply the component-wise update to the gravity estimate and
   normalize it,
6. rebuild a full rotation matrix from the updated gravity direction
   with a two-vector (Triad) construction that leaves heading untouched.

The reference frame is NED with unit gravity direction (0, 0, 1); the
pseudo-reference direction used by the Triad construction is (1, 0, 0).
Rotation matrices map body to reference coordinates, so body-frame
directions are obtained with the transpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import so3
from .errors import DegenerateGravity, DegenerateTriad, DtTooLarge, NonMonotonicTime

__all__ = [
    "GRAVITY_MS2",
    "G_REF",
    "M_REF",
    "MAX_DT",
    "ImuSample",
    "FilterState",
    "StepTrace",
    "ConstantGains",
    "accel_to_gravity_units",
    "propagate_gyro",
    "predict_gravity",
    "compute_residual",
    "update_gravity",
    "triad_reconstruct",
    "step",
]

GRAVITY_MS2 = 9.80665
# unit gravity direction in the NED reference frame (down)
G_REF = np.array([0.0, 0.0, 1.0])
# pseudo-reference direction for the Triad construction (north)
M_REF = np.array([1.0, 0.0, 0.0])
# sample intervals above this signal dropped samples
MAX_DT = 0.1

_DEGENERATE_NORM = 1e-6

GainProvider = Callable[[NDArray[np.float64]], ArrayLike]


class ImuSample(NamedTuple):
    """One IMU sample: time (s), gyro (rad/s), accelerometer (m/s^2)."""

    t: float
    gyro: NDArray[np.float64]
    acc: NDArray[np.float64]


@dataclass
class FilterState:
    """Filter state: current attitude estimate and its timestamp."""

    r_hat: NDArray[np.float64]
    t_prev: float


@dataclass
class StepTrace:
    """Intermediates of one filter step, for training and debugging."""

    r_g: NDArray[np.float64]
    g_pred_b: NDArray[np.float64]
    residual: NDArray[np.float64]
    gains: NDArray[np.float64]
    g_updated_b: NDArray[np.float64]
    r_u: NDArray[np.float64]
    gyro_only: bool = False


@dataclass
class ConstantGains:
    """Gain provider returning the same three gains for every residual."""

    k: NDArray[np.float64]

    def __init__(self, k):
        k = np.asarray(k, dtype=np.float64)
        if k.ndim == 0:
            k = np.full(3, float(k))
        self.k = k.reshape(3)

    def __call__(self, residual) -> NDArray[np.float64]:
        return self.k


def accel_to_gravity_units(acc: ArrayLike) -> NDArray[np.float64]:
    """Convert specific force (m/s^2) to gravity-direction units.

    A resting accelerometer measures the gravity reaction -g, so the
    negated, gravity-normalized reading points along the body-frame
    gravity direction: at rest ``accel_to_gravity_units(acc) ~ R^T (0,0,1)``.
    This conversion is the single preprocessing path shared by training
    and inference; the residual scale the gain networks see depends on it.

    Accepts a single sample or any array whose last axis has length 3.
    """
    out = -np.asarray(acc, dtype=np.float64) / GRAVITY_MS2
    if out.shape[-1:] != (3,):
        raise ValueError(f"expected 3-axis samples, got shape {out.shape}")
    return out


def propagate_gyro(state: FilterState, sample: ImuSample) -> NDArray[np.float64]:
    """Euler-propagate the attitude with one gyro sample, then re-orthogonalize.

    Computes ``orthogonalize(R + R @ skew(gyro) * dt)`` with
    ``dt = sample.t - state.t_prev``.

    Raises
    ------
    NonMonotonicTime
        If dt <= 0.
    DtTooLarge
        If dt exceeds MAX_DT (0.1 s), signalling dropped samples.
    """
    dt = sample.t - state.t_prev
    if dt <= 0.0:
        raise NonMonotonicTime(
            f"sample at t={sample.t} does not advance past t={state.t_prev}"
        )
    if dt > MAX_DT:
        raise DtTooLarge(f"dt={dt:.4f} s exceeds {MAX_DT} s")
    r = state.r_hat
    raw = r + r @ so3.skew(sample.gyro) * dt
    return so3.orthogonalize(raw)


def predict_gravity(r_g: ArrayLike, g_r: ArrayLike = G_REF) -> NDArray[np.float64]:
    """Body-frame gravity direction predicted by the propagated attitude.

    Transforms the reference-frame unit gravity direction into the body
    frame: ``g_b = R^T g_r``.
    """
    r = np.asarray(r_g, dtype=np.float64).reshape(3, 3)
    return r.T @ np.asarray(g_r, dtype=np.float64).reshape(3)


def compute_residual(acc_used: ArrayLike, g_pred_b: ArrayLike) -> NDArray[np.float64]:
    """Accelerometer residual: measured minus predicted gravity direction.

    ``acc_used`` must already be in gravity-direction units
    (see :func:`accel_to_gravity_units`).
    """
    a = np.asarray(acc_used, dtype=np.float64).reshape(3)
    g = np.asarray(g_pred_b, dtype=np.float64).reshape(3)
    return a - g


def update_gravity(g_pred_b: ArrayLike, acc_used: ArrayLike,
                   gains: ArrayLike) -> NDArray[np.float64]:
    """Component-wise blend of predicted gravity and measurement.

    Returns the raw (pre-normalization) updated gravity vector
    ``g + K * (acc_used - g)``; the caller normalizes it before the
    Triad reconstruction.

    Raises
    ------
    DegenerateGravity
        If the blended vector collapses below 1e-6 in norm.
    """
    g = np.asarray(g_pred_b, dtype=np.float64).reshape(3)
    a = np.asarray(acc_used, dtype=np.float64).reshape(3)
    k = np.asarray(gains, dtype=np.float64).reshape(3)
    raw = g + k * (a - g)
    if np.linalg.norm(raw) < _DEGENERATE_NORM:
        raise DegenerateGravity(
            f"updated gravity norm {np.linalg.norm(raw):.2e} below "
            f"{_DEGENERATE_NORM}"
        )
    return raw


def _triad_frame(g: NDArray[np.float64], m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Orthonormal triad built from a unit gravity and a second direction.

    Columns are (g, z x g, z) with z the normalized g x m; raises
    DegenerateTriad when g and m are near-parallel.
    """
    c = np.cross(g, m)
    n = np.linalg.norm(c)
    if n < _DEGENERATE_NORM:
        raise DegenerateTriad(
            f"gravity and pseudo-reference direction near-parallel "
            f"(cross norm {n:.2e})"
        )
    z = c / n
    y = np.cross(z, g)
    return np.column_stack([g, y, z])


def triad_reconstruct(g_updated_b: ArrayLike, r_g: ArrayLike,
                      g_r: ArrayLike = G_REF) -> NDArray[np.float64]:
    """Rebuild the attitude from an updated gravity direction.

    Builds matching orthonormal triads in the reference frame (from
    ``g_r`` and the pseudo-reference direction ``M_REF``) and in the
    body frame (from ``g_updated_b`` and the body image of ``M_REF``
    under the propagated attitude ``r_g``), then composes them into the
    updated body-to-reference rotation.

    Because the body-frame second direction comes from ``r_g`` itself,
    the reconstruction moves only the gravity-aligned part of the
    attitude: heading is preserved.

    Raises
    ------
    DegenerateTriad
        If gravity and the pseudo-reference direction are near-parallel
        in either frame (pitch near +/-90 deg).
    """
    g_b = np.asarray(g_updated_b, dtype=np.float64).reshape(3)
    r = np.asarray(r_g, dtype=np.float64).reshape(3, 3)
    g_ref = np.asarray(g_r, dtype=np.float64).reshape(3)
    m_b = r.T @ M_REF
    frame_r = _triad_frame(g_ref, M_REF)
    frame_b = _triad_frame(g_b, m_b)
    return frame_r @ frame_b.T


def step(state: FilterState, sample: ImuSample,
         gains: GainProvider) -> tuple[FilterState, StepTrace]:
    """Run one full filter step.

    Parameters
    ----------
    state : FilterState
        Current attitude estimate and previous timestamp.
    sample : ImuSample
        The new IMU sample.
    gains : callable
        Maps the 3-vector residual to three blending gains in [0, 1].

    Returns
    -------
    (FilterState, StepTrace)
        The updated state and all step intermediates.

    Notes
    -----
    When the provided gains are exactly (0, 0, 0) the accelerometer
    path is skipped entirely and the propagated matrix is reused, so a
    zero-gain filter is bit-for-bit identical to pure gyro integration.
    When the Triad construction degenerates (pitch at +/-90 deg) the
    step falls back to the propagated attitude and flags the trace.
    """
    r_g = propagate_gyro(state, sample)
    g_pred = r_g[2, :].copy()  # third row equals R^T (0,0,1)
    acc_used = accel_to_gravity_units(sample.acc)
    residual = compute_residual(acc_used, g_pred)
    k = np.asarray(gains(residual), dtype=np.float64).reshape(3)
    if np.any(k < 0.0) or np.any(k > 1.0):
        raise ValueError(f"gains {k} outside [0, 1]")

    if not k.any():
        trace = StepTrace(r_g, g_pred, residual, k, g_pred, r_g, gyro_only=True)
        return FilterState(r_g, sample.t), trace

    raw = update_gravity(g_pred, acc_used, k)
    g_upd = raw / np.linalg.norm(raw)
    try:
        r_u = triad_reconstruct(g_upd, r_g)
        gyro_only = False
    except DegenerateTriad:
        r_u = r_g
        gyro_only = True
    trace = StepTrace(r_g, g_pred, residual, k, g_upd, r_u, gyro_only=gyro_only)
    return FilterState(r_u, sample.t), trace
