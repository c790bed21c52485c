"""Rotation-matrix algebra for attitude estimation.

Conventions used throughout the package:

* Rotation matrices map body coordinates to reference coordinates,
  ``v_ref = R @ v_body``.
* The reference frame is NED: x north, y east, z down.  The unit
  gravity direction in the reference frame is ``(0, 0, 1)``.
* Euler angles follow the aerospace z-y-x intrinsic sequence:
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)`` with pitch in [-pi/2, pi/2].

All functions are pure and operate on float64 NumPy arrays.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import GimbalLockWarning, SingularInput

__all__ = [
    "EulerAngles",
    "skew",
    "orthogonalize",
    "to_euler",
    "from_euler",
    "rot_x",
    "rot_y",
    "rot_z",
    "rotation_angle",
]

# eigenvalues of R^T R below this signal a numerically destroyed state
_EIG_FLOOR = 1e-12
# |cos(pitch)| below this means roll/yaw are not separately observable
_GIMBAL_EPS = 1e-6


class EulerAngles(NamedTuple):
    """Aerospace z-y-x Euler angles in radians."""

    roll: float
    pitch: float
    yaw: float


def skew(w: ArrayLike) -> NDArray[np.float64]:
    """Return the skew-symmetric cross-product matrix of a 3-vector.

    ``skew(w) @ v == np.cross(w, v)`` for any 3-vector ``v``.
    """
    wx, wy, wz = np.asarray(w, dtype=np.float64).reshape(3)
    return np.array(
        [
            [0.0, -wz, wy],
            [wz, 0.0, -wx],
            [-wy, wx, 0.0],
        ]
    )


def orthogonalize(r_raw: ArrayLike) -> NDArray[np.float64]:
    """Project a near-rotation matrix onto the orthogonal group.

    Computes ``A @ (A^T A)^(-1/2)`` via the symmetric eigendecomposition
    of ``A^T A``, which is the orthogonal polar factor of ``A`` (the
    closest orthogonal matrix in the Frobenius sense).  Already
    orthogonal inputs are reproduced to machine precision.

    Intended for matrices close to a proper rotation; inputs with a
    negative determinant would project onto a reflection.

    Raises
    ------
    SingularInput
        If an eigenvalue of ``A^T A`` falls below 1e-12, meaning the
        matrix is numerically rank-deficient.
    """
    a = np.asarray(r_raw, dtype=np.float64).reshape(3, 3)
    s = a.T @ a
    lam, v = np.linalg.eigh(s)
    if lam[0] < _EIG_FLOOR:
        raise SingularInput(
            f"matrix is numerically singular (min eigenvalue {lam[0]:.3e})"
        )
    inv_sqrt = (v / np.sqrt(lam)) @ v.T
    return a @ inv_sqrt


def to_euler(r: ArrayLike) -> EulerAngles:
    """Extract z-y-x Euler angles from a rotation matrix.

    Returns angles such that ``from_euler(*to_euler(R))`` reproduces
    ``R`` away from gimbal lock.  Pitch is in [-pi/2, pi/2]; roll and
    yaw are in (-pi, pi].

    Warns
    -----
    GimbalLockWarning
        When ``|cos(pitch)| < 1e-6``.  Roll and yaw are then not
        separately observable; roll is reported as 0 by convention and
        yaw absorbs the full in-plane angle.
    """
    m = np.asarray(r, dtype=np.float64).reshape(3, 3)
    s_pitch = np.clip(-m[2, 0], -1.0, 1.0)
    pitch = float(np.arcsin(s_pitch))
    if np.sqrt(m[2, 1] ** 2 + m[2, 2] ** 2) < _GIMBAL_EPS:
        warnings.warn(
            "pitch at +/-90 deg: roll set to 0, yaw not unique",
            GimbalLockWarning,
            stacklevel=2,
        )
        roll = 0.0
        yaw = float(np.arctan2(-m[0, 1], m[1, 1]))
    else:
        roll = float(np.arctan2(m[2, 1], m[2, 2]))
        yaw = float(np.arctan2(m[1, 0], m[0, 0]))
    return EulerAngles(roll, pitch, yaw)


def from_euler(roll: float, pitch: float, yaw: float) -> NDArray[np.float64]:
    """Build a rotation matrix from z-y-x Euler angles (radians)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rot_x(angle: float) -> NDArray[np.float64]:
    """Rotation by ``angle`` radians about the x axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> NDArray[np.float64]:
    """Rotation by ``angle`` radians about the y axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> NDArray[np.float64]:
    """Rotation by ``angle`` radians about the z axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(r_a: ArrayLike, r_b: ArrayLike) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    a = np.asarray(r_a, dtype=np.float64).reshape(3, 3)
    b = np.asarray(r_b, dtype=np.float64).reshape(3, 3)
    c = (np.trace(a.T @ b) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
