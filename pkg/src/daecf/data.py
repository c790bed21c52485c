"""Recording container and canonical CSV ingestion.

The canonical on-disk format is a CSV file with a header line followed
by one row per sample:

    t_s, gyro_x, gyro_y, gyro_z, acc_x, acc_y, acc_z, q_w, q_x, q_y, q_z

with time in seconds, angular rate in rad/s, specific force in m/s^2,
and the ground-truth attitude as a scalar-first unit quaternion mapping
body coordinates to the reference frame.  Values are locale-independent
decimal text.  Any dataset can be used after conversion to this layout.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import AlignmentError, ParseError
from .filter import accel_to_gravity_units

__all__ = [
    "CSV_COLUMNS",
    "PLACEMENTS",
    "Recording",
    "quaternion_to_matrix",
    "load_recording",
    "load_directory",
    "save_recording",
]

CSV_COLUMNS = (
    "t_s",
    "gyro_x", "gyro_y", "gyro_z",
    "acc_x", "acc_y", "acc_z",
    "q_w", "q_x", "q_y", "q_z",
)

PLACEMENTS = ("pocket", "texting", "body", "bag", "synthetic")

# quaternion rows whose norm deviates more than this are rejected
_QUAT_NORM_TOL = 1e-3


def quaternion_to_matrix(q) -> NDArray[np.float64]:
    """Rotation matrix of a scalar-first unit quaternion.

    The input is normalized first; callers validate the norm.
    """
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


@dataclass
class Recording:
    """One IMU recording with aligned ground truth.

    Attributes
    ----------
    rec_id : str
        Identifier, typically the source file stem.
    placement : str
        One of ``PLACEMENTS``.
    t : ndarray (n,)
        Sample timestamps in seconds, strictly increasing.
    gyro : ndarray (n, 3)
        Angular rate samples in rad/s.
    acc : ndarray (n, 3)
        Raw specific-force samples in m/s^2.
    gt : ndarray (n, 3, 3)
        Ground-truth body-to-reference rotation per sample.
    rate : float
        Nominal sampling rate in Hz.
    """

    rec_id: str
    placement: str
    t: NDArray[np.float64]
    gyro: NDArray[np.float64]
    acc: NDArray[np.float64]
    gt: NDArray[np.float64]
    rate: float = field(default=0.0)

    def __post_init__(self):
        self.t = np.ascontiguousarray(self.t, dtype=np.float64)
        self.gyro = np.ascontiguousarray(self.gyro, dtype=np.float64)
        self.acc = np.ascontiguousarray(self.acc, dtype=np.float64)
        self.gt = np.ascontiguousarray(self.gt, dtype=np.float64)
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        n = self.t.shape[0]
        if self.gyro.shape != (n, 3) or self.acc.shape != (n, 3):
            raise AlignmentError(
                f"recording {self.rec_id}: sensor arrays disagree on length"
            )
        if self.gt.shape != (n, 3, 3):
            raise AlignmentError(
                f"recording {self.rec_id}: {n} samples but "
                f"{self.gt.shape[0]} ground-truth attitudes"
            )
        if n >= 2 and self.rate == 0.0:
            self.rate = float((n - 1) / (self.t[-1] - self.t[0]))

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def step_arrays(self):
        """Kernel-ready arrays (r0, dt, gyro, acc_g, g_gt).

        Step ``i`` runs from sample ``i`` to ``i + 1``: it integrates the
        rate reported at sample ``i`` over ``dt[i]`` and then blends in
        the accelerometer reading taken at sample ``i + 1``, scoring the
        result against the ground truth at sample ``i + 1``.
        """
        if len(self) < 2:
            raise AlignmentError(
                f"recording {self.rec_id}: need at least 2 samples"
            )
        dt = np.diff(self.t)
        acc_g = accel_to_gravity_units(self.acc[1:])
        g_gt = np.ascontiguousarray(self.gt[1:, 2, :])
        return self.gt[0], dt, self.gyro[:-1], acc_g, g_gt


def _parse_float(text: str, path: str, line_no: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"{path}:{line_no}: column {col!r}: not a number: {text!r}"
        ) from None


def load_recording(path, placement: str = "synthetic",
                   rec_id: str | None = None) -> Recording:
    """Read one canonical CSV recording.

    Raises
    ------
    ParseError
        Naming the offending line for malformed headers, wrong column
        counts, non-numeric fields, non-unit quaternions, or
        non-monotone timestamps.
    """
    path = os.fspath(path)
    if rec_id is None:
        rec_id = os.path.splitext(os.path.basename(path))[0]
    rows_t, rows_g, rows_a, rows_q = [], [], [], []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: empty file") from None
        header = tuple(h.strip() for h in header)
        if header != CSV_COLUMNS:
            raise ParseError(
                f"{path}:1: expected header {', '.join(CSV_COLUMNS)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(
                    f"{path}:{line_no}: expected {len(CSV_COLUMNS)} "
                    f"columns, got {len(row)}"
                )
            vals = [_parse_float(c.strip(), path, line_no, name)
                    for c, name in zip(row, CSV_COLUMNS)]
            t = vals[0]
            if rows_t and t <= rows_t[-1]:
                raise ParseError(
                    f"{path}:{line_no}: timestamp {t!r} not after "
                    f"previous {rows_t[-1]!r}"
                )
            q = np.array(vals[7:11])
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > _QUAT_NORM_TOL:
                raise ParseError(
                    f"{path}:{line_no}: quaternion norm {norm:.6f} is "
                    f"not within {_QUAT_NORM_TOL} of 1"
                )
            rows_t.append(t)
            rows_g.append(vals[1:4])
            rows_a.append(vals[4:7])
            rows_q.append(q)
    if not rows_t:
        raise ParseError(f"{path}:2: no data rows")
    gt = np.stack([quaternion_to_matrix(q) for q in rows_q])
    return Recording(rec_id, placement, np.array(rows_t),
                     np.array(rows_g), np.array(rows_a), gt)


def load_directory(root) -> list[Recording]:
    """Load every ``*.csv`` under ``root``, sorted by path.

    Files inside a subdirectory named after a placement get that
    placement; everything else is tagged ``synthetic``.
    """
    root = os.fspath(root)
    out = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        sub = os.path.basename(dirpath)
        placement = sub if sub in PLACEMENTS else "synthetic"
        for name in sorted(filenames):
            if name.lower().endswith(".csv"):
                out.append(load_recording(os.path.join(dirpath, name),
                                          placement=placement))
    return out


def _matrix_to_quaternion(r: NDArray[np.float64]) -> NDArray[np.float64]:
    """Scalar-first quaternion of a rotation matrix (w >= 0)."""
    m = np.asarray(r, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def save_recording(rec: Recording, path) -> None:
    """Write a recording in the canonical CSV format.

    Floats are written with 17 significant digits so that a
    load/save/load round trip is bit-exact on the numeric columns.
    """
    path = os.fspath(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i in range(len(rec)):
            q = _matrix_to_quaternion(rec.gt[i])
            row = [rec.t[i], *rec.gyro[i], *rec.acc[i], *q]
            writer.writerow([f"{v:.17g}" for v in row])
