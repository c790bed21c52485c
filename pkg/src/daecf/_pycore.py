"""NumPy reference kernels: filter unrolls, reverse-mode gradients, and
the classic baseline integrations used for comparison runs.

This is the pure-Python fallback backend.  The compiled extension
(``daecf._core``) exposes the same call surface and must agree with this
module to tight numerical tolerances; the test suite enforces that.  Keep
the two in lockstep when changing either.

Array conventions shared by every kernel here:

- ``r0``      (3, 3)  initial attitude, body-to-reference rotation matrix
- ``dt``      (n,)    strictly positive step durations in seconds
- ``gyro``    (n, 3)  body angular rate in rad/s driving each step
- ``acc``     (n, 3)  accelerometer reading already converted to gravity
                      units (so a resting sensor reads close to the unit
                      down vector in body coordinates)
- ``g_gt``    (n, 3)  unit ground-truth gravity direction in body frame

Row ``i`` of the per-step arrays belongs to the step from sample ``i`` to
sample ``i + 1``; returned sequences hold the state after each step.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateGravity,
    DtTooLarge,
    NonFiniteLoss,
    NonMonotonicTime,
    SingularInput,
)
from .gainnet import (
    AUGMENT_POWERS,
    RESIDUAL_MODES,
    GainNet,
)

BACKEND_NAME = "python"

_EIG_FLOOR = 1e-12
_DEGENERATE_NORM = 1e-6
_MAX_DT = 0.1
# arguments of acos are clamped this far inside [-1, 1]; the backward pass
# evaluates the derivative at the clamped point so gradients stay bounded
_ACOS_MARGIN = 1e-9


def _check_step_arrays(r0, dt, gyro, acc):
    r0 = np.ascontiguousarray(r0, dtype=np.float64)
    dt = np.ascontiguousarray(dt, dtype=np.float64)
    gyro = np.ascontiguousarray(gyro, dtype=np.float64)
    acc = np.ascontiguousarray(acc, dtype=np.float64)
    if r0.shape != (3, 3):
        raise ValueError(f"r0 must be (3, 3), got {r0.shape}")
    n = dt.shape[0]
    if dt.ndim != 1 or gyro.shape != (n, 3) or acc.shape != (n, 3):
        raise ValueError("dt, gyro, acc must be (n,), (n, 3), (n, 3)")
    return r0, dt, gyro, acc


def _check_dt_value(d: float, index: int) -> None:
    if d <= 0.0:
        raise NonMonotonicTime(
            f"step {index}: time must be strictly increasing, dt={d!r}"
        )
    if d > _MAX_DT:
        raise DtTooLarge(f"step {index}: dt={d!r} exceeds {_MAX_DT}")


def _orthonormalize(a):
    """Nearest rotation to ``a`` plus the eigen data the backward needs."""
    s = a.T @ a
    lam, v = np.linalg.eigh(s)
    if lam[0] < _EIG_FLOOR:
        raise SingularInput(
            f"matrix is rank deficient: smallest eigenvalue {lam[0]:.3e}"
        )
    m = (v / np.sqrt(lam)) @ v.T
    return a @ m, lam, v


def _propagate(r_prev, w, d):
    """Euler step of the attitude kinematics followed by projection."""
    b = np.array(
        [
            [1.0, -w[2] * d, w[1] * d],
            [w[2] * d, 1.0, -w[0] * d],
            [-w[1] * d, w[0] * d, 1.0],
        ]
    )
    a = r_prev @ b
    r_g, lam, v = _orthonormalize(a)
    return a, b, r_g, lam, v


class _StepCache:
    """Everything one forward step must retain for the backward sweep."""

    __slots__ = (
        "a", "b", "lam", "v", "r_g", "residual", "gains",
        "gyro_only", "raw", "nrm", "g_u", "m_b", "c", "cn", "z",
    )

    def __init__(self):
        self.gyro_only = False


def _step_forward(r_prev, w, d, acc_k, net_or_gains, cache):
    """One filter step; fills ``cache`` and returns the new attitude."""
    a, b, r_g, lam, v = _propagate(r_prev, w, d)
    cache.a, cache.b, cache.lam, cache.v, cache.r_g = a, b, lam, v, r_g
    g_pred = r_g[2, :].copy()
    residual = acc_k - g_pred
    cache.residual = residual
    if isinstance(net_or_gains, GainNet):
        k = net_or_gains.forward(residual)
    else:
        k = net_or_gains
    cache.gains = k
    if not k.any():
        # exact-zero gains reduce the step to gyro-only propagation
        cache.gyro_only = True
        return r_g
    raw = g_pred + k * residual
    nrm = float(np.linalg.norm(raw))
    if nrm < _DEGENERATE_NORM:
        raise DegenerateGravity(
            f"updated gravity collapsed to norm {nrm:.3e}"
        )
    g_u = raw / nrm
    m_b = r_g[0, :]
    c = np.cross(g_u, m_b)
    cn = float(np.linalg.norm(c))
    if cn < _DEGENERATE_NORM:
        # gravity parallel to the heading row: keep the propagated attitude
        cache.gyro_only = True
        return r_g
    z = c / cn
    y = np.cross(z, g_u)
    cache.raw, cache.nrm, cache.g_u = raw, nrm, g_u
    cache.m_b, cache.c, cache.cn, cache.z = m_b, c, cn, z
    r_u = np.empty((3, 3))
    r_u[0, :] = y
    r_u[1, :] = z
    r_u[2, :] = g_u
    return r_u


def _forward_pass(r0, dt, gyro, acc, net_or_gains, keep_caches):
    n = dt.shape[0]
    r_seq = np.empty((n, 3, 3))
    k_seq = np.empty((n, 3))
    caches = [] if keep_caches else None
    r = r0
    for i in range(n):
        _check_dt_value(float(dt[i]), i)
        cache = _StepCache()
        r = _step_forward(r, gyro[i], float(dt[i]), acc[i], net_or_gains, cache)
        r_seq[i] = r
        k_seq[i] = cache.gains
        if keep_caches:
            caches.append(cache)
    return r_seq, k_seq, caches


def run_dae(r0, dt, gyro, acc, flat, augmented, mode_code):
    """Unroll the learned-gain filter.

    Returns ``(r_seq, g_seq, k_seq)``: attitude after each step, the
    gravity row of each attitude, and the per-step gains.
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    net = GainNet(flat, bool(augmented), RESIDUAL_MODES[int(mode_code)])
    r_seq, k_seq, _ = _forward_pass(r0, dt, gyro, acc, net, False)
    return r_seq, np.ascontiguousarray(r_seq[:, 2, :]), k_seq


def run_const_cf(r0, dt, gyro, acc, k):
    """Unroll the filter with fixed gains (scalar broadcast or 3-vector)."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), (3,)).copy()
    if np.any(k < 0.0) or np.any(k > 1.0):
        raise ValueError(f"gains must lie in [0, 1], got {k}")
    r_seq, _, _ = _forward_pass(r0, dt, gyro, acc, k, False)
    return r_seq, np.ascontiguousarray(r_seq[:, 2, :])


def _check_gt(g_gt, n):
    g_gt = np.ascontiguousarray(g_gt, dtype=np.float64)
    if g_gt.shape != (n, 3):
        raise ValueError(f"g_gt must be ({n}, 3), got {g_gt.shape}")
    return g_gt


def _angles_from_rows(r_seq, g_gt):
    dots = np.einsum("ij,ij->i", r_seq[:, 2, :], g_gt)
    return np.arccos(np.clip(dots, -1.0 + _ACOS_MARGIN, 1.0 - _ACOS_MARGIN))


def _rms(angles):
    j = float(np.sqrt(np.mean(angles * angles)))
    if not np.isfinite(j):
        raise NonFiniteLoss("gravity-angle objective is not finite")
    return j


def dae_loss(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code):
    """RMS gravity angle between the unrolled filter and ground truth."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    g_gt = _check_gt(g_gt, dt.shape[0])
    net = GainNet(flat, bool(augmented), RESIDUAL_MODES[int(mode_code)])
    r_seq, _, _ = _forward_pass(r0, dt, gyro, acc, net, False)
    return _rms(_angles_from_rows(r_seq, g_gt))


def _grad_normalize(vec_unit, nrm, upstream):
    """Adjoint of x -> x / |x| evaluated at the unit output."""
    return (upstream - vec_unit * float(vec_unit @ upstream)) / nrm


def _grad_orthonormalize(g_r, a, lam, v):
    """Adjoint of the nearest-rotation projection.

    Maps the gradient with respect to the projected rotation back to a
    gradient with respect to the unprojected matrix ``a``.
    """
    sq = np.sqrt(lam)
    m = (v / sq) @ v.T
    g_m = a.T @ g_r
    # eigenvalue-difference quotients of f(x) = x^(-1/2)
    w = -1.0 / (np.outer(sq, sq) * (sq[:, None] + sq[None, :]))
    g_s = v @ (w * (v.T @ g_m @ v)) @ v.T
    return g_r @ m + a @ (g_s + g_s.T)


def dae_loss_grad(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code):
    """Loss and its gradient with respect to every network parameter.

    Reverse-mode sweep through the full unroll: each step's contribution
    enters through the gravity row of the post-step attitude, and the
    recurrent gradient flows back through the triad rebuild, the gravity
    update, the gain networks, and the projected Euler propagation.
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    n = dt.shape[0]
    g_gt = _check_gt(g_gt, n)
    net = GainNet(flat, bool(augmented), RESIDUAL_MODES[int(mode_code)])

    r_seq, _, caches = _forward_pass(r0, dt, gyro, acc, net, True)
    angles = _angles_from_rows(r_seq, g_gt)
    j = _rms(angles)

    dots = np.einsum("ij,ij->i", r_seq[:, 2, :], g_gt)
    clipped = np.clip(dots, -1.0 + _ACOS_MARGIN, 1.0 - _ACOS_MARGIN)
    # d(rms)/d(angle) times d(acos)/d(dot) at the clamped argument
    dj_ddot = (angles / (n * j)) * (-1.0 / np.sqrt(1.0 - clipped * clipped))

    grad_flat = np.zeros_like(net.flat)
    g_r = np.zeros((3, 3))
    for i in range(n - 1, -1, -1):
        cache = caches[i]
        g_r = g_r.copy()
        g_r[2, :] += dj_ddot[i] * g_gt[i]
        if cache.gyro_only:
            g_rg = g_r
        else:
            g_u, z, m_b = cache.g_u, cache.z, cache.m_b
            g_gu = g_r[2, :].copy()
            g_y = g_r[0, :]
            # y = z x g_u
            g_z = g_r[1, :] + np.cross(g_u, g_y)
            g_gu += np.cross(g_y, z)
            # z = c / |c|
            g_c = _grad_normalize(z, cache.cn, g_z)
            # c = g_u x m_b
            g_gu += np.cross(m_b, g_c)
            g_m = np.cross(g_c, g_u)
            # g_u = raw / |raw|
            g_raw = _grad_normalize(g_u, cache.nrm, g_gu)
            g_gains = cache.residual * g_raw
            g_theta, g_res_net = net.backward(cache.residual, g_gains)
            grad_flat += g_theta
            g_res = cache.gains * g_raw + g_res_net
            g_gg = g_raw - g_res
            g_rg = np.zeros((3, 3))
            g_rg[0, :] = g_m
            g_rg[2, :] = g_gg
        g_a = _grad_orthonormalize(g_rg, cache.a, cache.lam, cache.v)
        g_r = g_a @ cache.b.T
    return j, grad_flat


def dae_fd_grad(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code,
                h=1e-5, indices=None):
    """Central-difference gradient of :func:`dae_loss`.

    ``indices`` selects which parameters to probe (all by default).  Slow
    by construction; exists to cross-check the reverse-mode gradient.
    """
    flat = np.array(flat, dtype=np.float64)
    if indices is None:
        indices = range(flat.size)
    out = np.empty(len(indices))
    for pos, idx in enumerate(indices):
        saved = flat[idx]
        flat[idx] = saved + h
        hi = dae_loss(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code)
        flat[idx] = saved - h
        lo = dae_loss(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code)
        flat[idx] = saved
        out[pos] = (hi - lo) / (2.0 * h)
    return out


# -- classic baselines ----------------------------------------------------


def _quat_from_matrix(r):
    """Unit quaternion (w, x, y, z) of a body-to-reference rotation."""
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s,
             (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s,
             (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
             0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
             (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def _matrix_from_quat(q):
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),
             2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z),
             2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x),
             1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def run_madgwick(r0, dt, gyro, acc, beta):
    """Gradient-descent orientation filter (quaternion form).

    The corrective term descends the misalignment between the measured
    and predicted gravity direction, scaled by ``beta``; gyro updates use
    explicit Euler quaternion integration with renormalization.
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    beta = float(beta)
    n = dt.shape[0]
    q = _quat_from_matrix(r0)
    r_seq = np.empty((n, 3, 3))
    for i in range(n):
        d = float(dt[i])
        _check_dt_value(d, i)
        w, x, y, z = q
        gx, gy, gz = gyro[i]
        # body-rate quaternion derivative 0.5 * q * (0, gyro)
        qdot = 0.5 * np.array(
            [
                -x * gx - y * gy - z * gz,
                w * gx + y * gz - z * gy,
                w * gy - x * gz + z * gx,
                w * gz + x * gy - y * gx,
            ]
        )
        an = float(np.linalg.norm(acc[i]))
        if beta > 0.0 and an > _DEGENERATE_NORM:
            ax, ay, az = acc[i] / an
            # predicted body gravity minus measured direction
            f0 = 2.0 * (x * z - w * y) - ax
            f1 = 2.0 * (w * x + y * z) - ay
            f2 = w * w - x * x - y * y + z * z - az
            # objective Jacobian transposed times the misalignment
            g0 = -2.0 * y * f0 + 2.0 * x * f1 + 2.0 * w * f2
            g1 = 2.0 * z * f0 + 2.0 * w * f1 - 2.0 * x * f2
            g2 = -2.0 * w * f0 + 2.0 * z * f1 - 2.0 * y * f2
            g3 = 2.0 * x * f0 + 2.0 * y * f1 + 2.0 * z * f2
            grad = np.array([g0, g1, g2, g3])
            gn = float(np.linalg.norm(grad))
            if gn > 1e-12:
                qdot -= beta * grad / gn
        q = q + qdot * d
        q = q / np.linalg.norm(q)
        r_seq[i] = _matrix_from_quat(q)
    return r_seq


def run_mahony(r0, dt, gyro, acc, kp, ki):
    """Complementary filter with a proportional (and optional integral)
    correction from the gravity-direction mismatch.

    Uses the same projected Euler propagation as the learned filter, so a
    zero proportional gain reproduces gyro-only integration exactly.
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    kp = float(kp)
    ki = float(ki)
    n = dt.shape[0]
    r = r0
    bias = np.zeros(3)
    r_seq = np.empty((n, 3, 3))
    for i in range(n):
        d = float(dt[i])
        _check_dt_value(d, i)
        w = gyro[i]
        an = float(np.linalg.norm(acc[i]))
        if (kp > 0.0 or ki > 0.0) and an > _DEGENERATE_NORM:
            v_hat = r[2, :]
            err = np.cross(acc[i] / an, v_hat)
            if ki > 0.0:
                bias = bias + ki * err * d
            w = w + kp * err + bias
        _, _, r, _, _ = _propagate(r, w, d)
        r_seq[i] = r
    return r_seq
