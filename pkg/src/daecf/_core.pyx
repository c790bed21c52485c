# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False
"""Compiled kernels: filter unrolls, reverse-mode gradients, and the
classic baseline integrations.

Mirrors ``daecf._pycore`` function for function; the test suite holds the
two backends to tight numerical agreement.  Hot loops run without the GIL
on flat C buffers: gain-network weights are repacked column-major so the
layer matvecs vectorize, activations go through a vector tanh, and the
finite-difference driver pokes parameters through an index map instead of
repacking.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport acos, fabs, pow, sqrt, tanh
from libc.string cimport memcpy, memset

from .errors import (
    DegenerateGravity,
    DtTooLarge,
    NonFiniteActivation,
    NonFiniteLoss,
    NonMonotonicTime,
    SingularInput,
)
from ._pycore import _check_step_arrays, _check_gt, _quat_from_matrix

cnp.import_array()

cdef extern from "_simd.h":
    void daecf_vtanh(double *x, int n) nogil
    int daecf_is_finite(double x) nogil
    int daecf_all_finite(const double *x, int n) nogil
    void daecf_dense_cm(const double *w, const double *b, const double *x,
                        double *y, int n_in, int n_out) nogil
    void daecf_axpy(double a, const double *x, double *y, int n) nogil
    double daecf_dot(const double *x, const double *y, int n) nogil
    int DAECF_VECTOR_TANH

BACKEND_NAME = "c"

cdef enum:
    H1 = 16
    H2 = 32
    H3 = 64
    H4 = 32

cdef double _EIG_FLOOR = 1e-12
cdef double _DEGENERATE_NORM = 1e-6
cdef double _MAX_DT = 0.1
cdef double _ACOS_MARGIN = 1e-9
cdef double _RES_FLOOR = 1e-4

# error codes shared by the nogil step kernels
cdef enum:
    ERR_OK = 0
    ERR_SINGULAR = 3
    ERR_DEGENERATE = 4
    ERR_NONFINITE = 5

# trace layout (doubles per step, before the activation block)
cdef enum:
    TR_FLAG = 0
    TR_A = 1
    TR_LAM = 10
    TR_V = 13
    TR_B = 22
    TR_GPRED = 31
    TR_MB = 34
    TR_RES = 37
    TR_K = 40
    TR_NRM = 43
    TR_GU = 44
    TR_CN = 47
    TR_Z = 48
    TR_SCORE = 51
    TR_ACTS = 54


# -- network geometry ------------------------------------------------------

cdef struct NetDims:
    int n_in
    int dims[6]
    int w_off[5]
    int b_off[5]
    int axis_size
    int act_stride

cdef void _fill_dims(int augmented, NetDims *nd) nogil:
    cdef int l, o, i, pos
    nd.n_in = 9 if augmented else 1
    nd.dims[0] = nd.n_in
    nd.dims[1] = H1
    nd.dims[2] = H2
    nd.dims[3] = H3
    nd.dims[4] = H4
    nd.dims[5] = 1
    pos = 0
    for l in range(5):
        o = nd.dims[l + 1]
        i = nd.dims[l]
        nd.w_off[l] = pos
        nd.b_off[l] = pos + o * i
        pos += o * i + o
    nd.axis_size = pos
    nd.act_stride = nd.n_in + H1 + H2 + H3 + H4

cdef void _pack_cm(const double *flat, double *pcm, const NetDims *nd) nogil:
    """Column-major weight copy (biases stay in place) for fast matvecs."""
    cdef int ax, l, j, i, o, ii
    cdef const double *fa
    cdef double *pa
    for ax in range(3):
        fa = flat + ax * nd.axis_size
        pa = pcm + ax * nd.axis_size
        for l in range(5):
            o = nd.dims[l + 1]
            ii = nd.dims[l]
            for j in range(o):
                for i in range(ii):
                    pa[nd.w_off[l] + i * o + j] = fa[nd.w_off[l] + j * ii + i]
            memcpy(pa + nd.b_off[l], fa + nd.b_off[l], o * sizeof(double))

cdef void _build_map(const NetDims *nd, long long *cmap) nogil:
    """Canonical flat index of each parameter -> its packed position."""
    cdef int ax, l, j, i, o, ii, base
    for ax in range(3):
        base = ax * nd.axis_size
        for l in range(5):
            o = nd.dims[l + 1]
            ii = nd.dims[l]
            for j in range(o):
                for i in range(ii):
                    cmap[base + nd.w_off[l] + j * ii + i] = \
                        base + nd.w_off[l] + i * o + j
            for j in range(o):
                cmap[base + nd.b_off[l] + j] = base + nd.b_off[l] + j


# -- small dense algebra ---------------------------------------------------

cdef inline void _cross3(const double *x, const double *y, double *out) nogil:
    out[0] = x[1] * y[2] - x[2] * y[1]
    out[1] = x[2] * y[0] - x[0] * y[2]
    out[2] = x[0] * y[1] - x[1] * y[0]

cdef inline double _dot3(const double *x, const double *y) nogil:
    return x[0] * y[0] + x[1] * y[1] + x[2] * y[2]

cdef inline double _norm3(const double *x) nogil:
    return sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])

cdef inline void _mat3_mul(const double *a, const double *b, double *out) nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            out[r * 3 + c] = (a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c]
                              + a[r * 3 + 2] * b[6 + c])

cdef inline void _mat3_mul_nt(const double *a, const double *b, double *out) nogil:
    # out = a @ b.T
    cdef int r, c
    for r in range(3):
        for c in range(3):
            out[r * 3 + c] = (a[r * 3] * b[c * 3] + a[r * 3 + 1] * b[c * 3 + 1]
                              + a[r * 3 + 2] * b[c * 3 + 2])

cdef inline void _mat3_mul_tn(const double *a, const double *b, double *out) nogil:
    # out = a.T @ b
    cdef int r, c
    for r in range(3):
        for c in range(3):
            out[r * 3 + c] = (a[r] * b[c] + a[3 + r] * b[3 + c]
                              + a[6 + r] * b[6 + c])

cdef int _eig3(const double *s, double *lam, double *v) nogil:
    """Eigendecomposition of a symmetric 3x3 by cyclic Jacobi rotations.

    Eigenvalues come out ascending; ``v`` holds eigenvectors as columns
    (row-major storage, column k pairs with lam[k]).
    """
    cdef double a00 = s[0], a01 = s[1], a02 = s[2]
    cdef double a11 = s[4], a12 = s[5], a22 = s[8]
    cdef double off, theta, t, c, sn, tmp, vp, vq
    cdef int sweep, i, j
    for i in range(9):
        v[i] = 0.0
    v[0] = v[4] = v[8] = 1.0
    for sweep in range(50):
        off = a01 * a01 + a02 * a02 + a12 * a12
        if off <= 1e-32 * (a00 * a00 + a11 * a11 + a22 * a22 + 1e-300):
            break
        if a01 != 0.0:
            theta = (a11 - a00) / (2.0 * a01)
            t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / sqrt(t * t + 1.0)
            sn = t * c
            a00 -= t * a01
            a11 += t * a01
            a01 = 0.0
            tmp = a02
            a02 = c * tmp - sn * a12
            a12 = sn * tmp + c * a12
            for i in range(3):
                vp = v[i * 3 + 0]
                vq = v[i * 3 + 1]
                v[i * 3 + 0] = c * vp - sn * vq
                v[i * 3 + 1] = sn * vp + c * vq
        if a02 != 0.0:
            theta = (a22 - a00) / (2.0 * a02)
            t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / sqrt(t * t + 1.0)
            sn = t * c
            a00 -= t * a02
            a22 += t * a02
            a02 = 0.0
            tmp = a01
            a01 = c * tmp - sn * a12
            a12 = sn * tmp + c * a12
            for i in range(3):
                vp = v[i * 3 + 0]
                vq = v[i * 3 + 2]
                v[i * 3 + 0] = c * vp - sn * vq
                v[i * 3 + 2] = sn * vp + c * vq
        if a12 != 0.0:
            theta = (a22 - a11) / (2.0 * a12)
            t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / sqrt(t * t + 1.0)
            sn = t * c
            a11 -= t * a12
            a22 += t * a12
            a12 = 0.0
            tmp = a01
            a01 = c * tmp - sn * a02
            a02 = sn * tmp + c * a02
            for i in range(3):
                vp = v[i * 3 + 1]
                vq = v[i * 3 + 2]
                v[i * 3 + 1] = c * vp - sn * vq
                v[i * 3 + 2] = sn * vp + c * vq
    lam[0] = a00
    lam[1] = a11
    lam[2] = a22
    # ascending insertion sort on three entries, columns follow
    cdef int order[3]
    order[0] = 0
    order[1] = 1
    order[2] = 2
    for i in range(1, 3):
        j = i
        while j > 0 and lam[order[j]] < lam[order[j - 1]]:
            t = <double> order[j]
            order[j] = order[j - 1]
            order[j - 1] = <int> t
            j -= 1
    cdef double lam_s[3]
    cdef double v_s[9]
    for i in range(3):
        lam_s[i] = lam[order[i]]
        for j in range(3):
            v_s[j * 3 + i] = v[j * 3 + order[i]]
    memcpy(lam, lam_s, sizeof(lam_s))
    memcpy(v, v_s, sizeof(v_s))
    return 0

cdef inline void _m_from_eig(const double *lam, const double *v, double *m) nogil:
    # inverse principal square root from the eigen pairs
    cdef double w0 = 1.0 / sqrt(lam[0])
    cdef double w1 = 1.0 / sqrt(lam[1])
    cdef double w2 = 1.0 / sqrt(lam[2])
    cdef int r, c
    for r in range(3):
        for c in range(3):
            m[r * 3 + c] = (w0 * v[r * 3] * v[c * 3]
                            + w1 * v[r * 3 + 1] * v[c * 3 + 1]
                            + w2 * v[r * 3 + 2] * v[c * 3 + 2])

cdef int _propagate_core(const double *r_prev, const double *w, double dt,
                         double *a, double *bmat, double *lam, double *v,
                         double *rg) nogil:
    """Euler step plus nearest-rotation projection; keeps eigen data."""
    cdef double s[9]
    cdef double m[9]
    bmat[0] = 1.0
    bmat[1] = -w[2] * dt
    bmat[2] = w[1] * dt
    bmat[3] = w[2] * dt
    bmat[4] = 1.0
    bmat[5] = -w[0] * dt
    bmat[6] = -w[1] * dt
    bmat[7] = w[0] * dt
    bmat[8] = 1.0
    _mat3_mul(r_prev, bmat, a)
    _mat3_mul_tn(a, a, s)
    _eig3(s, lam, v)
    if lam[0] < _EIG_FLOOR:
        return ERR_SINGULAR
    _m_from_eig(lam, v, m)
    _mat3_mul(a, m, rg)
    return ERR_OK


# -- gain network ----------------------------------------------------------

cdef inline double _transform(double r, int mode) nogil:
    cdef double a
    if mode == 0:
        if r >= 0.0:
            return r if r >= _RES_FLOOR else _RES_FLOOR
        return r if r <= -_RES_FLOOR else -_RES_FLOOR
    a = fabs(r)
    return a if a >= _RES_FLOOR else _RES_FLOOR

cdef inline double _transform_deriv(double r, int mode) nogil:
    if mode == 0:
        return 1.0 if fabs(r) >= _RES_FLOOR else 0.0
    if fabs(r) < _RES_FLOOR:
        return 0.0
    return 1.0 if r > 0.0 else -1.0

cdef inline void _features(double s, int n_in, double *u) nogil:
    cdef int p
    if n_in == 1:
        u[0] = s
        return
    for p in range(-3, 6):
        u[p + 3] = pow(s, <double> p)

cdef int _axis_forward(const double *pcm_axis, const NetDims *nd, int mode,
                       double r, double *k_out, double *acts) nogil:
    """One axis network; activations land in ``acts`` for the backward."""
    cdef double s = _transform(r, mode)
    cdef double *u = acts
    cdef double *t1 = acts + nd.n_in
    cdef double *t2 = t1 + H1
    cdef double *t3 = t2 + H2
    cdef double *t4 = t3 + H3
    cdef double z5
    _features(s, nd.n_in, u)
    daecf_dense_cm(pcm_axis + nd.w_off[0], pcm_axis + nd.b_off[0],
                   u, t1, nd.n_in, H1)
    if not daecf_all_finite(t1, H1):
        return ERR_NONFINITE
    daecf_vtanh(t1, H1)
    daecf_dense_cm(pcm_axis + nd.w_off[1], pcm_axis + nd.b_off[1],
                   t1, t2, H1, H2)
    if not daecf_all_finite(t2, H2):
        return ERR_NONFINITE
    daecf_vtanh(t2, H2)
    daecf_dense_cm(pcm_axis + nd.w_off[2], pcm_axis + nd.b_off[2],
                   t2, t3, H2, H3)
    if not daecf_all_finite(t3, H3):
        return ERR_NONFINITE
    daecf_vtanh(t3, H3)
    daecf_dense_cm(pcm_axis + nd.w_off[3], pcm_axis + nd.b_off[3],
                   t3, t4, H3, H4)
    if not daecf_all_finite(t4, H4):
        return ERR_NONFINITE
    daecf_vtanh(t4, H4)
    z5 = pcm_axis[nd.b_off[4]] + daecf_dot(pcm_axis + nd.w_off[4], t4, H4)
    if not daecf_is_finite(z5):
        return ERR_NONFINITE
    k_out[0] = tanh((z5 - 0.5) * 5.0) * 0.5 + 0.5
    return ERR_OK

cdef void _axis_backward(const double *flat_axis, const NetDims *nd, int mode,
                         double r, const double *acts, double up_k,
                         double k_val, double *grad_axis, double *dres) nogil:
    """Adjoint of one axis network given the upstream gain gradient."""
    cdef const double *u = acts
    cdef const double *t1 = acts + nd.n_in
    cdef const double *t2 = t1 + H1
    cdef const double *t3 = t2 + H2
    cdef const double *t4 = t3 + H3
    cdef double d3[H3]
    cdef double d2[H2]
    cdef double d1[H1]
    cdef double du[9]
    cdef double dz, ds, s, tt
    cdef const double *wrow
    cdef int i, j, p
    # squash derivative recovered from the gain value itself
    tt = 2.0 * k_val - 1.0
    cdef double dz5 = up_k * 2.5 * (1.0 - tt * tt)
    daecf_axpy(dz5, t4, grad_axis + nd.w_off[4], H4)
    wrow = flat_axis + nd.w_off[4]
    cdef double d4[H4]
    for i in range(H4):
        d4[i] = wrow[i] * dz5
    grad_axis[nd.b_off[4]] += dz5
    memset(d3, 0, sizeof(d3))
    for j in range(H4):
        dz = d4[j] * (1.0 - t4[j] * t4[j])
        daecf_axpy(dz, t3, grad_axis + nd.w_off[3] + j * H3, H3)
        daecf_axpy(dz, flat_axis + nd.w_off[3] + j * H3, d3, H3)
        grad_axis[nd.b_off[3] + j] += dz
    memset(d2, 0, sizeof(d2))
    for j in range(H3):
        dz = d3[j] * (1.0 - t3[j] * t3[j])
        daecf_axpy(dz, t2, grad_axis + nd.w_off[2] + j * H2, H2)
        daecf_axpy(dz, flat_axis + nd.w_off[2] + j * H2, d2, H2)
        grad_axis[nd.b_off[2] + j] += dz
    memset(d1, 0, sizeof(d1))
    for j in range(H2):
        dz = d2[j] * (1.0 - t2[j] * t2[j])
        daecf_axpy(dz, t1, grad_axis + nd.w_off[1] + j * H1, H1)
        daecf_axpy(dz, flat_axis + nd.w_off[1] + j * H1, d1, H1)
        grad_axis[nd.b_off[1] + j] += dz
    memset(du, 0, 9 * sizeof(double))
    for j in range(H1):
        dz = d1[j] * (1.0 - t1[j] * t1[j])
        daecf_axpy(dz, u, grad_axis + nd.w_off[0] + j * nd.n_in, nd.n_in)
        daecf_axpy(dz, flat_axis + nd.w_off[0] + j * nd.n_in, du, nd.n_in)
        grad_axis[nd.b_off[0] + j] += dz
    s = _transform(r, mode)
    if nd.n_in == 1:
        ds = du[0]
    else:
        ds = 0.0
        for p in range(-3, 6):
            ds += du[p + 3] * (<double> p) * pow(s, <double> (p - 1))
    dres[0] = ds * _transform_deriv(r, mode)


# -- filter step -----------------------------------------------------------

cdef int _step_forward_c(const double *r_prev, const double *w, double dt,
                         const double *acc, const double *pcm,
                         const NetDims *nd, int mode, const double *kconst,
                         double *r_out, double *k_out, double *tr,
                         double *acts_scratch) nogil:
    """One filter step writing the post-step attitude into ``r_out``.

    ``tr`` is the per-step trace row (may be NULL for lean runs); gains
    come from the packed network unless ``kconst`` overrides them.
    """
    cdef double a[9]
    cdef double bmat[9]
    cdef double lam[3]
    cdef double v[9]
    cdef double rg[9]
    cdef double g_pred[3]
    cdef double res[3]
    cdef double k[3]
    cdef double raw[3]
    cdef double g_u[3]
    cdef double c[3]
    cdef double z[3]
    cdef double y[3]
    cdef double nrm, cn
    cdef double *acts
    cdef int i, ax, code
    code = _propagate_core(r_prev, w, dt, a, bmat, lam, v, rg)
    if code:
        return code
    for i in range(3):
        g_pred[i] = rg[6 + i]
        res[i] = acc[i] - g_pred[i]
    acts = (tr + TR_ACTS) if tr != NULL else acts_scratch
    if kconst != NULL:
        k[0] = kconst[0]
        k[1] = kconst[1]
        k[2] = kconst[2]
    else:
        for ax in range(3):
            code = _axis_forward(pcm + ax * nd.axis_size, nd, mode, res[ax],
                                 &k[ax], acts + ax * nd.act_stride)
            if code:
                return code
    k_out[0] = k[0]
    k_out[1] = k[1]
    k_out[2] = k[2]
    if tr != NULL:
        memcpy(tr + TR_A, a, sizeof(a))
        memcpy(tr + TR_LAM, lam, sizeof(lam))
        memcpy(tr + TR_V, v, sizeof(v))
        memcpy(tr + TR_B, bmat, sizeof(bmat))
        memcpy(tr + TR_GPRED, g_pred, sizeof(g_pred))
        memcpy(tr + TR_MB, rg, 3 * sizeof(double))
        memcpy(tr + TR_RES, res, sizeof(res))
        memcpy(tr + TR_K, k, sizeof(k))
    if k[0] == 0.0 and k[1] == 0.0 and k[2] == 0.0:
        # exact-zero gains reduce the step to gyro-only propagation
        memcpy(r_out, rg, sizeof(rg))
        if tr != NULL:
            tr[TR_FLAG] = 1.0
            memcpy(tr + TR_SCORE, rg + 6, 3 * sizeof(double))
        return ERR_OK
    for i in range(3):
        raw[i] = g_pred[i] + k[i] * res[i]
    nrm = _norm3(raw)
    if nrm < _DEGENERATE_NORM:
        return ERR_DEGENERATE
    for i in range(3):
        g_u[i] = raw[i] / nrm
    _cross3(g_u, rg, c)  # rg rows: row 0 is the heading reference
    cn = _norm3(c)
    if cn < _DEGENERATE_NORM:
        # gravity parallel to the heading row: keep the propagated attitude
        memcpy(r_out, rg, sizeof(rg))
        if tr != NULL:
            tr[TR_FLAG] = 1.0
            memcpy(tr + TR_SCORE, rg + 6, 3 * sizeof(double))
        return ERR_OK
    for i in range(3):
        z[i] = c[i] / cn
    _cross3(z, g_u, y)
    for i in range(3):
        r_out[i] = y[i]
        r_out[3 + i] = z[i]
        r_out[6 + i] = g_u[i]
    if tr != NULL:
        tr[TR_FLAG] = 0.0
        tr[TR_NRM] = nrm
        memcpy(tr + TR_GU, g_u, sizeof(g_u))
        tr[TR_CN] = cn
        memcpy(tr + TR_Z, z, sizeof(z))
        memcpy(tr + TR_SCORE, g_u, sizeof(g_u))
    return ERR_OK


# -- python-facing validation helpers --------------------------------------

def _prescan_dt(cnp.ndarray[double, ndim=1] dt):
    bad = np.flatnonzero(dt <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise NonMonotonicTime(
            f"step {i}: time must be strictly increasing, dt={dt[i]!r}"
        )
    bad = np.flatnonzero(dt > _MAX_DT)
    if bad.size:
        i = int(bad[0])
        raise DtTooLarge(f"step {i}: dt={dt[i]!r} exceeds {_MAX_DT}")

def _check_flat(flat, int augmented):
    cdef NetDims nd
    _fill_dims(augmented, &nd)
    flat = np.ascontiguousarray(flat, dtype=np.float64)
    if flat.ndim != 1 or flat.size != 3 * nd.axis_size:
        raise ValueError(
            f"expected flat vector of {3 * nd.axis_size} parameters, "
            f"got shape {flat.shape}"
        )
    return flat

cdef _raise_step_error(int code, Py_ssize_t idx):
    if code == ERR_SINGULAR:
        raise SingularInput(f"step {idx}: propagated matrix is rank deficient")
    if code == ERR_DEGENERATE:
        raise DegenerateGravity(
            f"step {idx}: updated gravity collapsed below {_DEGENERATE_NORM}"
        )
    if code == ERR_NONFINITE:
        raise NonFiniteActivation(f"step {idx}: non-finite gain activation")
    raise RuntimeError(f"unknown kernel error code {code}")


# -- public kernels --------------------------------------------------------

def run_dae(r0, dt, gyro, acc, flat, augmented, mode_code):
    """Unroll the learned-gain filter; see the python backend docstring."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    flat = _check_flat(flat, int(augmented))
    _prescan_dt(dt)
    cdef int mode = int(mode_code)
    cdef NetDims nd
    _fill_dims(int(augmented), &nd)
    cdef Py_ssize_t n = dt.shape[0]
    r_seq = np.empty((n, 3, 3))
    k_seq = np.empty((n, 3))
    pcm = np.empty(3 * nd.axis_size)
    acts = np.empty(3 * nd.act_stride)
    cdef double[:, :, ::1] r_v = r_seq
    cdef double[:, ::1] k_v = k_seq
    cdef double[::1] pcm_v = pcm
    cdef double[::1] acts_v = acts
    cdef double[::1] flat_v = flat
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] r0_v = r0
    cdef double r_prev[9]
    cdef Py_ssize_t i
    cdef int code = 0
    cdef Py_ssize_t fail = -1
    with nogil:
        _pack_cm(&flat_v[0], &pcm_v[0], &nd)
        memcpy(r_prev, &r0_v[0, 0], sizeof(r_prev))
        for i in range(n):
            code = _step_forward_c(r_prev, &gyro_v[i, 0], dt_v[i],
                                   &acc_v[i, 0], &pcm_v[0], &nd, mode, NULL,
                                   &r_v[i, 0, 0], &k_v[i, 0], NULL,
                                   &acts_v[0])
            if code:
                fail = i
                break
            memcpy(r_prev, &r_v[i, 0, 0], sizeof(r_prev))
    if code:
        _raise_step_error(code, fail)
    return r_seq, np.ascontiguousarray(r_seq[:, 2, :]), k_seq

def run_const_cf(r0, dt, gyro, acc, k):
    """Unroll the filter with fixed gains (scalar broadcast or 3-vector)."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), (3,)).copy()
    if np.any(k < 0.0) or np.any(k > 1.0):
        raise ValueError(f"gains must lie in [0, 1], got {k}")
    _prescan_dt(dt)
    cdef NetDims nd
    _fill_dims(1, &nd)
    cdef Py_ssize_t n = dt.shape[0]
    r_seq = np.empty((n, 3, 3))
    cdef double[:, :, ::1] r_v = r_seq
    cdef double[::1] k_v = k
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] r0_v = r0
    cdef double r_prev[9]
    cdef double k_out[3]
    cdef Py_ssize_t i
    cdef int code = 0
    cdef Py_ssize_t fail = -1
    with nogil:
        memcpy(r_prev, &r0_v[0, 0], sizeof(r_prev))
        for i in range(n):
            code = _step_forward_c(r_prev, &gyro_v[i, 0], dt_v[i],
                                   &acc_v[i, 0], NULL, &nd, 0, &k_v[0],
                                   &r_v[i, 0, 0], k_out, NULL, NULL)
            if code:
                fail = i
                break
            memcpy(r_prev, &r_v[i, 0, 0], sizeof(r_prev))
    if code:
        _raise_step_error(code, fail)
    return r_seq, np.ascontiguousarray(r_seq[:, 2, :])

cdef int _loss_forward_c(const double *r0, const double *dt,
                         const double *gyro, const double *acc,
                         const double *g_gt, const double *pcm,
                         const NetDims *nd, int mode, Py_ssize_t n,
                         double *acts, double *j_out,
                         Py_ssize_t *fail) nogil:
    cdef double r_prev[9]
    cdef double r_next[9]
    cdef double k_out[3]
    cdef double acc_l2 = 0.0
    cdef double dot, l
    cdef Py_ssize_t i
    cdef int code
    memcpy(r_prev, r0, sizeof(r_prev))
    for i in range(n):
        code = _step_forward_c(r_prev, gyro + 3 * i, dt[i], acc + 3 * i,
                               pcm, nd, mode, NULL, r_next, k_out, NULL, acts)
        if code:
            fail[0] = i
            return code
        dot = _dot3(r_next + 6, g_gt + 3 * i)
        if dot > 1.0 - _ACOS_MARGIN:
            dot = 1.0 - _ACOS_MARGIN
        elif dot < -1.0 + _ACOS_MARGIN:
            dot = -1.0 + _ACOS_MARGIN
        l = acos(dot)
        acc_l2 += l * l
        memcpy(r_prev, r_next, sizeof(r_prev))
    j_out[0] = sqrt(acc_l2 / <double> n)
    return ERR_OK

def dae_loss(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code):
    """RMS gravity angle between the unrolled filter and ground truth."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    g_gt = _check_gt(g_gt, dt.shape[0])
    flat = _check_flat(flat, int(augmented))
    _prescan_dt(dt)
    cdef int mode = int(mode_code)
    cdef NetDims nd
    _fill_dims(int(augmented), &nd)
    cdef Py_ssize_t n = dt.shape[0]
    pcm = np.empty(3 * nd.axis_size)
    acts = np.empty(3 * nd.act_stride)
    cdef double[::1] pcm_v = pcm
    cdef double[::1] acts_v = acts
    cdef double[::1] flat_v = flat
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] gt_v = g_gt
    cdef double[:, ::1] r0_v = r0
    cdef double j = 0.0
    cdef Py_ssize_t fail = -1
    cdef int code
    with nogil:
        _pack_cm(&flat_v[0], &pcm_v[0], &nd)
        code = _loss_forward_c(&r0_v[0, 0], &dt_v[0], &gyro_v[0, 0],
                               &acc_v[0, 0], &gt_v[0, 0], &pcm_v[0], &nd,
                               mode, n, &acts_v[0], &j, &fail)
    if code:
        _raise_step_error(code, fail)
    if not np.isfinite(j):
        raise NonFiniteLoss("gravity-angle objective is not finite")
    return float(j)

cdef void _backward_c(const double *flat, const NetDims *nd, int mode,
                      const double *traces, Py_ssize_t stride, Py_ssize_t n,
                      const double *g_gt, const double *dj_ddot,
                      double *grad) nogil:
    cdef double g_r[9]
    cdef double g_rg[9]
    cdef double g_a[9]
    cdef double g_m_mat[9]
    cdef double m[9]
    cdef double p_mat[9]
    cdef double q_mat[9]
    cdef double tmp[9]
    cdef double g_gu[3]
    cdef double g_z[3]
    cdef double g_c[3]
    cdef double g_mb[3]
    cdef double g_raw[3]
    cdef double g_res[3]
    cdef double scratch3[3]
    cdef double sq[3]
    cdef double up_k, dres, coef
    cdef const double *tr
    cdef const double *g_u
    cdef const double *zv
    cdef const double *mb
    cdef const double *res
    cdef const double *kv
    cdef Py_ssize_t i
    cdef int r, c, ax
    memset(g_r, 0, sizeof(g_r))
    for i in range(n - 1, -1, -1):
        tr = traces + i * stride
        for c in range(3):
            g_r[6 + c] += dj_ddot[i] * g_gt[3 * i + c]
        if tr[TR_FLAG] != 0.0:
            memcpy(g_rg, g_r, sizeof(g_rg))
        else:
            g_u = tr + TR_GU
            zv = tr + TR_Z
            mb = tr + TR_MB
            res = tr + TR_RES
            kv = tr + TR_K
            # rows of the rebuilt attitude: y, z, g_u
            for c in range(3):
                g_gu[c] = g_r[6 + c]
            # y = z x g_u
            _cross3(g_u, g_r, scratch3)
            for c in range(3):
                g_z[c] = g_r[3 + c] + scratch3[c]
            _cross3(g_r, zv, scratch3)
            for c in range(3):
                g_gu[c] += scratch3[c]
            # z = c / |c|
            coef = _dot3(zv, g_z)
            for c in range(3):
                g_c[c] = (g_z[c] - zv[c] * coef) / tr[TR_CN]
            # c = g_u x m_b
            _cross3(mb, g_c, scratch3)
            for c in range(3):
                g_gu[c] += scratch3[c]
            _cross3(g_c, g_u, g_mb)
            # g_u = raw / |raw|
            coef = _dot3(g_u, g_gu)
            for c in range(3):
                g_raw[c] = (g_gu[c] - g_u[c] * coef) / tr[TR_NRM]
            # raw = g_pred + k * res; gains feed back into their networks
            for ax in range(3):
                up_k = res[ax] * g_raw[ax]
                _axis_backward(flat + ax * nd.axis_size, nd, mode, res[ax],
                               tr + TR_ACTS + ax * nd.act_stride, up_k,
                               kv[ax], grad + ax * nd.axis_size, &dres)
                g_res[ax] = kv[ax] * g_raw[ax] + dres
            memset(g_rg, 0, sizeof(g_rg))
            for c in range(3):
                g_rg[c] = g_mb[c]
                g_rg[6 + c] = g_raw[c] - g_res[c]
        # adjoint of the nearest-rotation projection
        _m_from_eig(tr + TR_LAM, tr + TR_V, m)
        _mat3_mul_tn(tr + TR_A, g_rg, g_m_mat)
        _mat3_mul_tn(tr + TR_V, g_m_mat, tmp)
        _mat3_mul(tmp, tr + TR_V, p_mat)
        sq[0] = sqrt(tr[TR_LAM])
        sq[1] = sqrt(tr[TR_LAM + 1])
        sq[2] = sqrt(tr[TR_LAM + 2])
        for r in range(3):
            for c in range(3):
                p_mat[r * 3 + c] *= -1.0 / (sq[r] * sq[c] * (sq[r] + sq[c]))
        _mat3_mul(tr + TR_V, p_mat, tmp)
        _mat3_mul_nt(tmp, tr + TR_V, q_mat)
        # g_a = g_rg m + a (q + q^T)
        _mat3_mul(g_rg, m, g_a)
        for r in range(3):
            for c in range(3):
                tmp[r * 3 + c] = q_mat[r * 3 + c] + q_mat[c * 3 + r]
        _mat3_mul(tr + TR_A, tmp, p_mat)
        for r in range(9):
            g_a[r] += p_mat[r]
        _mat3_mul_nt(g_a, tr + TR_B, g_r)

def dae_loss_grad(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code):
    """Loss and its gradient for every network parameter (reverse mode)."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    g_gt = _check_gt(g_gt, dt.shape[0])
    flat = _check_flat(flat, int(augmented))
    _prescan_dt(dt)
    cdef int mode = int(mode_code)
    cdef NetDims nd
    _fill_dims(int(augmented), &nd)
    cdef Py_ssize_t n = dt.shape[0]
    cdef Py_ssize_t stride = TR_ACTS + 3 * nd.act_stride
    traces = np.empty((n, stride))
    pcm = np.empty(3 * nd.axis_size)
    grad = np.zeros(3 * nd.axis_size)
    cdef double[:, ::1] tr_v = traces
    cdef double[::1] pcm_v = pcm
    cdef double[::1] grad_v = grad
    cdef double[::1] flat_v = flat
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] gt_v = g_gt
    cdef double[:, ::1] r0_v = r0
    cdef double r_prev[9]
    cdef double r_next[9]
    cdef double k_out[3]
    cdef Py_ssize_t i
    cdef int code = 0
    cdef Py_ssize_t fail = -1
    with nogil:
        _pack_cm(&flat_v[0], &pcm_v[0], &nd)
        memcpy(r_prev, &r0_v[0, 0], sizeof(r_prev))
        for i in range(n):
            code = _step_forward_c(r_prev, &gyro_v[i, 0], dt_v[i],
                                   &acc_v[i, 0], &pcm_v[0], &nd, mode, NULL,
                                   r_next, k_out, &tr_v[i, 0], NULL)
            if code:
                fail = i
                break
            memcpy(r_prev, r_next, sizeof(r_prev))
    if code:
        _raise_step_error(code, fail)
    score = traces[:, TR_SCORE:TR_SCORE + 3]
    dots = np.einsum("ij,ij->i", score, g_gt)
    clipped = np.clip(dots, -1.0 + _ACOS_MARGIN, 1.0 - _ACOS_MARGIN)
    angles = np.arccos(clipped)
    j = float(np.sqrt(np.mean(angles * angles)))
    if not np.isfinite(j):
        raise NonFiniteLoss("gravity-angle objective is not finite")
    dj_ddot = (angles / (n * j)) * (-1.0 / np.sqrt(1.0 - clipped * clipped))
    dj_ddot = np.ascontiguousarray(dj_ddot)
    cdef double[::1] dj_v = dj_ddot
    with nogil:
        _backward_c(&flat_v[0], &nd, mode, &tr_v[0, 0], stride, n,
                    &gt_v[0, 0], &dj_v[0], &grad_v[0])
    return j, grad

def dae_fd_grad(r0, dt, gyro, acc, g_gt, flat, augmented, mode_code,
                h=1e-5, indices=None):
    """Central-difference gradient of :func:`dae_loss`.

    The probe loop runs entirely in C: each parameter is poked through an
    index map into the packed weights, so one call prices out any subset
    of parameters (all of them by default).
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    g_gt = _check_gt(g_gt, dt.shape[0])
    flat = _check_flat(flat, int(augmented))
    _prescan_dt(dt)
    cdef int mode = int(mode_code)
    cdef NetDims nd
    _fill_dims(int(augmented), &nd)
    cdef Py_ssize_t n = dt.shape[0]
    cdef Py_ssize_t n_params = 3 * nd.axis_size
    if indices is None:
        idx = np.arange(n_params, dtype=np.int64)
    else:
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_params):
            raise ValueError("parameter index out of range")
    out = np.empty(idx.size)
    cmap = np.empty(n_params, dtype=np.int64)
    pcm = np.empty(3 * nd.axis_size)
    acts = np.empty(3 * nd.act_stride)
    cdef double[::1] out_v = out
    cdef long long[::1] idx_v = idx
    cdef long long[::1] map_v = cmap
    cdef double[::1] pcm_v = pcm
    cdef double[::1] acts_v = acts
    cdef double[::1] flat_v = flat
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] gt_v = g_gt
    cdef double[:, ::1] r0_v = r0
    cdef double hh = float(h)
    cdef double saved, hi, lo
    cdef Py_ssize_t pos, k, m = idx.size
    cdef Py_ssize_t fail = -1
    cdef int code = 0
    with nogil:
        _pack_cm(&flat_v[0], &pcm_v[0], &nd)
        _build_map(&nd, &map_v[0])
        for pos in range(m):
            k = map_v[idx_v[pos]]
            saved = pcm_v[k]
            pcm_v[k] = saved + hh
            code = _loss_forward_c(&r0_v[0, 0], &dt_v[0], &gyro_v[0, 0],
                                   &acc_v[0, 0], &gt_v[0, 0], &pcm_v[0],
                                   &nd, mode, n, &acts_v[0], &hi, &fail)
            if code:
                break
            pcm_v[k] = saved - hh
            code = _loss_forward_c(&r0_v[0, 0], &dt_v[0], &gyro_v[0, 0],
                                   &acc_v[0, 0], &gt_v[0, 0], &pcm_v[0],
                                   &nd, mode, n, &acts_v[0], &lo, &fail)
            if code:
                break
            pcm_v[k] = saved
            out_v[pos] = (hi - lo) / (2.0 * hh)
    if code:
        _raise_step_error(code, fail)
    return out


# -- classic baselines -----------------------------------------------------

def run_madgwick(r0, dt, gyro, acc, beta):
    """Gradient-descent orientation filter (quaternion form)."""
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    _prescan_dt(dt)
    q0 = _quat_from_matrix(r0)
    cdef Py_ssize_t n = dt.shape[0]
    r_seq = np.empty((n, 3, 3))
    cdef double[:, :, ::1] r_v = r_seq
    cdef double[::1] q0_v = q0
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double b = float(beta)
    cdef double q[4]
    cdef double qdot[4]
    cdef double grad[4]
    cdef double w, x, y, z, gx, gy, gz, an, ax, ay, az
    cdef double f0, f1, f2, gn, d, inv
    cdef Py_ssize_t i
    cdef int r, c
    with nogil:
        memcpy(q, &q0_v[0], sizeof(q))
        for i in range(n):
            d = dt_v[i]
            w = q[0]
            x = q[1]
            y = q[2]
            z = q[3]
            gx = gyro_v[i, 0]
            gy = gyro_v[i, 1]
            gz = gyro_v[i, 2]
            qdot[0] = 0.5 * (-x * gx - y * gy - z * gz)
            qdot[1] = 0.5 * (w * gx + y * gz - z * gy)
            qdot[2] = 0.5 * (w * gy - x * gz + z * gx)
            qdot[3] = 0.5 * (w * gz + x * gy - y * gx)
            an = sqrt(acc_v[i, 0] * acc_v[i, 0] + acc_v[i, 1] * acc_v[i, 1]
                      + acc_v[i, 2] * acc_v[i, 2])
            if b > 0.0 and an > _DEGENERATE_NORM:
                ax = acc_v[i, 0] / an
                ay = acc_v[i, 1] / an
                az = acc_v[i, 2] / an
                f0 = 2.0 * (x * z - w * y) - ax
                f1 = 2.0 * (w * x + y * z) - ay
                f2 = w * w - x * x - y * y + z * z - az
                grad[0] = -2.0 * y * f0 + 2.0 * x * f1 + 2.0 * w * f2
                grad[1] = 2.0 * z * f0 + 2.0 * w * f1 - 2.0 * x * f2
                grad[2] = -2.0 * w * f0 + 2.0 * z * f1 - 2.0 * y * f2
                grad[3] = 2.0 * x * f0 + 2.0 * y * f1 + 2.0 * z * f2
                gn = sqrt(grad[0] * grad[0] + grad[1] * grad[1]
                          + grad[2] * grad[2] + grad[3] * grad[3])
                if gn > 1e-12:
                    qdot[0] -= b * grad[0] / gn
                    qdot[1] -= b * grad[1] / gn
                    qdot[2] -= b * grad[2] / gn
                    qdot[3] -= b * grad[3] / gn
            q[0] += qdot[0] * d
            q[1] += qdot[1] * d
            q[2] += qdot[2] * d
            q[3] += qdot[3] * d
            inv = 1.0 / sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]
                             + q[3] * q[3])
            q[0] *= inv
            q[1] *= inv
            q[2] *= inv
            q[3] *= inv
            w = q[0]
            x = q[1]
            y = q[2]
            z = q[3]
            r_v[i, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
            r_v[i, 0, 1] = 2.0 * (x * y - w * z)
            r_v[i, 0, 2] = 2.0 * (x * z + w * y)
            r_v[i, 1, 0] = 2.0 * (x * y + w * z)
            r_v[i, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
            r_v[i, 1, 2] = 2.0 * (y * z - w * x)
            r_v[i, 2, 0] = 2.0 * (x * z - w * y)
            r_v[i, 2, 1] = 2.0 * (y * z + w * x)
            r_v[i, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r_seq

def run_mahony(r0, dt, gyro, acc, kp, ki):
    """Proportional(-integral) gravity-correction complementary filter.

    Shares the projected Euler propagation with the learned filter, so a
    zero proportional gain reproduces gyro-only integration exactly.
    """
    r0, dt, gyro, acc = _check_step_arrays(r0, dt, gyro, acc)
    _prescan_dt(dt)
    cdef Py_ssize_t n = dt.shape[0]
    r_seq = np.empty((n, 3, 3))
    cdef double[:, :, ::1] r_v = r_seq
    cdef double[::1] dt_v = dt
    cdef double[:, ::1] gyro_v = gyro
    cdef double[:, ::1] acc_v = acc
    cdef double[:, ::1] r0_v = r0
    cdef double p = float(kp)
    cdef double integ = float(ki)
    cdef double r_prev[9]
    cdef double a[9]
    cdef double bmat[9]
    cdef double lam[3]
    cdef double v[9]
    cdef double w_eff[3]
    cdef double err[3]
    cdef double meas[3]
    cdef double bias[3]
    cdef double an, d
    cdef Py_ssize_t i
    cdef int code = 0
    cdef Py_ssize_t fail = -1
    cdef int c
    with nogil:
        memcpy(r_prev, &r0_v[0, 0], sizeof(r_prev))
        bias[0] = bias[1] = bias[2] = 0.0
        for i in range(n):
            d = dt_v[i]
            w_eff[0] = gyro_v[i, 0]
            w_eff[1] = gyro_v[i, 1]
            w_eff[2] = gyro_v[i, 2]
            an = _norm3(&acc_v[i, 0])
            if (p > 0.0 or integ > 0.0) and an > _DEGENERATE_NORM:
                for c in range(3):
                    meas[c] = acc_v[i, c] / an
                _cross3(meas, r_prev + 6, err)
                if integ > 0.0:
                    for c in range(3):
                        bias[c] += integ * err[c] * d
                for c in range(3):
                    w_eff[c] += p * err[c] + bias[c]
            code = _propagate_core(r_prev, w_eff, d, a, bmat, lam, v,
                                   &r_v[i, 0, 0])
            if code:
                fail = i
                break
            memcpy(r_prev, &r_v[i, 0, 0], sizeof(r_prev))
    if code:
        _raise_step_error(code, fail)
    return r_seq

def build_info():
    """Compile-time facts about this extension build."""
    return {"backend": BACKEND_NAME, "vector_tanh": bool(DAECF_VECTOR_TANH)}
