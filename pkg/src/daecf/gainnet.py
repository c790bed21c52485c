"""Per-axis gain networks: three independent MLPs mapping a residual
component to an accelerometer blending weight in (0, 1).

Each axis network takes one residual scalar, augments it to a vector of
integer powers r^-3 .. r^5 (with the magnitude clamped away from zero),
passes it through dense layers of sizes 16, 32, 64, 32, 1 joined by tanh
activations, and squashes the output with a soft threshold so the
resulting gain always lies strictly between 0 and 1.

Parameters for all three axes live in one flat float64 vector, ordered
axis-major, then layer-major, each layer as row-major weight matrix
followed by its bias vector.  The binary file format (`save_bytes` /
`load_bytes`) serializes that vector behind a magic header, a version,
the residual-transform mode, and a per-axis layer-shape table.
"""

from __future__ import annotations

import io
import struct

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import FormatError, NonFiniteActivation

__all__ = [
    "AUGMENT_POWERS",
    "RESIDUAL_FLOOR",
    "HIDDEN_SIZES",
    "RESIDUAL_MODES",
    "augment",
    "soft_threshold",
    "layer_shapes",
    "param_count",
    "GainNet",
]

AUGMENT_POWERS = (-3, -2, -1, 0, 1, 2, 3, 4, 5)
RESIDUAL_FLOOR = 1e-4
HIDDEN_SIZES = (16, 32, 64, 32)
RESIDUAL_MODES = ("signed-clamp", "absolute")

# Reference residual magnitude for initialization.  The power features
# span ~24 orders of magnitude over the clamp range, so unscaled
# first-layer weights saturate every input tanh and freeze the input
# gradient at exactly zero; training then cannot recover.  Scaling each
# input column so its feature contributes O(1) near this residual keeps
# the first layer responsive over the magnitudes IMU residuals actually
# take (noise ~1e-3, strong disturbances ~0.3).
INIT_REFERENCE_RESIDUAL = 0.03

_MAGIC = b"DAECFGN1"
_VERSION = 1
# final-layer weights are damped at init so fresh gains concentrate near
# soft_threshold(0.5) = 0.5 instead of saturating the threshold
_FINAL_LAYER_INIT_SCALE = 0.1


def _transform_residual(r: float, mode: str) -> float:
    """Apply the residual preprocessing for one axis.

    signed-clamp keeps the sign and lifts the magnitude to at least
    RESIDUAL_FLOOR; absolute feeds the clamped magnitude only.
    """
    if mode == "signed-clamp":
        if r >= 0.0:
            return r if r >= RESIDUAL_FLOOR else RESIDUAL_FLOOR
        return r if r <= -RESIDUAL_FLOOR else -RESIDUAL_FLOOR
    if mode == "absolute":
        a = abs(r)
        return a if a >= RESIDUAL_FLOOR else RESIDUAL_FLOOR
    raise ValueError(f"unknown residual mode {mode!r}")


def _transform_derivative(r: float, mode: str) -> float:
    """d(transformed)/dr; zero inside the clamped dead zone."""
    if mode == "signed-clamp":
        return 1.0 if abs(r) >= RESIDUAL_FLOOR else 0.0
    if mode == "absolute":
        if abs(r) < RESIDUAL_FLOOR:
            return 0.0
        return 1.0 if r > 0.0 else -1.0
    raise ValueError(f"unknown residual mode {mode!r}")


def augment(r: float, mode: str = "signed-clamp") -> NDArray[np.float64]:
    """Expand a residual scalar into its power features r^-3 .. r^5.

    The magnitude is clamped to at least 1e-4 first (preserving sign in
    the default mode), which bounds the negative powers: at the clamp
    boundary r^-3 reaches 1e12, the largest feature the network sees.
    """
    s = _transform_residual(float(r), mode)
    return np.array([s ** p for p in AUGMENT_POWERS], dtype=np.float64)


def soft_threshold(x):
    """Smooth squash onto (0, 1): ``tanh((x - 0.5) * 5) * 0.5 + 0.5``.

    Maps 0.5 to 0.5 with slope 2.5 and saturates smoothly at both ends.
    Accepts scalars or arrays.
    """
    return np.tanh((x - 0.5) * 5.0) * 0.5 + 0.5


def _soft_threshold_derivative(x: float) -> float:
    t = np.tanh((x - 0.5) * 5.0)
    return 2.5 * (1.0 - t * t)


def layer_shapes(augmented: bool = True) -> list[tuple[int, int]]:
    """(out, in) shape of each dense layer for one axis network."""
    n_in = len(AUGMENT_POWERS) if augmented else 1
    dims = (n_in,) + HIDDEN_SIZES + (1,)
    return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


def param_count(augmented: bool = True) -> int:
    """Total number of parameters across all three axis networks."""
    return 3 * sum(o * i + o for o, i in layer_shapes(augmented))


def _axis_offsets(shapes: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """(weight_offset, bias_offset) of each layer within one axis block."""
    offs = []
    pos = 0
    for o, i in shapes:
        offs.append((pos, pos + o * i))
        pos += o * i + o
    return offs


class GainNet:
    """Three per-axis gain networks over one flat parameter vector.

    Parameters
    ----------
    flat : ndarray
        Flat float64 parameter vector (see module docstring for layout).
    augmented : bool
        If True (default) the input is the 9-element power expansion;
        if False the network sees the transformed residual scalar alone.
    residual_mode : str
        'signed-clamp' (default) or 'absolute'; how the raw residual is
        preprocessed before augmentation.
    """

    def __init__(self, flat: ArrayLike, augmented: bool = True,
                 residual_mode: str = "signed-clamp"):
        if residual_mode not in RESIDUAL_MODES:
            raise ValueError(f"unknown residual mode {residual_mode!r}")
        self.augmented = bool(augmented)
        self.residual_mode = residual_mode
        self.shapes = layer_shapes(self.augmented)
        self.axis_size = sum(o * i + o for o, i in self.shapes)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != 3 * self.axis_size:
            raise ValueError(
                f"expected flat vector of {3 * self.axis_size} parameters, "
                f"got shape {flat.shape}"
            )
        self.flat = flat
        self._offsets = _axis_offsets(self.shapes)

    # -- construction -------------------------------------------------

    @classmethod
    def init(cls, seed: int, augmented: bool = True,
             residual_mode: str = "signed-clamp",
             reference_scale: float = INIT_REFERENCE_RESIDUAL) -> "GainNet":
        """Deterministic random initialization.

        Weights are uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)) and
        biases zero, with two adjustments.  Input columns are rescaled
        per feature so that a residual near ``reference_scale``
        produces O(1) preactivations (see ``INIT_REFERENCE_RESIDUAL``).
        The final layer's weights are damped by 0.1 and its bias is
        0.5, so a fresh network outputs gains near
        soft_threshold(0.5) = 0.5 for any residual.
        """
        shapes = layer_shapes(augmented)
        powers = AUGMENT_POWERS if augmented else (1,)
        in_scale = np.array([float(reference_scale) ** (-p) for p in powers])
        rng = np.random.default_rng(seed)
        blocks = []
        for _axis in range(3):
            for li, (o, i) in enumerate(shapes):
                bound = 1.0 / np.sqrt(i)
                w = rng.uniform(-bound, bound, size=(o, i))
                b = np.zeros(o)
                if li == 0:
                    w *= in_scale[None, :]
                if li == len(shapes) - 1:
                    w *= _FINAL_LAYER_INIT_SCALE
                    b[:] = 0.5
                blocks.append(w.ravel())
                blocks.append(b)
        return cls(np.concatenate(blocks), augmented, residual_mode)

    # -- layer access -------------------------------------------------

    def layer(self, axis: int, index: int):
        """Return (weights, bias) views of one layer of one axis."""
        o, i = self.shapes[index]
        w_off, b_off = self._offsets[index]
        base = axis * self.axis_size
        w = self.flat[base + w_off: base + w_off + o * i].reshape(o, i)
        b = self.flat[base + b_off: base + b_off + o]
        return w, b

    # -- inference ----------------------------------------------------

    def _axis_input(self, r: float) -> NDArray[np.float64]:
        if self.augmented:
            return augment(r, self.residual_mode)
        return np.array([_transform_residual(float(r), self.residual_mode)])

    def forward_axis(self, axis: int, r: float) -> float:
        """Gain for one axis given its residual component."""
        a = self._axis_input(r)
        for li in range(len(self.shapes)):
            w, b = self.layer(axis, li)
            a = w @ a + b
            if not np.all(np.isfinite(a)):
                raise NonFiniteActivation(
                    f"non-finite activation in axis {axis} layer {li}"
                )
            if li < len(self.shapes) - 1:
                a = np.tanh(a)
        return float(soft_threshold(a[0]))

    def forward(self, residual: ArrayLike) -> NDArray[np.float64]:
        """Gains for all three axes; each in (0, 1)."""
        res = np.asarray(residual, dtype=np.float64).reshape(3)
        return np.array([self.forward_axis(ax, res[ax]) for ax in range(3)])

    def _forward_axis_cached(self, axis: int, r: float):
        """Forward pass keeping activations for the backward pass."""
        u = self._axis_input(r)
        acts = [u]
        a = u
        for li in range(len(self.shapes)):
            w, b = self.layer(axis, li)
            z = w @ a + b
            if not np.all(np.isfinite(z)):
                raise NonFiniteActivation(
                    f"non-finite activation in axis {axis} layer {li}"
                )
            if li < len(self.shapes) - 1:
                a = np.tanh(z)
                acts.append(a)
            else:
                acts.append(z)
        z5 = float(acts[-1][0])
        return float(soft_threshold(z5)), acts

    def backward(self, residual: ArrayLike, upstream: ArrayLike):
        """Reverse-mode gradients of the gains.

        Parameters
        ----------
        residual : 3-vector
            The residual at which the forward pass ran.
        upstream : 3-vector
            Gradient of the downstream scalar with respect to each gain.

        Returns
        -------
        (grad_flat, grad_residual)
            Gradient with respect to every entry of ``flat`` (same
            layout) and with respect to the three residual components.
            The clamp's dead zone passes zero gradient.
        """
        res = np.asarray(residual, dtype=np.float64).reshape(3)
        up = np.asarray(upstream, dtype=np.float64).reshape(3)
        grad_flat = np.zeros_like(self.flat)
        grad_res = np.zeros(3)
        n_layers = len(self.shapes)
        for ax in range(3):
            _, acts = self._forward_axis_cached(ax, res[ax])
            z5 = float(acts[-1][0])
            dz = np.array([up[ax] * _soft_threshold_derivative(z5)])
            base = ax * self.axis_size
            for li in range(n_layers - 1, -1, -1):
                o, i = self.shapes[li]
                w_off, b_off = self._offsets[li]
                w, _ = self.layer(ax, li)
                a_prev = acts[li]
                grad_flat[base + w_off: base + w_off + o * i] += np.outer(
                    dz, a_prev
                ).ravel()
                grad_flat[base + b_off: base + b_off + o] += dz
                da = w.T @ dz
                if li > 0:
                    dz = da * (1.0 - acts[li] ** 2)
                else:
                    du = da
            s = _transform_residual(float(res[ax]), self.residual_mode)
            if self.augmented:
                dpow = np.array(
                    [p * s ** (p - 1) for p in AUGMENT_POWERS], dtype=np.float64
                )
                ds = float(du @ dpow)
            else:
                ds = float(du[0])
            grad_res[ax] = ds * _transform_derivative(
                float(res[ax]), self.residual_mode
            )
        return grad_flat, grad_res

    # -- serialization ------------------------------------------------

    def save_bytes(self) -> bytes:
        """Serialize to the versioned little-endian binary format."""
        out = io.BytesIO()
        out.write(_MAGIC)
        mode_code = RESIDUAL_MODES.index(self.residual_mode)
        out.write(struct.pack("<IIII", _VERSION, mode_code, 3, len(self.shapes)))
        for _axis in range(3):
            for o, i in self.shapes:
                out.write(struct.pack("<II", o, i))
        out.write(self.flat.astype("<f8").tobytes())
        return out.getvalue()

    @classmethod
    def load_bytes(cls, blob: bytes) -> "GainNet":
        """Parse the binary format; raises FormatError on any mismatch."""
        if len(blob) < len(_MAGIC) + 16:
            raise FormatError("parameter stream truncated before header")
        if blob[: len(_MAGIC)] != _MAGIC:
            raise FormatError("bad magic: not a gain-network parameter file")
        pos = len(_MAGIC)
        version, mode_code, n_axes, n_layers = struct.unpack_from("<IIII", blob, pos)
        pos += 16
        if version != _VERSION:
            raise FormatError(f"unsupported format version {version}")
        if mode_code >= len(RESIDUAL_MODES):
            raise FormatError(f"unknown residual-mode code {mode_code}")
        if n_axes != 3:
            raise FormatError(f"expected 3 axis networks, file has {n_axes}")
        table_bytes = n_axes * n_layers * 8
        if len(blob) < pos + table_bytes:
            raise FormatError("parameter stream truncated inside shape table")
        per_axis = []
        for _axis in range(n_axes):
            shapes = []
            for _l in range(n_layers):
                o, i = struct.unpack_from("<II", blob, pos)
                pos += 8
                shapes.append((o, i))
            per_axis.append(shapes)
        if any(s != per_axis[0] for s in per_axis[1:]):
            raise FormatError("axis networks have inconsistent shapes")
        for augmented in (True, False):
            if per_axis[0] == layer_shapes(augmented):
                break
        else:
            raise FormatError(f"unsupported layer shapes {per_axis[0]}")
        n_params = 3 * sum(o * i + o for o, i in per_axis[0])
        expected = pos + 8 * n_params
        if len(blob) < expected:
            raise FormatError(
                f"parameter stream truncated: need {expected} bytes, "
                f"have {len(blob)}"
            )
        if len(blob) > expected:
            raise FormatError(f"{len(blob) - expected} trailing bytes")
        flat = np.frombuffer(blob, dtype="<f8", offset=pos, count=n_params)
        if not np.all(np.isfinite(flat)):
            raise FormatError("parameter stream contains non-finite values")
        return cls(flat.astype(np.float64), augmented,
                   RESIDUAL_MODES[mode_code])

    def save(self, path) -> None:
        """Write the parameter file at ``path``."""
        with open(path, "wb") as fh:
            fh.write(self.save_bytes())

    @classmethod
    def load(cls, path) -> "GainNet":
        """Read a parameter file written by :meth:`save`."""
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())
