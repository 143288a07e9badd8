"""Derivative-augmented evaluation of the fixed 2-10-10-10-10-1 tanh MLP.

Every hidden layer propagates the tuple ``(a, da/dx, da/dt, d2a/dx2)``
through ``a = tanh(W p + b)`` in closed form, so a single pass yields the
network output together with the three input derivatives the heat
residuals need.  Parameter gradients are obtained by reverse accumulation
through that augmented pass (see ``_kernels``); accumulation order is fixed,
which keeps results bit-for-bit reproducible.

Parameters are stored as one flat float64 vector (offsets in ``WEIGHT_SLOTS``
and ``BIAS_SLOTS``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

N_IN = 2
WIDTH = 10
N_HIDDEN = 4
LAYER_SHAPES = ((WIDTH, N_IN), (WIDTH, WIDTH), (WIDTH, WIDTH), (WIDTH, WIDTH), (1, WIDTH))


def _layout():
    offsets = []
    pos = 0
    for shape in LAYER_SHAPES:
        offsets.append((pos, shape))
        pos += shape[0] * shape[1]
    w_offsets = offsets
    b_offsets = []
    for shape in LAYER_SHAPES:
        b_offsets.append((pos, (shape[0],)))
        pos += shape[0]
    return tuple(w_offsets), tuple(b_offsets), pos


WEIGHT_SLOTS, BIAS_SLOTS, N_PARAMS = _layout()

# Column order of augmented outputs.
VALUE, D_DX, D_DT, D2_DX2 = range(4)


@dataclass(frozen=True)
class DualState:
    """Network output and its input derivatives (scalars or equal-length arrays)."""

    value: np.ndarray | float
    d_dx: np.ndarray | float
    d_dt: np.ndarray | float
    d2_dx2: np.ndarray | float

    @classmethod
    def from_columns(cls, out: np.ndarray) -> "DualState":
        out = np.asarray(out, dtype=np.float64)
        if out.ndim == 1:
            return cls(*(float(v) for v in out))
        return cls(out[:, 0], out[:, 1], out[:, 2], out[:, 3])

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(
            np.asarray(self.value, dtype=np.float64), self.d_dx, self.d_dt, self.d2_dx2
        ), axis=-1)


def split_params(flat: np.ndarray):
    """Views of ``flat`` as (weights, biases) lists."""
    ws = [flat[o:o + r * c].reshape(r, c) for o, (r, c) in WEIGHT_SLOTS]
    bs = [flat[o:o + n] for o, (n,) in BIAS_SLOTS]
    return ws, bs


def _unpack(flat):
    ws, bs = split_params(flat)
    w_hidden = np.ascontiguousarray(np.stack(ws[1:4]))
    b_hidden = np.ascontiguousarray(np.stack(bs[1:4]))
    return (np.ascontiguousarray(ws[0]), np.ascontiguousarray(bs[0]), w_hidden, b_hidden,
            np.ascontiguousarray(ws[4][0]), float(bs[4][0]))


def _check_finite(name: str, arr) -> None:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr.ravel()))
        raise FloatingPointError(f"non-finite entries in {name} at flat index {bad[:5].tolist()}")


def _check_params(flat) -> None:
    ws, bs = split_params(flat)
    for i, w in enumerate(ws):
        _check_finite(f"weights[{i}]", w)
    for i, b in enumerate(bs):
        _check_finite(f"biases[{i}]", b)


def _pack_grad(gW0, gb0, gWh, gbh, gw4, gb4) -> np.ndarray:
    return np.concatenate([
        gW0.ravel(), gWh[0].ravel(), gWh[1].ravel(), gWh[2].ravel(), gw4.ravel(),
        gb0, gbh[0], gbh[1], gbh[2], gb4,
    ])


def _as_points(x, t):
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))
    t = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=np.float64)))
    x, t = np.broadcast_arrays(x, t)
    return np.ascontiguousarray(x), np.ascontiguousarray(t)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

_NO_ADJ = np.zeros((0, 4))
_NO_COEF = np.zeros(5)


def forward_batch(flat: np.ndarray, x, t) -> np.ndarray:
    """Augmented outputs at every point, shape (n, 4): value, d/dx, d/dt, d2/dx2."""
    x, t = _as_points(x, t)
    return _kernels.run(*_unpack(flat), x, t, 0, _NO_COEF, _NO_ADJ)[1]


def forward_augmented(params, x_scaled: float, t: float) -> DualState:
    """Network value and input derivatives at a single point."""
    flat = getattr(params, "flat", params)
    _check_params(flat)
    _check_finite("x_scaled", x_scaled)
    _check_finite("t", t)
    out = forward_batch(flat, x_scaled, t)
    return DualState.from_columns(out[0])


def backward_batch(flat: np.ndarray, x, t, adjoint: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(adjoint * forward_batch(flat, x, t))`` with respect to ``flat``."""
    x, t = _as_points(x, t)
    adjoint = np.ascontiguousarray(adjoint, dtype=np.float64).reshape(len(x), 4)
    _, _, *grads = _kernels.run(*_unpack(flat), x, t, 1, _NO_COEF, adjoint)
    return _pack_grad(*grads)


def affine_sq_sum(flat: np.ndarray, x, t, coeffs) -> tuple[float, np.ndarray]:
    """``sum r_i^2`` and its gradient for an affine residual of the augmented outputs.

    ``coeffs`` is ``(c0, c_value, c_dx, c_dt, c_dxx)``.
    """
    x, t = _as_points(x, t)
    c = np.array([float(v) for v in coeffs])
    total, _, *grads = _kernels.run(*_unpack(flat), x, t, 2, c, _NO_ADJ)
    if not np.isfinite(total):
        r = forward_batch(flat, x, t) @ c[1:] + c[0]
        bad = np.flatnonzero(~np.isfinite(r))
        raise FloatingPointError(f"non-finite residual at batch index {bad[:5].tolist()}")
    return total, _pack_grad(*grads)


def backward_params(params, xs, ts, residual, scale: float = 1.0) -> np.ndarray:
    """Gradient of ``mean((scale * residual)^2)`` over the batch w.r.t. all parameters.

    ``residual`` is an :class:`~thermopinn.physics.AffineResidual` (or any object
    with a ``coeffs`` 5-tuple) describing the residual as an affine map of the
    augmented network outputs.
    """
    flat = getattr(params, "flat", params)
    xs, ts = _as_points(xs, ts)
    if xs.size == 0:
        raise ValueError("backward_params needs a non-empty batch")
    _check_params(flat)
    coeffs = getattr(residual, "coeffs", residual)
    _, grad = affine_sq_sum(flat, xs, ts, coeffs)
    grad *= scale * scale / xs.size
    return grad
