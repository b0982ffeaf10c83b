"""Numpy reference implementations of the fused hot kernels.

Same contracts as the compiled versions in ``_core``; the backend module
picks one set at import time.  Matrix products are not here on purpose:
BLAS via ``numpy`` beats anything hand-rolled, so both backends share it.
"""

import numpy as np


def softmax_rows_fwd(x: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax. x (m, n) -> (m, n)."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """dx for y = softmax_rows(x): y * (dy - sum(dy * y) per row)."""
    dot = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - dot)


def layer_norm_fwd(s, gain, bias, eps):
    """Normalize each row of s (m, d), then scale/shift.

    Returns (out, xhat, inv_std); xhat and inv_std are saved for backward.
    """
    mu = s.mean(axis=1, keepdims=True)
    var = ((s - mu) ** 2).mean(axis=1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (s - mu) * inv_std[:, None]
    return xhat * gain + bias, xhat, inv_std


def layer_norm_bwd(dy, xhat, inv_std, gain):
    """Returns (dx, dgain, dbias) for layer_norm_fwd."""
    dxhat = dy * gain
    # dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) per row
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv_std[:, None] * (dxhat - m1 - xhat * m2)
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """One fused Adam step, in place on p, m, v. t is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
