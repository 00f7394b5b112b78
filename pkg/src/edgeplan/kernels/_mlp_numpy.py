"""Pure-numpy kernels for the two-hidden-layer MLPs used by the agent.

Reference implementation of the backend contract in ``edgeplan.kernels``;
the compiled extension must match these semantics.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Piecewise form avoids exp overflow for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(W1, b1, W2, b2, W3, b3, X, squash):
    """Batched forward pass.

    Returns (y, h1, h2): outputs of shape (N,) and the two post-ReLU hidden
    activations, which are the caches ``backward`` needs.
    """
    h1 = np.maximum(X @ W1 + b1, 0.0)
    h2 = np.maximum(h1 @ W2 + b2, 0.0)
    z3 = h2 @ W3[:, 0] + b3[0]
    y = _sigmoid(z3) if squash else z3
    return y, h1, h2


def backward(W1, W2, W3, X, h1, h2, y, dy, squash):
    """Gradients of sum(dy * y) w.r.t. all parameters and the input.

    Returns (dW1, db1, dW2, db2, dW3, db3, dX). ReLU derivative at 0 is 0.
    """
    dz3 = dy * y * (1.0 - y) if squash else np.asarray(dy, dtype=np.float64)
    dW3 = (h2.T @ dz3)[:, None]
    db3 = np.array([dz3.sum()])
    dh2 = np.outer(dz3, W3[:, 0])
    dz2 = np.where(h2 > 0.0, dh2, 0.0)
    dW2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dh1 = dz2 @ W2.T
    dz1 = np.where(h1 > 0.0, dh1, 0.0)
    dW1 = X.T @ dz1
    db1 = dz1.sum(axis=0)
    dX = dz1 @ W1.T
    return dW1, db1, dW2, db2, dW3, db3, dX


def adam_step(params, grads, m, v, t, lr, beta1, beta2, eps):
    """One in-place Adam update over parallel lists of arrays; ``t`` is 1-based."""
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, mi, vi in zip(params, grads, m, v):
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * g * g
        p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def blend(dst, src, tau):
    """In-place soft update: dst = tau * src + (1 - tau) * dst, per array."""
    for d, s in zip(dst, src):
        d *= 1.0 - tau
        d += tau * s
