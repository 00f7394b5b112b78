# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the agent's MLPs.

Matrix products go through BLAS (same class of routine numpy uses); the win
over the numpy backend comes from fusing bias/activation/mask loops and
skipping per-op Python dispatch and temporaries inside the training loop.
Semantics must match ``_mlp_numpy`` bit-for-bit up to BLAS reassociation.
"""

import numpy as np

from libc.math cimport exp, sqrt
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _gemm(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                bint ta, bint tb) noexcept nogil:
    """C = opA(A) @ opB(B) for row-major buffers, via column-major dgemm.

    Row-major C equals column-major C^T = opB(B)^T @ opA(A)^T, so the
    operands swap slots and each trans flag follows the *other* operand.
    """
    cdef int m = C.shape[0]
    cdef int n = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef char transa = b'T' if tb else b'N'
    cdef char transb = b'T' if ta else b'N'
    cdef int lda = B.shape[1]
    cdef int ldb = A.shape[1]
    cdef int ldc = n
    cdef double alpha = 1.0
    cdef double beta = 0.0
    dgemm(&transa, &transb, &n, &m, &k, &alpha,
          &B[0, 0], &lda, &A[0, 0], &ldb, &beta, &C[0, 0], &ldc)


def matmul_check(A, B, ta, tb):
    """Test hook: opA(A) @ opB(B) through the internal BLAS wrapper."""
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef int m = Av.shape[1] if ta else Av.shape[0]
    cdef int n = Bv.shape[0] if tb else Bv.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] Cv = out
    _gemm(Av, Bv, Cv, ta, tb)
    return out


cdef void _bias_relu(double[:, ::1] H, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double z
    for i in range(H.shape[0]):
        for j in range(H.shape[1]):
            z = H[i, j] + b[j]
            H[i, j] = z if z > 0.0 else 0.0


def forward(double[:, ::1] W1, double[::1] b1,
            double[:, ::1] W2, double[::1] b2,
            double[:, ::1] W3, double[::1] b3,
            double[:, ::1] X, bint squash):
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t H2 = W2.shape[1]
    h1 = np.empty((N, W1.shape[1]), dtype=np.float64)
    h2 = np.empty((N, H2), dtype=np.float64)
    y = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] h1v = h1
    cdef double[:, ::1] h2v = h2
    cdef double[::1] yv = y
    cdef Py_ssize_t i, j
    cdef double s
    with nogil:
        _gemm(X, W1, h1v, 0, 0)
        _bias_relu(h1v, b1)
        _gemm(h1v, W2, h2v, 0, 0)
        _bias_relu(h2v, b2)
        for i in range(N):
            s = b3[0]
            for j in range(H2):
                s += h2v[i, j] * W3[j, 0]
            yv[i] = _sigmoid(s) if squash else s
    return y, h1, h2


def backward(double[:, ::1] W1, double[:, ::1] W2, double[:, ::1] W3,
             double[:, ::1] X, double[:, ::1] h1, double[:, ::1] h2,
             double[::1] y, double[::1] dy, bint squash):
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t D = X.shape[1]
    cdef Py_ssize_t H1 = W1.shape[1]
    cdef Py_ssize_t H2 = W2.shape[1]

    dW1 = np.empty((D, H1), dtype=np.float64)
    db1 = np.zeros(H1, dtype=np.float64)
    dW2 = np.empty((H1, H2), dtype=np.float64)
    db2 = np.zeros(H2, dtype=np.float64)
    dW3 = np.zeros((H2, 1), dtype=np.float64)
    db3 = np.zeros(1, dtype=np.float64)
    dX = np.empty((N, D), dtype=np.float64)
    dz2 = np.empty((N, H2), dtype=np.float64)
    dz1 = np.empty((N, H1), dtype=np.float64)

    cdef double[:, ::1] dW1v = dW1
    cdef double[::1] db1v = db1
    cdef double[:, ::1] dW2v = dW2
    cdef double[::1] db2v = db2
    cdef double[:, ::1] dW3v = dW3
    cdef double[::1] db3v = db3
    cdef double[:, ::1] dXv = dX
    cdef double[:, ::1] dz2v = dz2
    cdef double[:, ::1] dz1v = dz1

    cdef Py_ssize_t i, j
    cdef double g
    with nogil:
        for i in range(N):
            g = dy[i] * y[i] * (1.0 - y[i]) if squash else dy[i]
            db3v[0] += g
            for j in range(H2):
                dW3v[j, 0] += h2[i, j] * g
                # dh2 masked by the ReLU that produced h2
                dz2v[i, j] = g * W3[j, 0] if h2[i, j] > 0.0 else 0.0
        _gemm(h1, dz2v, dW2v, 1, 0)
        _gemm(dz2v, W2, dz1v, 0, 1)
        for i in range(N):
            for j in range(H2):
                db2v[j] += dz2v[i, j]
            for j in range(H1):
                if h1[i, j] <= 0.0:
                    dz1v[i, j] = 0.0
                db1v[j] += dz1v[i, j]
        _gemm(X, dz1v, dW1v, 1, 0)
        _gemm(dz1v, W1, dXv, 0, 1)
    return dW1, db1, dW2, db2, dW3, db3, dX


cdef void _adam1d(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                  double c1, double c2, double lr, double beta1, double beta2,
                  double eps) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def adam_step(params, grads, m, v, t, double lr, double beta1, double beta2, double eps):
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    for p, g, mi, vi in zip(params, grads, m, v):
        _adam1d(p.ravel(), np.ascontiguousarray(g, dtype=np.float64).ravel(),
                mi.ravel(), vi.ravel(), c1, c2, lr, beta1, beta2, eps)


cdef void _blend1d(double[::1] d, double[::1] s, double tau) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(d.shape[0]):
        d[i] = (1.0 - tau) * d[i] + tau * s[i]


def blend(dst, src, double tau):
    for d, s in zip(dst, src):
        _blend1d(d.ravel(), s.ravel(), tau)
