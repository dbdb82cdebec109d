"""Dense matrix kernels shared by the solvers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(X):
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("expected a 2-D matrix, got ndim=%d" % A.ndim)
    return A


def soft_threshold(X, t):
    """Entrywise ``sign(x) * max(|x| - t, 0)``.

    Entries with ``|x| == t`` map to exactly zero.
    """
    if t < 0:
        raise ValueError("threshold must be nonnegative, got %r" % t)
    X = np.asarray(X, dtype=np.float64)
    if t == 0:
        return X.copy()
    return np.sign(X) * np.maximum(np.abs(X) - t, 0.0)


def spectral_norm(A, tol=1e-8, max_iter=10_000):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    The start vector is the normalized all-ones vector so the estimate is
    reproducible. Iteration stops once the eigen-residual
    ``||A v - theta v||`` falls below ``tol * theta``, which bounds the
    relative error of ``theta`` by ``tol``.
    """
    A = as_matrix(A)
    n, k = A.shape
    if n != k:
        raise ShapeError("spectral_norm needs a square matrix, got %dx%d" % (n, k))
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 0:
        return 0.0
    v = np.full(n, 1.0 / np.sqrt(n))
    theta = 0.0
    for _ in range(max_iter):
        Av = A @ v
        theta = float(v @ Av)
        norm_Av = np.linalg.norm(Av)
        if norm_Av == 0.0:
            return 0.0
        if np.linalg.norm(Av - theta * v) <= tol * abs(theta):
            break
        v = Av / norm_Av
    return theta


def frob_norm(X):
    return float(np.linalg.norm(np.asarray(X, dtype=np.float64), "fro"))


def gram(H):
    """``H @ H.T``, symmetrized so round-off asymmetry is exactly zero."""
    H = as_matrix(H)
    G = H @ H.T
    return 0.5 * (G + G.T)


def matmul(A, B):
    A, B = as_matrix(A), as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ShapeError("cannot multiply %s by %s" % (A.shape, B.shape))
    return A @ B


def check_same_shape(*mats):
    shapes = {np.shape(M) for M in mats}
    if len(shapes) > 1:
        raise ShapeError("shape mismatch: %s" % sorted(shapes))


def ordered_sum(mats):
    """Sum matrices in list order; the order is fixed so results are bitwise
    reproducible regardless of how the summands were produced."""
    mats = list(mats)
    if not mats:
        raise ValueError("cannot sum an empty list")
    total = np.array(mats[0], dtype=np.float64, copy=True)
    for M in mats[1:]:
        if np.shape(M) != total.shape:
            raise ShapeError("shape mismatch: %s vs %s" % (np.shape(M), total.shape))
        total += M
    return total


def assert_finite(X, what):
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite values in %s" % what)
