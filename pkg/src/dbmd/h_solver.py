"""Per-shard coefficient update on the probability simplex.

Each column ``h`` of ``H_c`` solves

    min_h  0.5 * ||x - W h||^2 - sum_k alpha_k ln h_k
    s.t.   h >= epsilon_h,  sum(h) = 1

by exponentiated-gradient steps with a per-column step size that doubles
after an accepted step and halves until the objective does not increase.
Columns are independent, so the whole block is updated in vectorized form.
"""

import numpy as np

from .numerics import ShapeError

_MAX_HALVINGS = 60


def _floor(H, eps):
    """Lift columns whose minimum dropped below ``eps`` back into the floored
    simplex via ``eps + (1 - r*eps) * h``; keeps the column sum at one."""
    r = H.shape[0]
    low = H.min(axis=0) < eps
    if np.any(low):
        H[:, low] = eps + (1.0 - r * eps) * H[:, low]
    return H


def _reduced_objective(H, WtW, WtX, alpha):
    # column objective without the constant 0.5*||x||^2
    quad = 0.5 * np.einsum("kj,kj->j", H, WtW @ H) - np.einsum("kj,kj->j", H, WtX)
    if alpha is None:
        return quad
    return quad - alpha @ np.log(H)


def column_objective(x, W, h, alpha):
    """Full column objective; used by tests and diagnostics."""
    res = x - W @ h
    return 0.5 * float(res @ res) - float(np.dot(alpha, np.log(h)))


def check_simplex(H, atol=1e-8):
    if np.any(H < 0) or np.any(np.abs(H.sum(axis=0) - 1.0) > atol):
        raise ValueError("every column of H0 must lie on the probability simplex")


def update_h(shard, W, H0, hp):
    """Return an improved coefficient block for ``shard`` given basis ``W``.

    The objective of every column is non-increasing relative to ``H0``.
    Stops when every column's relative objective change falls below
    ``hp.h_tol`` or after ``hp.h_max_iters`` sweeps.
    """
    X = shard.X
    W = np.asarray(W, dtype=np.float64)
    H = np.array(H0, dtype=np.float64, copy=True)
    if W.shape[0] != X.shape[0] or H.shape != (W.shape[1], X.shape[1]):
        raise ShapeError("inconsistent shapes W%s H0%s X%s" % (W.shape, H.shape, X.shape))
    check_simplex(H)
    eps = hp.epsilon_h
    H = _floor(H, eps)
    n = H.shape[1]
    if n == 0:
        return H

    alpha = np.asarray(hp.alpha, dtype=np.float64)
    a_vec = alpha if np.any(alpha) else None
    alpha_col = alpha[:, None] if a_vec is not None else None
    WtW = W.T @ W
    WtX = W.T @ X
    half_xx = 0.5 * np.einsum("ij,ij->j", X, X)

    f = _reduced_objective(H, WtW, WtX, a_vec)
    grad = WtW @ H - WtX
    if alpha_col is not None:
        grad -= alpha_col / H
    eta = 1.0 / (np.abs(grad).max(axis=0) + 1e-12)
    active = np.ones(n, dtype=bool)

    for _ in range(hp.h_max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ha, ga, fa = H[:, idx], grad[:, idx], f[idx]
        step = eta[idx].copy()
        accepted = np.zeros(idx.size, dtype=bool)
        Hnew = Ha.copy()
        fnew = fa.copy()
        pending = np.arange(idx.size)
        for _ in range(_MAX_HALVINGS):
            logits = np.log(Ha[:, pending]) - step[pending] * ga[:, pending]
            logits -= logits.max(axis=0)
            cand = np.exp(logits)
            cand /= cand.sum(axis=0)
            cand = _floor(cand, eps)
            fc = _reduced_objective(cand, WtW, WtX[:, idx[pending]], a_vec)
            ok = fc <= fa[pending]
            good = pending[ok]
            Hnew[:, good] = cand[:, ok]
            fnew[good] = fc[ok]
            accepted[good] = True
            pending = pending[~ok]
            if pending.size == 0:
                break
            step[pending] *= 0.5
        step[accepted] *= 2.0
        eta[idx] = step

        full_old = fa + half_xx[idx]
        change = np.abs(fa - fnew)
        scale = np.maximum(np.abs(full_old), 1e-12)
        done = (change <= hp.h_tol * scale) | ~accepted

        H[:, idx] = Hnew
        f[idx] = fnew
        gnew = WtW @ Hnew - WtX[:, idx]
        if alpha_col is not None:
            gnew -= alpha_col / Hnew
        grad[:, idx] = gnew
        active[idx[done]] = False
    return H


def assign_clusters(H):
    """Cluster id of each column: the row of its largest entry (first on ties)."""
    return np.argmax(np.asarray(H), axis=0)


def dirichlet_init(r, n, rng):
    """Initial block with columns drawn from the flat Dirichlet."""
    G = rng.standard_exponential(size=(r, n))
    return G / G.sum(axis=0)
