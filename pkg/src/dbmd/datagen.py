"""Synthetic data in the style of the sparse-basis clustering benchmarks.

Random streams
--------------
Every draw comes from a Philox (counter-based) generator keyed by the user
seed and a stream tuple, so results do not depend on execution order:

    (STREAM_H, c)            coefficient block of shard c
    (STREAM_NOISE, c, rep)   noise of shard c in repetition rep
    (STREAM_LABELS, c)       one-hot cluster labels of shard c
    (STREAM_INIT, c)         fit initialization on worker c

Gaussian noise is produced by Box-Muller from uniforms on the open
interval (0, 1).
"""

import numpy as np

from .model import DataShard
from .numerics import ShapeError

STREAM_H = 1
STREAM_NOISE = 2
STREAM_LABELS = 3
STREAM_INIT = 4
STREAM_W0 = 5

_TWO53 = float(2 ** 53)


def rng(seed, *stream):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def uniform_open(gen, size):
    """Uniforms in the open interval (0, 1) with 53-bit resolution."""
    k = gen.integers(0, 2 ** 53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def box_muller(gen, size):
    size = tuple(np.atleast_1d(size))
    count = int(np.prod(size))
    half = (count + 1) // 2
    u1 = uniform_open(gen, half)
    u2 = uniform_open(gen, half)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    return z[:count].reshape(size)


def gen_basis(a, l, coh, r):
    """Banded basis: column k is ``a`` on ``l`` consecutive rows, shifted by
    ``l - coh`` per column so that neighbours overlap on ``coh`` rows.

    With 1-based rows the support of column k (1..r) is
    ``1 + (k-1)(l-coh) .. l + (k-1)(l-coh)``; in 0-based storage column
    ``k`` (0..r-1) covers rows ``k(l-coh) .. k(l-coh) + l - 1``.
    """
    if r < 1 or l < 1:
        raise ValueError("need r >= 1 and l >= 1")
    if not 0 <= coh < l:
        raise ValueError("coherence must satisfy 0 <= coh < l (got coh=%r, l=%r)" % (coh, l))
    shift = l - coh
    m = l + (r - 1) * shift
    W = np.zeros((m, r))
    for k in range(r):
        W[k * shift:k * shift + l, k] = a
    return W


def gen_h_bernoulli(r, n_c, p, seed, stream=0):
    """Bernoulli(p) entries; empty columns get a one in the last row, then
    columns are normalized to sum to one."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    gen = rng(seed, STREAM_H, stream)
    B = (uniform_open(gen, (r, n_c)) < p).astype(np.float64)
    empty = B.sum(axis=0) == 0
    B[-1, empty] = 1.0
    return B / B.sum(axis=0)


def gen_h_dirichlet(r, n_c, alpha0, seed, stream=0):
    alpha0 = np.broadcast_to(np.asarray(alpha0, dtype=np.float64), (r,))
    if np.any(alpha0 <= 0):
        raise ValueError("Dirichlet parameters must be positive")
    gen = rng(seed, STREAM_H, stream)
    G = gen.standard_gamma(alpha0[:, None], size=(r, n_c))
    return G / G.sum(axis=0)


def gen_h_onehot(r, n_c, seed, stream=0):
    """Hard memberships: each column is a standard basis vector with a
    uniformly drawn cluster."""
    gen = rng(seed, STREAM_LABELS, stream)
    labels = gen.integers(0, r, size=n_c)
    H = np.zeros((r, n_c))
    H[labels, np.arange(n_c)] = 1.0
    return H


def gen_observations(W, H_blocks, sigmas, seed, rep=0):
    """Shards ``X_c = W H_c + E_c`` with i.i.d. ``N(0, sigma_c^2)`` noise.

    The returned shards carry the default unit ``sigma2``; the true noise
    level is not revealed to the fitting code.
    """
    W = np.asarray(W, dtype=np.float64)
    if len(sigmas) != len(H_blocks):
        raise ValueError("need one sigma per coefficient block")
    shards = []
    for c, (H, s) in enumerate(zip(H_blocks, sigmas)):
        if H.shape[0] != W.shape[1]:
            raise ShapeError("H[%d] has %d rows, W has %d columns" % (c, H.shape[0], W.shape[1]))
        if s < 0:
            raise ValueError("noise levels must be nonnegative")
        X = W @ H
        if s > 0:
            X = X + s * box_muller(rng(seed, STREAM_NOISE, c, rep), X.shape)
        shards.append(DataShard(X))
    return shards
