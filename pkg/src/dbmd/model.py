"""Model state, hyperparameters and the MAP objective."""

from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError, as_matrix, gram, ordered_sum, spectral_norm


@dataclass
class Hyperparams:
    """Tuning knobs for a fit.

    ``alpha`` is stored shifted (``alpha0 - 1``); use :meth:`from_alpha0`
    when starting from Dirichlet concentration parameters. ``lam`` is the
    L1 weight, i.e. the reciprocal of the Laplace scale.
    """

    rank: int
    lam: float = 0.0
    alpha: np.ndarray = None
    rho: float = 50.0
    gamma: float = 0.001
    w_tol: float = 1e-2
    max_w_iters: int = 1000
    agd_min_iters: int = 30
    max_outer: int = 100
    outer_tol: float = 1e-5
    seed: int = 0
    weighted: bool = False
    epsilon_h: float = 1e-8
    inner_tol: float = 1e-6
    inner_max_iters: int = 500
    h_tol: float = 1e-8
    h_max_iters: int = 200

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = np.zeros(self.rank)
        elif np.isscalar(self.alpha):
            self.alpha = np.full(self.rank, float(self.alpha))
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.validate()

    @classmethod
    def from_alpha0(cls, rank, alpha0=1.0, **kwargs):
        a0 = np.broadcast_to(np.asarray(alpha0, dtype=np.float64), (rank,))
        return cls(rank=rank, alpha=a0 - 1.0, **kwargs)

    def validate(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha.shape != (self.rank,):
            raise ValueError("alpha must have length rank=%d" % self.rank)
        if np.any(self.alpha < 0):
            raise ValueError("alpha entries (alpha0 - 1) must be >= 0")
        if not 0 < self.epsilon_h < 1.0 / self.rank:
            raise ValueError("epsilon_h must lie in (0, 1/rank)")
        if self.w_tol <= 0 or self.outer_tol < 0:
            raise ValueError("tolerances must be positive")


@dataclass
class DataShard:
    """One worker's column block of the data, with its noise variance."""

    X: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        self.X = as_matrix(self.X)
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def m(self):
        return self.X.shape[0]


@dataclass
class ModelState:
    W: np.ndarray
    H: list
    W_local: list = field(default_factory=list)
    U: list = field(default_factory=list)

    def check(self, epsilon_h=0.0, atol=1e-10):
        for c, Hc in enumerate(self.H):
            if Hc.shape[0] != self.W.shape[1]:
                raise ShapeError("H[%d] has %d rows, W has %d columns"
                                 % (c, Hc.shape[0], self.W.shape[1]))
            if np.any(Hc < epsilon_h) or np.any(np.abs(Hc.sum(axis=0) - 1) > atol):
                raise ValueError("H[%d] leaves the simplex" % c)
        for M in [self.W, *self.W_local, *self.U]:
            if not np.all(np.isfinite(M)):
                raise FloatingPointError("non-finite model state")


def _check_pair(W, shard, H):
    if W.shape[0] != shard.X.shape[0] or W.shape[1] != H.shape[0] \
            or H.shape[1] != shard.X.shape[1]:
        raise ShapeError("inconsistent shapes W%s H%s X%s"
                         % (W.shape, H.shape, shard.X.shape))


def fc(W, shard, H):
    """Local quadratic loss ``0.5 * ||X_c - W H_c||_F^2``."""
    _check_pair(W, shard, H)
    R = shard.X - W @ H
    return 0.5 * float(np.sum(R * R))


def grad_fc(W, shard, H):
    """Gradient of :func:`fc` with respect to ``W``: ``(W H - X) H^T``."""
    W, H = as_matrix(W), as_matrix(H)
    _check_pair(W, shard, H)
    return (W @ H - shard.X) @ H.T


def log_prior_h(H, alpha):
    """``-sum_k alpha_k sum_j ln h_kj``; raises on nonpositive entries."""
    if np.any(H <= 0):
        raise ValueError("H must be strictly positive for the Dirichlet term")
    return -float(np.sum(alpha[:, None] * np.log(H)))


def w_objective(W, shards, H, lam):
    """Objective of the W subproblem: ``sum_c f_c(W) + lam * ||W||_1``."""
    return sum(fc(W, s, Hc) for s, Hc in zip(shards, H)) + lam * float(np.abs(W).sum())


def objective(state, shards, hp):
    """MAP objective with unit noise variances (the optimization target)."""
    return objective_full(state, shards, hp, use_sigma=False)


def objective_full(state, shards, hp, use_sigma=False):
    """Negative log posterior.

    With ``use_sigma`` the quadratic terms are weighted by ``1/(2 sigma_c^2)``
    and ``m n_c ln sigma_c`` is added; otherwise every ``sigma_c = 1``.
    """
    W = as_matrix(state.W)
    total = hp.lam * float(np.abs(W).sum())
    for shard, Hc in zip(shards, state.H):
        loss = fc(W, shard, Hc)
        if use_sigma:
            loss = loss / shard.sigma2 + 0.5 * shard.m * shard.n * np.log(shard.sigma2)
        total += loss + log_prior_h(Hc, hp.alpha)
    return total


def lipschitz_f(H_blocks):
    """Spectral norm of ``sum_c H_c H_c^T``, the gradient Lipschitz constant."""
    H_blocks = list(H_blocks)
    if not H_blocks:
        raise ValueError("need at least one H block")
    return spectral_norm(ordered_sum(gram(Hc) for Hc in H_blocks))


def strong_convexity_f(H_blocks):
    """Smallest eigenvalue of ``sum_c H_c H_c^T``."""
    G = ordered_sum(gram(Hc) for Hc in H_blocks)
    return float(np.linalg.eigvalsh(G)[0])
