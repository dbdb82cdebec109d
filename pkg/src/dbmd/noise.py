"""Noise-variance estimation, inverse-variance aggregation, and the
variance-reduction experiment."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .numerics import ShapeError, ordered_sum

log = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12


def estimate_sigma2(shard, W_c, H):
    """Maximum-likelihood noise variance ``||X_c - W_c H_c||_F^2 / (m n_c)``."""
    X = shard.X
    if W_c.shape[0] != X.shape[0] or W_c.shape[1] != H.shape[0] or H.shape[1] != X.shape[1]:
        raise ShapeError("inconsistent shapes W%s H%s X%s" % (W_c.shape, H.shape, X.shape))
    R = X - W_c @ H
    return max(float(np.sum(R * R)) / X.size, SIGMA2_FLOOR)


def inverse_variance_weights(sigma2):
    s = np.asarray(sigma2, dtype=np.float64)
    if s.size == 0:
        raise ValueError("need at least one variance")
    if np.any(s <= 0):
        raise ValueError("variances must be positive")
    inv = 1.0 / s
    return inv / inv.sum()


def weighted_mean(mats, sigma2):
    """Average weighting each matrix by ``(1/sigma_c^2) / sum_l (1/sigma_l^2)``."""
    mats = list(mats)
    if not mats:
        raise ValueError("cannot average an empty list")
    if len(mats) != len(sigma2):
        raise ValueError("need one variance per matrix")
    w = inverse_variance_weights(sigma2)
    return ordered_sum(wc * M for wc, M in zip(w, mats))


def plain_mean(mats):
    mats = list(mats)
    if not mats:
        raise ValueError("cannot average an empty list")
    return ordered_sum(mats) / len(mats)


def variance_ratio_theoretical(sigma2):
    """Harmonic mean of the variances divided by their arithmetic mean."""
    s = np.asarray(sigma2, dtype=np.float64)
    if s.size == 0 or np.any(s <= 0):
        raise ValueError("variances must be positive")
    C = s.size
    return (C / np.sum(1.0 / s)) / (np.sum(s) / C)


@dataclass
class VarRatioConfig:
    """Setup of the variance-reduction experiment.

    Four shards have unit noise and the last has standard deviation ``s``;
    the coefficient blocks are drawn once and treated as known.
    """

    a: float = 1.5
    l: int = 20
    coh: int = 2
    rank: int = 10
    n_c: int = 100
    n_shards: int = 5
    p: float = 0.1
    base_sigma: float = 1.0
    rho: float = 50.0
    gamma: float = 0.001
    w_tol: float = 1e-7
    max_w_iters: int = 20_000
    seed: int = 0

    def sigmas(self, s):
        return [self.base_sigma] * (self.n_shards - 1) + [float(s)]


@dataclass
class VarRatioResult:
    s: float
    theoretical: float
    empirical: float
    reps_used: int
    reps_failed: int = 0
    var_weighted: float = 0.0
    var_plain: float = 0.0
    extra: dict = field(default_factory=dict)


def _solve_known_h(strategy, shards, H, cfg, sigma2=None, W0=None):
    from .cluster import Cluster
    from .model import Hyperparams
    from .w_solvers import solve_w

    weighted = sigma2 is not None
    hp = Hyperparams(rank=cfg.rank, lam=0.0, rho=cfg.rho, gamma=cfg.gamma,
                     w_tol=cfg.w_tol, max_w_iters=cfg.max_w_iters, agd_min_iters=1,
                     weighted=weighted, inner_tol=1e-12, inner_max_iters=5000)
    cluster = Cluster(shards, H, threads=1)
    if weighted:
        for w, s2 in zip(cluster.workers, sigma2):
            w.sigma2 = s2
    if W0 is None:
        W0 = np.zeros((shards[0].m, cfg.rank))
    W, rounds, converged = solve_w(strategy, cluster, W0, hp)
    return W, cluster, converged


def empirical_variance_ratio(cfg, strategy, s, reps):
    """Monte-Carlo estimate of ``var(weighted) / var(plain)`` for one noise level.

    Each repetition redraws only the noise. The plain (unweighted) solve
    runs first from zero; the noise variances are then estimated from each
    worker's local basis and plugged into the weighted solve, which starts
    from the plain solution. Variances are summed
    over all entries of the basis.
    """
    if reps < 2:
        raise ValueError("need at least two repetitions")
    W_true = datagen.gen_basis(cfg.a, cfg.l, cfg.coh, cfg.rank)
    H = [datagen.gen_h_bernoulli(cfg.rank, cfg.n_c, cfg.p, cfg.seed, stream=c)
         for c in range(cfg.n_shards)]
    sigmas = cfg.sigmas(s)
    plain, weighted = [], []
    failed = 0
    for rep in range(reps):
        shards = datagen.gen_observations(W_true, H, sigmas, cfg.seed, rep=rep)
        try:
            W_bar, cluster, ok = _solve_known_h(strategy, shards, H, cfg)
            if ok:
                sig2 = cluster.map(lambda w: estimate_sigma2(w.shard, w.W_local, w.H))
                W_tilde, _, ok = _solve_known_h(strategy, shards, H, cfg, sigma2=sig2,
                                                W0=W_bar)
        except FloatingPointError:
            ok = False
        if not ok:
            failed += 1
            log.warning("rep %d did not converge; excluded", rep)
            continue
        plain.append(W_bar)
        weighted.append(W_tilde)
    if len(plain) < 2:
        raise RuntimeError("fewer than two converged repetitions")
    var_w = float(np.var(np.stack(weighted), axis=0, ddof=1).sum())
    var_p = float(np.var(np.stack(plain), axis=0, ddof=1).sum())
    return VarRatioResult(
        s=float(s),
        theoretical=variance_ratio_theoretical(np.square(sigmas)),
        empirical=var_w / var_p,
        reps_used=len(plain),
        reps_failed=failed,
        var_weighted=var_w,
        var_plain=var_p,
    )


def variance_ratio_curve(cfg, strategy, s_values=range(1, 11), reps=100):
    return [empirical_variance_ratio(cfg, strategy, s, reps) for s in s_values]
