"""Synthetic experiments on the W-update with known coefficient blocks."""

from dataclasses import dataclass

import numpy as np

from . import datagen
from .cluster import Cluster
from .model import Hyperparams, lipschitz_f, strong_convexity_f, w_objective
from .w_solvers import solve_w


@dataclass
class ConvergenceConfig:
    """Data A uses Bernoulli coefficients, data B flat-Dirichlet ones."""

    a: float = 1.5
    l: int = 20
    coh: int = 2
    rank: int = 20
    n_shards: int = 5
    sigma: float = 1.0
    lam: float = 1.0
    rho: float = 50.0
    gamma: float = 1.0
    w_tol: float = 1e-3
    max_w_iters: int = 5000
    agd_min_iters: int = 30
    seed: int = 0

    @property
    def p(self):
        return 1.0 / self.rank


def make_h(kind, r, n_c, n_shards, seed, p=None):
    if kind in ("A", "bernoulli"):
        return [datagen.gen_h_bernoulli(r, n_c, p or 1.0 / r, seed, stream=c)
                for c in range(n_shards)]
    if kind in ("B", "dirichlet"):
        return [datagen.gen_h_dirichlet(r, n_c, np.ones(r), seed, stream=c)
                for c in range(n_shards)]
    raise ValueError("unknown data kind %r (expected A or B)" % kind)


def initial_w(m, r, a, seed):
    return a * datagen.uniform_open(datagen.rng(seed, datagen.STREAM_W0), (m, r))


def convergence_run(cfg, kind, n_c, strategy):
    """One W-update on synthetic data ``kind`` with ``n_c`` samples per shard.

    Returns ``(rounds, converged, objectives, ledger)`` where ``objectives``
    holds the basis-subproblem objective after every round.
    """
    W_true = datagen.gen_basis(cfg.a, cfg.l, cfg.coh, cfg.rank)
    H = make_h(kind, cfg.rank, n_c, cfg.n_shards, cfg.seed)
    shards = datagen.gen_observations(W_true, H, [cfg.sigma] * cfg.n_shards, cfg.seed)
    hp = Hyperparams(rank=cfg.rank, lam=cfg.lam, rho=cfg.rho, gamma=cfg.gamma,
                     w_tol=cfg.w_tol, max_w_iters=cfg.max_w_iters,
                     agd_min_iters=cfg.agd_min_iters)
    cluster = Cluster(shards, H, threads=1)
    trace = []
    W0 = initial_w(W_true.shape[0], cfg.rank, cfg.a, cfg.seed)
    # evaluated outside the simulated system; not counted as traffic
    monitor = lambda k, W: trace.append(w_objective(W, shards, H, cfg.lam))
    W, rounds, ok = solve_w(strategy, cluster, W0, hp, monitor=monitor)
    return rounds, ok, trace, cluster.ledger


def hh_spectrum(kind, r, n_c, n_shards, seed, p=None):
    """Largest and smallest eigenvalue of ``sum_c H_c H_c^T``."""
    H = make_h(kind, r, n_c, n_shards, seed, p)
    return lipschitz_f(H), strong_convexity_f(H)
