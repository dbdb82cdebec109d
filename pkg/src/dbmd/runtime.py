"""Sharding and the outer alternation loop."""

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from . import datagen
from .cluster import Cluster, CommLedger
from .h_solver import dirichlet_init
from .model import DataShard, Hyperparams, ModelState
from .w_solvers import STRATEGIES, solve_w

log = logging.getLogger(__name__)

SCHEMA = "dbmd/1"


class FitAborted(FloatingPointError):
    """A non-finite value appeared; the message names the phase."""


def partition_indices(n, C, scheme="contiguous"):
    if C < 1:
        raise ValueError("need at least one worker")
    if C > n:
        raise ValueError("cannot split %d columns across %d workers" % (n, C))
    if scheme == "strided":
        return [np.arange(c, n, C) for c in range(C)]
    if scheme != "contiguous":
        raise ValueError("unknown partition scheme %r" % scheme)
    size = math.ceil(n / C)
    if size * (C - 1) >= n:
        # ceiling blocks would leave a worker empty; balance instead
        return [np.asarray(ix) for ix in np.array_split(np.arange(n), C)]
    return [np.arange(c * size, min((c + 1) * size, n)) for c in range(C)]


def partition(X, C, scheme="contiguous"):
    """Split the columns of ``X`` into ``C`` shards."""
    X = np.asarray(X, dtype=np.float64)
    return [DataShard(X[:, ix]) for ix in partition_indices(X.shape[1], C, scheme)]


@dataclass
class RunConfig:
    strategy: str
    hp: Hyperparams
    threads: int = None
    init_samples: int = 200

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError("strategy must be one of %s" % (STRATEGIES,))


@dataclass
class FitReport:
    strategy: str
    workers: int
    objective: list = field(default_factory=list)
    w_rounds: list = field(default_factory=list)
    w_converged: list = field(default_factory=list)
    sigma2: list = field(default_factory=list)
    initial_objective: float = None
    converged: bool = False
    wall_time: float = 0.0
    ledger: CommLedger = field(default_factory=CommLedger)

    def records(self):
        return [
            {"outer": i + 1, "objective": obj, "w_rounds": q, "w_converged": ok, "sigma2": s2}
            for i, (obj, q, ok, s2) in enumerate(
                zip(self.objective, self.w_rounds, self.w_converged, self.sigma2))
        ]

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "strategy": self.strategy,
            "workers": self.workers,
            "initial_objective": self.initial_objective,
            "objective": list(self.objective),
            "rounds": self.records(),
            "converged": self.converged,
            "wall_time": self.wall_time,
            "ledger": self.ledger.to_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _check_finite(M, phase):
    if not np.all(np.isfinite(M)):
        raise FitAborted("non-finite values during %s" % phase)


def _init_sample(w, k, seed):
    gen = datagen.rng(seed, datagen.STREAM_INIT, w.index)
    n = w.n
    pick = np.sort(gen.choice(n, size=min(k, n), replace=False))
    return w.shard.X[:, pick]


def _init_h(w, seed, r):
    gen = datagen.rng(seed, datagen.STREAM_INIT, w.index, 1)
    w.H = dirichlet_init(r, w.n, gen)


def initial_basis(cluster, r, seed, per_worker=200):
    """k-means centers of a small sample of columns pooled from the workers."""
    samples = cluster.map(_init_sample, per_worker, seed)
    for S in samples:
        cluster.ledger.record_collection(S.size, "init", 1)
    pool = np.concatenate(samples, axis=1)
    if pool.shape[1] < r:
        raise ValueError("need at least rank=%d samples, have %d" % (r, pool.shape[1]))
    km = KMeans(n_clusters=r, n_init=4, random_state=seed % (2 ** 32)).fit(pool.T)
    return np.ascontiguousarray(km.cluster_centers_.T)


def _objective_terms(w, W, alpha):
    return w.objective_terms(W, alpha)


def fit(shards, cfg, W0=None):
    """Alternate W-updates and per-shard H-updates until the MAP objective
    settles. Returns ``(ModelState, FitReport)``."""
    hp = cfg.hp
    t0 = time.perf_counter()
    shards = list(shards)
    if not shards:
        raise ValueError("need at least one shard")
    cluster = Cluster(shards, threads=cfg.threads)
    report = FitReport(strategy=cfg.strategy, workers=cluster.C, ledger=cluster.ledger)

    W = initial_basis(cluster, hp.rank, hp.seed, cfg.init_samples) if W0 is None \
        else np.array(W0, dtype=np.float64)
    if W.shape != (shards[0].m, hp.rank):
        raise ValueError("initial basis must be %dx%d" % (shards[0].m, hp.rank))
    W = cluster.broadcast(W, "init")
    cluster.map(_init_h, hp.seed, hp.rank)
    cluster.map(lambda w: w.update_h(W, hp))
    if hp.weighted:
        cluster.collect_scalars(cluster.map(lambda w: w.estimate_sigma2(W)))

    def current_objective(W):
        terms = cluster.collect_scalars(cluster.map(_objective_terms, W, hp.alpha))
        return hp.lam * float(np.abs(W).sum()) + float(sum(terms))

    # objective at W=0, used as an absolute floor so that near-exact fits stop
    scale = 0.5 * float(sum(cluster.collect_scalars(
        cluster.map(lambda w: float(np.sum(w.shard.X ** 2))))))
    floor = 1e-10 * scale
    prev = current_objective(W)
    report.initial_objective = prev
    W = np.array(W)
    for t in range(1, hp.max_outer + 1):
        W, q, ok = solve_w(cfg.strategy, cluster, W, hp)
        _check_finite(W, "W-update (round %d)" % t)
        Wb = cluster.ensure_broadcast(W, "h_update")
        cluster.map(lambda w: w.update_h(Wb, hp))
        for h_ok in cluster.map(lambda w: bool(np.all(np.isfinite(w.H)))):
            if not h_ok:
                raise FitAborted("non-finite values during H-update (round %d)" % t)
        if hp.weighted:
            cluster.collect_scalars(cluster.map(lambda w: w.estimate_sigma2(Wb)))
        obj = current_objective(Wb)
        if not math.isfinite(obj):
            raise FitAborted("non-finite objective after round %d" % t)
        report.objective.append(obj)
        report.w_rounds.append(q)
        report.w_converged.append(ok)
        report.sigma2.append(list(cluster.sigma2))
        log.info("round %d: objective %.10g, %d W rounds", t, obj, q)
        if abs(prev - obj) <= hp.outer_tol * max(abs(prev), floor):
            report.converged = True
            break
        prev = obj

    state = ModelState(
        W=W,
        H=cluster.H_blocks(),
        W_local=[w.W_local for w in cluster.workers],
        U=[w.U for w in cluster.workers],
    )
    report.wall_time = time.perf_counter() - t0
    return state, report


def fit_matrix(X, C, cfg, scheme="contiguous", W0=None):
    """Partition ``X`` and fit; also returns the column indices per shard."""
    idx = partition_indices(X.shape[1], C, scheme)
    shards = [DataShard(np.asarray(X)[:, ix]) for ix in idx]
    state, report = fit(shards, cfg, W0=W0)
    return state, report, idx
