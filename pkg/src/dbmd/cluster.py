"""Simulated coordinator/worker plumbing.

Workers own their shard and coefficient block. The coordinator only sees
what workers return from :meth:`Cluster.map`, and every matrix that crosses
the coordinator/worker boundary goes through :meth:`Cluster.broadcast` or
:meth:`Cluster.collect` so the traffic is counted.

Entry accounting follows the per-message convention: broadcasting one
``m x r`` matrix to all workers counts ``m*r`` entries, and collecting one
``m x r`` matrix from every worker into a reduction counts ``m*r`` entries.
The per-link totals (multiplied by the worker count) are kept separately in
``link_entries``.
"""

import os
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import h_solver, model
from .numerics import as_matrix, gram

_active = threading.local()


class OwnershipError(RuntimeError):
    """A worker's private data was touched from outside that worker."""


@dataclass
class CommLedger:
    broadcasts: int = 0
    collections: int = 0
    link_entries: int = 0
    scalars: int = 0
    rounds: dict = field(default_factory=lambda: defaultdict(int))
    by_phase: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0]))

    def record_broadcast(self, size, phase, n_workers):
        self.broadcasts += size
        self.link_entries += size * n_workers
        self.by_phase[phase][0] += size

    def record_collection(self, size, phase, n_workers):
        self.collections += size
        self.link_entries += size * n_workers
        self.by_phase[phase][1] += size

    def add_round(self, phase):
        self.rounds[phase] += 1

    def entries(self, phase):
        """Broadcast plus collected entries for one phase."""
        b, c = self.by_phase.get(phase, (0, 0))
        return b + c

    def to_dict(self):
        return {
            "broadcasts": self.broadcasts,
            "collections": self.collections,
            "link_entries": self.link_entries,
            "scalars": self.scalars,
            "rounds": dict(self.rounds),
            "phases": {k: {"broadcasts": v[0], "collections": v[1]}
                       for k, v in self.by_phase.items()},
        }


def default_threads():
    env = os.environ.get("DBMD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _readonly(M):
    M = np.array(M, dtype=np.float64, copy=True)
    M.flags.writeable = False
    return M


class Worker:
    """A node machine: holds ``X_c``, ``H_c`` and its solver auxiliaries."""

    def __init__(self, index, shard, H=None):
        self.index = index
        self._shard = shard
        self._H = None
        self.W_local = None
        self.U = None
        self.sigma2 = shard.sigma2
        self.local_grad = None
        self.data_reads = 0
        self.foreign_reads = 0
        self._stats = None
        if H is not None:
            self.H = H

    def _guard(self):
        owner = getattr(_active, "worker", None)
        if owner is not self.index:
            self.foreign_reads += 1
            raise OwnershipError("worker %d data accessed outside its worker" % self.index)
        self.data_reads += 1

    @property
    def shard(self):
        self._guard()
        return self._shard

    @property
    def H(self):
        self._guard()
        return self._H

    @H.setter
    def H(self, value):
        self._H = as_matrix(value).copy()
        self._stats = None

    @property
    def n(self):
        return self._shard.n

    def stats(self):
        """Cached ``(X H^T, H H^T)`` for the current ``H``."""
        if self._stats is None:
            X, H = self.shard.X, self.H
            self._stats = (X @ H.T, gram(H))
        return self._stats

    # -- local computations; only ever run inside Cluster.map -------------

    def gradient(self, W):
        XHt, G = self.stats()
        g = W @ G - XHt
        self.local_grad = g
        return g

    def loss(self, W):
        return model.fc(W, self.shard, self.H)

    def objective_terms(self, W, alpha):
        return self.loss(W) + model.log_prior_h(self.H, alpha)

    def gram(self):
        return self.stats()[1]

    def update_h(self, W, hp):
        self.H = h_solver.update_h(self.shard, W, self.H, hp)
        return None

    def estimate_sigma2(self, W):
        from .noise import estimate_sigma2
        W_use = self.W_local if self.W_local is not None else W
        self.sigma2 = estimate_sigma2(self.shard, W_use, self.H)
        return self.sigma2


class Cluster:
    """A coordinator with its workers."""

    def __init__(self, shards, H_blocks=None, ledger=None, threads=None):
        if not shards:
            raise ValueError("need at least one shard")
        m = {s.m for s in shards}
        if len(m) != 1:
            raise ValueError("shards disagree on the number of rows: %s" % sorted(m))
        H_blocks = H_blocks if H_blocks is not None else [None] * len(shards)
        self.workers = [Worker(c, s, H) for c, (s, H) in enumerate(zip(shards, H_blocks))]
        self.ledger = ledger if ledger is not None else CommLedger()
        self.threads = threads if threads is not None else default_threads()
        self._workers_hold = None

    @property
    def C(self):
        return len(self.workers)

    @property
    def sigma2(self):
        return [w.sigma2 for w in self.workers]

    def map(self, fn, *args):
        """Run ``fn(worker, *args)`` on every worker; results in worker order."""

        def call(w):
            prev = getattr(_active, "worker", None)
            _active.worker = w.index
            try:
                return fn(w, *args)
            finally:
                _active.worker = prev

        if self.threads > 1 and self.C > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, self.C)) as pool:
                return list(pool.map(call, self.workers))
        return [call(w) for w in self.workers]

    def broadcast(self, M, phase):
        M = _readonly(M)
        self.ledger.record_broadcast(M.size, phase, self.C)
        self._workers_hold = M
        return M

    def collect(self, mats, phase):
        mats = [_readonly(M) for M in mats]
        self.ledger.record_collection(mats[0].size, phase, self.C)
        return mats

    def collect_scalars(self, values):
        self.ledger.scalars += len(values)
        return [float(v) for v in values]

    def ensure_broadcast(self, W, phase):
        """Broadcast ``W`` unless the workers already hold exactly it."""
        held = self._workers_hold
        if held is None or held.shape != W.shape or not np.array_equal(held, W):
            return self.broadcast(W, phase)
        return held

    def H_blocks(self):
        return self.map(lambda w: w.H.copy())

    def foreign_reads(self):
        return sum(w.foreign_reads for w in self.workers)
