"""Distributed strategies for the basis subproblem

    min_W  sum_c 0.5 * ||X_c - W H_c||_F^2 + lam * ||W||_1

with ``H_c`` held fixed on the workers.

* ``agd``: the coordinator runs FISTA on the summed worker gradients.
* ``admm``: consensus ADMM with closed-form local updates.
* ``cease``: workers minimize a gradient-enhanced local loss; the
  coordinator averages their solutions.

CEASE works with the averaged loss ``(1/C) sum_c f_c``, so its local
problems carry ``lam / C``; all three strategies therefore target the same
minimizer.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .cluster import Cluster
from .model import ModelState
from .noise import plain_mean, weighted_mean
from .numerics import (ShapeError, check_same_shape, gram, ordered_sum,
                       soft_threshold, spectral_norm)

STRATEGIES = ("agd", "admm", "cease")

WUpdateResult = namedtuple("WUpdateResult", "state rounds converged")


def fista_prox_solve(smooth_grad, L_bound, lam, W0, tol=1e-6, max_iters=500,
                     restart=False, return_iters=False):
    """FISTA for ``smooth(W) + lam * ||W||_1``.

    ``smooth_grad`` maps ``W`` to the gradient of the smooth part and
    ``L_bound`` must bound its Lipschitz constant. Stops when
    ``||W_{k+1} - W_k||_F <= tol * ||W0||_F`` (or relative to the first
    iterate when ``W0`` is zero). With ``restart`` the momentum is reset
    whenever it points uphill.
    """
    if L_bound <= 0:
        raise ValueError("L_bound must be positive")
    W0 = np.asarray(W0, dtype=np.float64)
    W_prev = W0.copy()
    Y = W0.copy()
    t = 1.0
    thresh = lam / L_bound
    it = 0
    for it in range(1, max_iters + 1):
        G = smooth_grad(Y)
        W = soft_threshold(Y - G / L_bound, thresh)
        step = np.linalg.norm(W - W_prev)
        if it == 1:
            scale = _stop_scale(W0, W)
        if step <= tol * scale:
            W_prev = W
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if restart and np.sum((Y - W) * (W - W_prev)) > 0:
            t_next = 1.0
            Y = W
        else:
            Y = W + ((t - 1.0) / t_next) * (W - W_prev)
        W_prev, t = W, t_next
    if return_iters:
        return W_prev, it
    return W_prev


# -- AGD ------------------------------------------------------------------

@dataclass
class AgdState:
    W: np.ndarray
    Y: np.ndarray
    W_prev: np.ndarray
    nu: float
    L: float


def next_nu(nu):
    return 0.5 * (1.0 + np.sqrt(4.0 * nu * nu + 1.0))


def agd_round(state, gradients, lam):
    """One coordinator step: prox-gradient at ``Y`` then momentum."""
    g = ordered_sum(gradients)
    if g.shape != state.Y.shape:
        raise ShapeError("gradient shape %s != %s" % (g.shape, state.Y.shape))
    W = soft_threshold(state.Y - g / state.L, lam / state.L)
    nu = next_nu(state.nu)
    Y = W + ((state.nu - 1.0) / nu) * (W - state.W)
    return AgdState(W=W, Y=Y, W_prev=state.W, nu=nu, L=state.L)


# -- ADMM -----------------------------------------------------------------

def _spd_solve_right(B, A, factor=None):
    """Solve ``W A = B`` for symmetric positive definite ``A``.

    ``factor`` may hold a lower Cholesky factor of ``A`` from an earlier call.
    """
    if factor is None:
        factor, info = lapack.dpotrf(A, lower=1)
        if info != 0:
            raise linalg.LinAlgError("matrix is not positive definite")
    X, info = lapack.dpotrs(factor, B.T, lower=1)
    if info != 0:
        raise linalg.LinAlgError("Cholesky solve failed (info=%d)" % info)
    return X.T


def _admm_local_from_stats(XHt, G, U, W, rho, factor=None):
    r = G.shape[0]
    A = np.eye(r) + G / rho
    B = (XHt + U) / rho + W
    W_c = _spd_solve_right(B, A, factor)
    # normal-equation residual: (W_c G - X H^T) - U - rho (W - W_c)
    res = W_c @ G - XHt - U - rho * (W - W_c)
    res_norm = np.sqrt(np.sum(res * res))
    scale = max(np.sqrt(np.sum(B * B)) * rho, 1.0)
    if res_norm > 1e-8 * scale:
        raise FloatingPointError("ADMM local solve residual %.3e too large" % res_norm)
    return W_c


def admm_local_w(shard, H, U_c, W_global, rho):
    """Closed-form minimizer of the augmented Lagrangian in ``W_c``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return _admm_local_from_stats(shard.X @ H.T, gram(H), U_c, W_global, rho)


def _consensus(messages, C, rho, lam, sigma2=None):
    avg = weighted_mean(messages, sigma2) if sigma2 is not None else plain_mean(messages)
    return soft_threshold(avg, lam / (C * rho))


def admm_aggregate(W_c, U_c, rho, lam, sigma2=None, weighted=False):
    """Consensus update ``S_{lam/(C rho)}(mean(W_c) - mean(U_c)/rho)``.

    With ``weighted`` both means use inverse-variance weights.
    """
    if not W_c or len(W_c) != len(U_c):
        raise ValueError("need equally many (non-zero) W_c and U_c")
    check_same_shape(*W_c, *U_c)
    msgs = [Wc - Uc / rho for Wc, Uc in zip(W_c, U_c)]
    return _consensus(msgs, len(W_c), rho, lam, sigma2 if weighted else None)


def admm_dual_update(U_c, W, W_c, rho):
    check_same_shape(U_c, W, W_c)
    return U_c + rho * (W - W_c)


# -- CEASE ----------------------------------------------------------------

def cease_local(shard, H, W_k, local_grad, global_grad, gamma, lam, hp, stats=None):
    """Minimize the gradient-enhanced local loss

        f_c(W) - <local_grad - global_grad, W> + gamma/2 ||W - W_k||^2 + lam ||W||_1

    ``lam`` is used as given; callers pass the averaged-loss weight.
    Without the L1 term the minimizer solves a small SPD system.
    """
    XHt, G = stats if stats is not None else (shard.X @ H.T, gram(H))
    shift = local_grad - global_grad
    r = G.shape[0]
    if lam == 0:
        A = G + gamma * np.eye(r)
        try:
            return _spd_solve_right(XHt + shift + gamma * W_k, A)
        except linalg.LinAlgError:
            pass

    def smooth_grad(W):
        return W @ G - XHt - shift + gamma * (W - W_k)

    L_bound = spectral_norm(G) + gamma
    if L_bound <= 0:
        raise ValueError("degenerate local problem: H_c is zero and gamma is 0")
    return fista_prox_solve(smooth_grad, L_bound, lam, W_k, tol=hp.inner_tol,
                            max_iters=hp.inner_max_iters, restart=True)


def cease_aggregate(W_c, sigma2=None, weighted=False):
    if not W_c:
        raise ValueError("cannot aggregate an empty list")
    check_same_shape(*W_c)
    if weighted:
        return weighted_mean(W_c, sigma2)
    return plain_mean(W_c)


def cease_grad_aggregate(grads, sigma2=None, weighted=False):
    return cease_aggregate(grads, sigma2, weighted)


# -- drivers --------------------------------------------------------------

def _stop_scale(W0, W):
    """``||W0||_F``, or ``||W||_F`` when ``W0`` is zero. Callers pass the
    first iterate as ``W`` and keep the result fixed for the whole run."""
    s = np.linalg.norm(W0)
    return s if s > 0 else np.linalg.norm(W)


def _check_round(W, strategy, k):
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("%s W-update diverged at round %d" % (strategy, k))


def _worker_gram(w):
    return w.gram()


def _run_agd(cluster, W0, hp, monitor):
    Gs = cluster.collect(cluster.map(_worker_gram), "lipschitz")
    L = spectral_norm(ordered_sum(Gs))
    if L <= 0:
        raise ValueError("all coefficient blocks are zero")
    state = AgdState(W=W0.copy(), Y=W0.copy(), W_prev=W0.copy(), nu=1.0, L=L)
    for k in range(1, hp.max_w_iters + 1):
        Y = cluster.broadcast(state.Y, "agd")
        grads = cluster.collect(cluster.map(lambda w: w.gradient(Y)), "agd")
        state = agd_round(state, grads, hp.lam)
        _check_round(state.W, "agd", k)
        cluster.ledger.add_round("agd")
        if monitor is not None:
            monitor(k, state.W)
        if k == 1:
            scale = _stop_scale(W0, state.W)
        if k >= hp.agd_min_iters and np.linalg.norm(state.W - state.W_prev) <= hp.w_tol * scale:
            return state.W, k, True
    return state.W, hp.max_w_iters, False


def _admm_worker_step(w, W, rho):
    XHt, G = w.stats()
    if w.U is None or w.U.shape != W.shape:
        w.U = np.zeros_like(W)
    if getattr(w, "_admm_G", None) is not G or w._admm_rho != rho:
        factor, info = lapack.dpotrf(np.eye(G.shape[0]) + G / rho, lower=1)
        if info != 0:
            raise linalg.LinAlgError("I + H H^T / rho is not positive definite")
        w._admm_G, w._admm_rho, w._admm_factor = G, rho, factor
    w.W_local = _admm_local_from_stats(XHt, G, w.U, W, rho, w._admm_factor)
    return w.W_local - w.U / rho


def _admm_worker_dual(w, W, rho):
    w.U = admm_dual_update(w.U, W, w.W_local, rho)


def _run_admm(cluster, W0, hp, monitor):
    W = W0.copy()
    sig = cluster.sigma2 if hp.weighted else None
    for k in range(1, hp.max_w_iters + 1):
        msgs = cluster.collect(cluster.map(_admm_worker_step, W, hp.rho), "admm")
        W_new = _consensus(msgs, cluster.C, hp.rho, hp.lam, sig)
        _check_round(W_new, "admm", k)
        W_new = cluster.broadcast(W_new, "admm")
        cluster.map(_admm_worker_dual, W_new, hp.rho)
        cluster.ledger.add_round("admm")
        if monitor is not None:
            monitor(k, W_new)
        step = np.linalg.norm(W_new - W)
        W = np.array(W_new)
        if k == 1:
            scale = _stop_scale(W0, W)
        if step <= hp.w_tol * scale:
            return W, k, True
    return W, hp.max_w_iters, False


def _cease_worker_local(w, W_k, gbar, gamma, lam, hp):
    XHt, G = w.stats()
    w.W_local = cease_local(None, None, W_k, w.local_grad, gbar, gamma, lam, hp,
                            stats=(XHt, G))
    return w.W_local


def _run_cease(cluster, W0, hp, monitor):
    W = W0.copy()
    sig = cluster.sigma2 if hp.weighted else None
    lam_local = hp.lam / cluster.C
    for k in range(1, hp.max_w_iters + 1):
        Wk = cluster.broadcast(W, "cease")
        grads = cluster.collect(cluster.map(lambda w: w.gradient(Wk)), "cease")
        gbar = cease_grad_aggregate(grads, sig, hp.weighted)
        gbar = cluster.broadcast(gbar, "cease")
        W_c = cluster.collect(
            cluster.map(_cease_worker_local, Wk, gbar, hp.gamma, lam_local, hp), "cease")
        W_new = cease_aggregate(W_c, sig, hp.weighted)
        _check_round(W_new, "cease", k)
        cluster.ledger.add_round("cease")
        if monitor is not None:
            monitor(k, W_new)
        step = np.linalg.norm(W_new - W)
        W = W_new
        if k == 1:
            scale = _stop_scale(W0, W)
        if step <= hp.w_tol * scale:
            return W, k, True
    return W, hp.max_w_iters, False


_RUNNERS = {"agd": _run_agd, "admm": _run_admm, "cease": _run_cease}


def solve_w(strategy, cluster, W0, hp, monitor=None):
    """Run one full W-update on ``cluster`` starting from ``W0``.

    Returns ``(W, rounds, converged)``. ``monitor(k, W)`` is called after
    every round with the coordinator's current basis.
    """
    try:
        runner = _RUNNERS[strategy]
    except KeyError:
        raise ValueError("unknown strategy %r; expected one of %s" % (strategy, STRATEGIES))
    W0 = np.array(W0, dtype=np.float64)
    # divergence is reported by the per-round finiteness check instead
    with np.errstate(over="ignore", invalid="ignore"):
        W, rounds, converged = runner(cluster, W0, hp, monitor)
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("non-finite basis after %s W-update" % strategy)
    return W, rounds, converged


def run_w_update(strategy, state, shards, hp, ledger=None, cluster=None, monitor=None):
    """W-update on a :class:`ModelState`; the result carries the updated
    state, the number of rounds, and whether the stopping rule was met."""
    if cluster is None:
        cluster = Cluster(shards, state.H, ledger=ledger, threads=1)
        for w, Wc, Uc in zip(cluster.workers, state.W_local or [None] * cluster.C,
                             state.U or [None] * cluster.C):
            w.W_local, w.U = Wc, Uc
            w.sigma2 = w._shard.sigma2
    W, rounds, converged = solve_w(strategy, cluster, state.W, hp, monitor)
    new_state = ModelState(
        W=W,
        H=list(state.H),
        W_local=[w.W_local for w in cluster.workers],
        U=[w.U for w in cluster.workers],
    )
    return WUpdateResult(new_state, rounds, converged)
