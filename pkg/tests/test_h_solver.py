import numpy as np
import pytest

from dbmd.h_solver import assign_clusters, column_objective, update_h
from dbmd.model import DataShard, Hyperparams
from dbmd.numerics import ShapeError

from conftest import random_simplex


def test_pure_basis_column_concentrates(rng):
    r, eps = 4, 1e-8
    Q, _ = np.linalg.qr(rng.normal(size=(10, r)))
    X = Q[:, [2]]
    hp = Hyperparams(rank=r, epsilon_h=eps, h_max_iters=2000, h_tol=1e-14)
    h = update_h(DataShard(X), Q, np.full((r, 1), 1.0 / r), hp)
    assert h[2, 0] >= 1 - 10 * eps * r


def test_strong_uniform_prior_gives_uniform(rng):
    r = 5
    W = rng.normal(size=(6, r))
    X = rng.normal(size=(6, 8))
    hp = Hyperparams.from_alpha0(r, 1e6 + 1)
    H = update_h(DataShard(X), W, random_simplex(rng, r, 8), hp)
    np.testing.assert_allclose(H, 1.0 / r, atol=1e-3)


def test_two_dim_matches_grid_search(rng):
    for _ in range(5):
        W = rng.normal(size=(1, 2))
        x = rng.normal(size=1)
        alpha = rng.random(2) * 0.5
        hp = Hyperparams(rank=2, alpha=alpha, h_tol=1e-15, h_max_iters=2000)
        h = update_h(DataShard(x[:, None]), W, np.array([[0.5], [0.5]]), hp)[:, 0]
        t = np.linspace(1e-8, 1 - 1e-8, 200001)
        res = x[0] - W[0, 0] * t - W[0, 1] * (1 - t)
        vals = 0.5 * res ** 2 - alpha[0] * np.log(t) - alpha[1] * np.log(1 - t)
        t_best = t[int(np.argmin(vals))]
        assert h[0] == pytest.approx(t_best, abs=1e-4)


def test_matches_projected_gradient_oracle(rng):
    from conftest import eg_column_oracle
    W = rng.random((7, 3))
    x = W @ np.array([0.2, 0.5, 0.3]) + 0.05 * rng.normal(size=7)
    alpha = np.array([0.3, 0.1, 0.2])
    hp = Hyperparams(rank=3, alpha=alpha, h_tol=1e-15, h_max_iters=5000)
    h = update_h(DataShard(x[:, None]), W, np.full((3, 1), 1 / 3), hp)[:, 0]
    ref = eg_column_oracle(x, W, alpha, np.full(3, 1 / 3))
    assert column_objective(x, W, h, alpha) == pytest.approx(
        column_objective(x, W, ref, alpha), abs=1e-9)


def test_descent_and_feasibility(rng):
    r, n = 4, 30
    W = rng.normal(size=(8, r))
    X = rng.normal(size=(8, n))
    alpha = np.array([0.0, 0.5, 0.1, 0.0])
    hp = Hyperparams(rank=r, alpha=alpha)
    H0 = random_simplex(rng, r, n)
    H = update_h(DataShard(X), W, H0, hp)
    np.testing.assert_allclose(H.sum(axis=0), 1.0, atol=1e-10)
    assert H.min() >= hp.epsilon_h
    for j in range(n):
        assert column_objective(X[:, j], W, H[:, j], alpha) <= \
            column_objective(X[:, j], W, H0[:, j], alpha) + 1e-10


def test_column_permutation_equivariance(rng):
    W = rng.normal(size=(5, 3))
    X = rng.normal(size=(5, 12))
    H0 = random_simplex(rng, 3, 12)
    hp = Hyperparams(rank=3)
    perm = rng.permutation(12)
    H = update_h(DataShard(X), W, H0, hp)
    Hp = update_h(DataShard(X[:, perm]), W, H0[:, perm], hp)
    np.testing.assert_allclose(Hp, H[:, perm], rtol=1e-12, atol=1e-15)


def test_off_simplex_rejected(rng):
    with pytest.raises(ValueError):
        update_h(DataShard(np.ones((2, 1))), np.eye(2), np.array([[0.7], [0.7]]),
                 Hyperparams(rank=2))


def test_shape_error():
    with pytest.raises(ShapeError):
        update_h(DataShard(np.ones((3, 2))), np.eye(2), np.full((2, 2), 0.5),
                 Hyperparams(rank=2))


def test_assign_clusters():
    assert assign_clusters(np.array([[0.7], [0.2], [0.1]]))[0] == 0
    assert assign_clusters(np.array([[0.5], [0.5]]))[0] == 0
    H = np.eye(4) * 0.9 + 0.025
    np.testing.assert_array_equal(assign_clusters(H), np.arange(4))
