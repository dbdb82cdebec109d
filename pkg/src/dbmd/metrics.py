"""Clustering evaluation."""

import numpy as np
from scipy.optimize import linear_sum_assignment


def contingency(pred, truth, k_pred=None, k_true=None):
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    k_pred = k_pred or int(pred.max()) + 1
    k_true = k_true or int(truth.max()) + 1
    M = np.zeros((k_pred, k_true), dtype=np.int64)
    np.add.at(M, (pred, truth), 1)
    return M


def hungarian_accuracy(pred, truth, k_pred=None, k_true=None):
    """Fraction of samples correctly labelled under the best one-to-one
    matching of predicted clusters to true classes.

    The contingency table is zero-padded to a square before solving the
    assignment, so the cluster and class counts may differ.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0 or truth.size == 0:
        raise ValueError("label vectors must be non-empty")
    if pred.shape != truth.shape:
        raise ValueError("label vectors differ in length: %d vs %d" % (pred.size, truth.size))
    M = contingency(pred, truth, k_pred, k_true)
    k = max(M.shape)
    square = np.zeros((k, k), dtype=np.int64)
    square[:M.shape[0], :M.shape[1]] = M
    rows, cols = linear_sum_assignment(square, maximize=True)
    return square[rows, cols].sum() / pred.size


def match_columns(W_hat, W_true):
    """Permutation ``perm`` minimizing ``||W_hat[:, perm] - W_true||_F``."""
    cost = ((W_hat[:, :, None] - W_true[:, None, :]) ** 2).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(W_true.shape[1], dtype=np.int64)
    perm[cols] = rows
    return perm


def basis_error(W_hat, W_true):
    """Frobenius distance after optimally matching columns."""
    perm = match_columns(W_hat, W_true)
    return float(np.linalg.norm(W_hat[:, perm] - W_true))
