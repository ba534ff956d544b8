"""k-means on an embedding and the ACC / NMI / Purity clustering scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "ClusteringReport",
    "kmeans",
    "contingency",
    "accuracy",
    "nmi",
    "purity",
    "evaluate_embedding",
]


def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    """Counts ``C[a, b]`` of samples with predicted label ``a`` and true label ``b``."""
    pred, truth = _check_pair(pred, truth)
    _, p_idx = np.unique(pred, return_inverse=True)
    _, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((p_idx.max(initial=-1) + 1, t_idx.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (p_idx, t_idx), 1)
    return table


def accuracy(pred, truth) -> float:
    """Fraction of agreements under the best one-to-one matching of label names."""
    table = contingency(pred, truth)
    if table.size == 0:
        return 1.0
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies (natural log)."""
    table = contingency(pred, truth).astype(float)
    n = table.sum()
    if n == 0:
        return 1.0
    h_pred = _entropy(table.sum(axis=1))
    h_true = _entropy(table.sum(axis=0))
    if h_pred == 0 and h_true == 0:
        return 1.0
    if h_pred == 0 or h_true == 0:
        return 0.0
    joint = table / n
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(np.clip(mi / np.sqrt(h_pred * h_true), 0.0, 1.0))


def purity(pred, truth) -> float:
    table = contingency(pred, truth)
    if table.size == 0:
        return 1.0
    return float(table.max(axis=1).sum() / table.sum())


def _kmeans_pp(x, c, rng):
    n = x.shape[0]
    centers = np.empty((c, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for k in range(1, c):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[k] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[k]) ** 2, axis=1))
    return centers


def _sq_dists(x, centers):
    return np.maximum(
        np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T + np.sum(centers**2, axis=1)[None, :],
        0.0,
    )


def _lloyd(x, c, rng, max_iter=300, tol=1e-8):
    centers = _kmeans_pp(x, c, rng)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        labels = np.argmin(d2, axis=1)
        new = np.empty_like(centers)
        for k in range(c):
            members = labels == k
            if members.any():
                new[k] = x[members].mean(axis=0)
            else:
                # empty cluster: re-seed from the point farthest from its centre
                far = np.argmax(d2[np.arange(len(x)), labels])
                new[k] = x[far]
                labels[far] = k
                d2[far, :] = 0.0
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = _sq_dists(x, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return labels, inertia


def kmeans(points, c: int, restarts: int = 10, seed: int = 0):
    """Lloyd's algorithm with k-means++ seeding over several restarts.

    Parameters
    ----------
    points : ndarray, shape (d, n)
        Columns are samples, matching the embedding layout.
    c : int
        Number of clusters, at most ``n``.

    Returns
    -------
    best : ndarray of int
        Labels of the restart with the lowest inertia.
    runs : list of ndarray
        Labels of every restart, in order.
    """
    x = np.asarray(points, dtype=float).T
    n = x.shape[0]
    if not 1 <= c <= n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    rng = np.random.default_rng(seed)
    runs, inertias = [], []
    for _ in range(restarts):
        labels, inertia = _lloyd(x, c, rng)
        runs.append(labels)
        inertias.append(inertia)
    return runs[int(np.argmin(inertias))], runs


@dataclass(frozen=True)
class ClusteringReport:
    acc_mean: float
    acc_std: float
    nmi_mean: float
    nmi_std: float
    purity_mean: float
    purity_std: float
    restarts: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_embedding(A, truth, c: int, restarts: int = 10, seed: int = 0) -> ClusteringReport:
    """Cluster the columns of ``A`` ``restarts`` times and summarize the scores."""
    _, runs = kmeans(A, c, restarts, seed)
    scores = np.array([[accuracy(r, truth), nmi(r, truth), purity(r, truth)] for r in runs])
    mean, std = scores.mean(axis=0), scores.std(axis=0)
    return ClusteringReport(
        acc_mean=float(mean[0]), acc_std=float(std[0]),
        nmi_mean=float(mean[1]), nmi_std=float(std[1]),
        purity_mean=float(mean[2]), purity_std=float(std[2]),
        restarts=restarts, seed=seed,
    )
