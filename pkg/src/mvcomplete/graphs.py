"""Incomplete multi-view data, k-NN Gaussian graphs and Laplacians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MultiViewDataset",
    "build_knn_graph",
    "build_graph_tensor",
    "observed_mask",
    "laplacian",
]


@dataclass
class MultiViewDataset:
    """``m`` views of ``n`` samples with per-view presence.

    Parameters
    ----------
    views : list of ndarray
        View ``i`` is a ``d_i x n`` matrix; columns are samples.
    presence : ndarray of bool, shape (m, n)
        ``presence[i, j]`` is True when sample ``j`` is observed in view ``i``.
        Defaults to all True.
    labels : ndarray of int, optional
        Ground-truth cluster labels, length ``n``.

    Columns of missing samples are zero-filled on construction.
    """

    views: list
    presence: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        if len(self.views) == 0:
            raise ValueError("dataset needs at least one view")
        views = [np.atleast_2d(np.array(v, dtype=float)) for v in self.views]
        n = views[0].shape[1]
        for i, v in enumerate(views):
            if v.ndim != 2 or v.shape[1] != n:
                raise ValueError(f"view {i} has shape {v.shape}, expected (d_{i}, {n})")
        if self.presence is None:
            presence = np.ones((len(views), n), dtype=bool)
        else:
            presence = np.array(self.presence, dtype=bool)
        if presence.shape != (len(views), n):
            raise ValueError(f"presence has shape {presence.shape}, expected {(len(views), n)}")
        if np.any(presence.sum(axis=1) == 0):
            raise ValueError("every view needs at least one present sample")
        if np.any(presence.sum(axis=0) == 0):
            bad = np.flatnonzero(presence.sum(axis=0) == 0)
            raise ValueError(f"samples {bad[:10].tolist()} are missing from every view")
        for v, p in zip(views, presence):
            v[:, ~p] = 0.0
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(int)
            if labels.shape != (n,):
                raise ValueError(f"labels have shape {labels.shape}, expected ({n},)")
            self.labels = labels
        self.views = views
        self.presence = presence

    @property
    def n(self) -> int:
        return self.views[0].shape[1]

    @property
    def m(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[0] for v in self.views]

    @property
    def n_present(self) -> np.ndarray:
        """Number of observed samples per view (``n_i``)."""
        return self.presence.sum(axis=1)

    @property
    def is_complete(self) -> bool:
        return bool(self.presence.all())


def build_knn_graph(view, presence, k: int = 10, sigma: float = 1.0) -> np.ndarray:
    """Directed k-NN Gaussian affinity graph of one view.

    ``g[j, l] = exp(-||x_j - x_l||^2 / (2 sigma^2))`` when ``x_j`` is one
    of the ``k`` nearest present neighbours of ``x_l`` (a sample is not
    its own neighbour; ties go to the smaller index), else 0. Rows and
    columns of missing samples are 0.
    """
    view = np.asarray(view, dtype=float)
    presence = np.asarray(presence, dtype=bool)
    n = view.shape[1]
    if presence.shape != (n,):
        raise ValueError("presence length must equal the number of samples")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    idx = np.flatnonzero(presence)
    n_i = idx.size
    if not 1 <= k < n_i:
        raise ValueError(f"k={k} must satisfy 1 <= k < n_i={n_i}")
    x = view[:, idx]
    sq = np.sum(x * x, axis=0)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x.T @ x), 0.0)
    np.fill_diagonal(d2, 0.0)
    ranked = d2.copy()
    np.fill_diagonal(ranked, np.inf)
    # column l: neighbours of sample l, stable sort breaks ties by index
    nbrs = np.argsort(ranked, axis=0, kind="stable")[:k, :]
    cols = np.broadcast_to(np.arange(n_i), nbrs.shape)
    sub = np.zeros((n_i, n_i))
    sub[nbrs, cols] = np.exp(-d2[nbrs, cols] / (2.0 * sigma**2))
    g = np.zeros((n, n))
    g[np.ix_(idx, idx)] = sub
    return g


def observed_mask(presence) -> np.ndarray:
    """Boolean ``n x m x n`` mask: ``(j, i, l)`` observed iff samples ``j`` and ``l`` are in view ``i``."""
    presence = np.asarray(presence, dtype=bool)
    return presence.T[:, :, None] & presence[None, :, :]


def build_graph_tensor(ds: MultiViewDataset, k: int = 10, sigma: float = 1.0):
    """Stack per-view graphs into an ``n x m x n`` tensor.

    Returns
    -------
    graphs : ndarray, shape (n, m, n)
        ``graphs[:, i, :]`` is the k-NN graph of view ``i``.
    observed : ndarray of bool, shape (n, m, n)
    """
    graphs = np.stack(
        [build_knn_graph(v, p, k, sigma) for v, p in zip(ds.views, ds.presence)], axis=1
    )
    return graphs, observed_mask(ds.presence)


def laplacian(g) -> np.ndarray:
    """``L = D - S`` with ``S = (g + g') / 2`` and ``D = diag(S 1)``."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("graph must be square")
    s = 0.5 * (g + g.T)
    return np.diag(s.sum(axis=1)) - s
