"""Inexact ALM solver for graph-tensor completion with a shared embedding.

One outer iteration updates, in order: the embedding ``A`` and projections
``W_i`` (a generalized eigenproblem), the view weights ``delta``, the graph
tensor ``G`` (independent simplex-constrained tube problems), the auxiliary
tensor ``Y`` (transformed weighted Schatten-p shrinkage), the multiplier
``C`` and the penalty ``rho``.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np
import scipy.linalg

from .graphs import MultiViewDataset, build_graph_tensor, laplacian
from .prox import tensor_wsp_prox
from .tensor import SchattenSpec, TransformSpec

__all__ = [
    "SolverConfig",
    "SolverState",
    "SolverResult",
    "IterRecord",
    "TubeProblem",
    "DegenerateFitWarning",
    "ViewOperators",
    "view_operators",
    "init_state",
    "update_embedding",
    "view_fits",
    "update_weights",
    "weighted_objective",
    "build_cost_tensor",
    "solve_tube",
    "solve_tubes",
    "update_graph_tensor",
    "update_y",
    "step",
    "run",
    "transform_out_of_sample",
]

log = logging.getLogger(__name__)

F_FLOOR = 1e-12
MAX_NEWTON_ITERS = 100
MAX_BISECT_ITERS = 200


class DegenerateFitWarning(RuntimeWarning):
    """A view fits the embedding exactly, so its weight had to be floored."""


@dataclass(frozen=True)
class SolverConfig:
    """Model and solver parameters.

    ``rank`` selects the DCT transform width: a float in (0, 1] is a
    fraction of ``n`` (rounded up), an int is an absolute column count.
    An explicit ``transform`` overrides it. ``embed_dim`` has no default
    here; experiments set it to the number of clusters.
    """

    lam: float = 3.0
    mu: float = 10.0
    gamma: float = 100.0
    rho0: float = 1e-4
    eta: float = 1.1
    embed_dim: int | None = None
    p: float = 0.6
    schatten_weights: tuple | None = None
    rank: float | int = 0.5
    transform: TransformSpec | None = None
    max_outer_iters: int = 200
    stop_tol: float = 1e-6
    newton_tol: float = 1e-10
    eigen_reg: float = 1e-8
    eig_order: Literal["smallest", "largest"] = "smallest"

    def __post_init__(self):
        for name in ("lam", "rho0", "stop_tol", "newton_tol", "eigen_reg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("mu", "gamma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.eta > 1:
            raise ValueError("eta must exceed 1")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.embed_dim is not None and self.embed_dim < 1:
            raise ValueError("embed_dim must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")
        if self.eig_order not in ("smallest", "largest"):
            raise ValueError("eig_order must be 'smallest' or 'largest'")
        if isinstance(self.rank, bool) or self.rank <= 0:
            raise ValueError("rank must be a positive fraction or count")
        if isinstance(self.rank, float) and self.rank > 1:
            raise ValueError("a fractional rank must lie in (0, 1]")
        if self.schatten_weights is not None:
            object.__setattr__(self, "schatten_weights", tuple(float(w) for w in self.schatten_weights))

    def resolve_transform(self, n3: int) -> TransformSpec:
        if self.transform is not None:
            if self.transform.n3 != n3:
                raise ValueError(f"transform has {self.transform.n3} rows, tensor needs {n3}")
            return self.transform
        if isinstance(self.rank, (int, np.integer)):
            r = int(self.rank)
        else:
            r = int(np.ceil(float(self.rank) * n3 - 1e-9))
        return TransformSpec.dct(n3, min(max(r, 1), n3))

    def resolve_schatten(self, m: int) -> SchattenSpec:
        if self.schatten_weights is None:
            return SchattenSpec.uniform(self.p, m)
        return SchattenSpec(self.p, np.asarray(self.schatten_weights))


class IterRecord(NamedTuple):
    iter: int
    res_gy: float
    res_dg: float
    res_dy: float
    objective: float
    rho: float


@dataclass
class SolverState:
    A: np.ndarray
    W: list
    delta: np.ndarray
    G: np.ndarray
    Y: np.ndarray
    C: np.ndarray
    rho: float
    iter: int = 0
    history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


@dataclass
class SolverResult:
    A: np.ndarray
    W: list
    G: np.ndarray
    Y: np.ndarray
    delta: np.ndarray
    history: list
    converged: bool
    n_iter: int
    timings: dict
    seed: int
    transform: TransformSpec

    @property
    def diagnostics(self) -> list:
        return self.history


@dataclass(frozen=True)
class TubeProblem:
    """One tube of the graph update: minimize over the simplex

    ``t'g / rho + gamma / (2 rho) ||P_obs(g - z)||^2 + 1/2 ||g - y + c / rho||^2``.
    """

    t: np.ndarray
    y: np.ndarray
    c: np.ndarray
    z: np.ndarray
    observed: np.ndarray
    rho: float
    gamma: float

    def __post_init__(self):
        n = np.shape(self.t)[0]
        for name in ("y", "c", "z", "observed"):
            if np.shape(getattr(self, name)) != (n,):
                raise ValueError(f"tube vector {name} must have length {n}")
        if not self.rho > 0 or self.gamma < 0:
            raise ValueError("need rho > 0 and gamma >= 0")

    def objective(self, g) -> float:
        g = np.asarray(g, dtype=float)
        obs = np.asarray(self.observed, dtype=bool)
        d = (g - self.z)[obs]
        r = g - self.y + self.c / self.rho
        return float(self.t @ g / self.rho + 0.5 * self.gamma / self.rho * (d @ d) + 0.5 * (r @ r))


# --------------------------------------------------------------------------
# (A, W) and delta

@dataclass(frozen=True)
class ViewOperators:
    """Per-view quantities that do not change across iterations.

    ``residual[i]`` is ``P - P X'(X P X' + eps I)^{-1} X P`` and
    ``solve[i]`` is ``(X P X' + eps I)^{-1} X P``, so ``W_i = solve[i] @ A.T``.
    """

    residual: tuple
    solve: tuple


def view_operators(ds: MultiViewDataset, eigen_reg: float = 1e-8) -> ViewOperators:
    residual, solve = [], []
    for x, present in zip(ds.views, ds.presence):
        xp = x * present
        gram = xp @ xp.T
        d = gram.shape[0]
        scale = np.trace(gram) / d if np.trace(gram) > 0 else 1.0
        gram[np.diag_indices(d)] += eigen_reg * scale
        s = scipy.linalg.solve(gram, xp, assume_a="pos")
        k = np.diag(present.astype(float)) - xp.T @ s
        residual.append(0.5 * (k + k.T))
        solve.append(s)
    return ViewOperators(tuple(residual), tuple(solve))


def _embedding_matrix(delta, G, lam, ops: ViewOperators) -> np.ndarray:
    m = G.shape[1]
    mat = np.zeros((G.shape[0], G.shape[0]))
    for i in range(m):
        mat += delta[i] * (ops.residual[i] + lam * laplacian(G[:, i, :]))
    return 0.5 * (mat + mat.T)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def update_embedding(state: SolverState, ds: MultiViewDataset, config: SolverConfig,
                     ops: ViewOperators | None = None):
    """Minimize ``sum_i delta_i f_i(A, W_i)`` over ``A A' = I`` and ``W_i``.

    Rows of ``A`` are the eigenvectors of the ``d`` smallest eigenvalues of
    ``sum_i delta_i (P_i - P_i X_i'(X_i P_i X_i' + eps I)^{-1} X_i P_i + lam L_{G_i})``
    (``eig_order='largest'`` flips the selection).
    """
    if ops is None:
        ops = view_operators(ds, config.eigen_reg)
    d = config.embed_dim or state.A.shape[0]
    n = ds.n
    if d > n:
        raise ValueError(f"embedding dimension {d} exceeds sample count {n}")
    mat = _embedding_matrix(state.delta, state.G, config.lam, ops)
    if config.eig_order == "smallest":
        _, vecs = scipy.linalg.eigh(mat, subset_by_index=[0, d - 1])
    else:
        _, vecs = scipy.linalg.eigh(mat, subset_by_index=[n - d, n - 1])
        vecs = vecs[:, ::-1]
    A = np.ascontiguousarray(_fix_signs(vecs).T)
    W = [s @ A.T for s in ops.solve]
    return A, W


def view_fits(A, W, ds: MultiViewDataset, G, lam: float) -> np.ndarray:
    """``f_i = ||(A - W_i' X_i) P_i||_F^2 + lam tr(A L_{G_i} A')`` for every view."""
    f = np.empty(ds.m)
    for i, (x, present) in enumerate(zip(ds.views, ds.presence)):
        r = (A - W[i].T @ x)[:, present]
        lap = laplacian(G[:, i, :])
        f[i] = np.sum(r * r) + lam * np.sum((A @ lap) * A)
    return f


def update_weights(state: SolverState, ds: MultiViewDataset, config: SolverConfig) -> np.ndarray:
    """``delta_i = n_i / sqrt(f_i)`` at the current ``A``, ``W`` and ``G``."""
    f = view_fits(state.A, state.W, ds, state.G, config.lam)
    if np.any(f <= 0):
        warnings.warn(
            f"views {np.flatnonzero(f <= 0).tolist()} fit exactly; f floored at {F_FLOOR}",
            DegenerateFitWarning, stacklevel=2,
        )
    return ds.n_present / np.sqrt(np.maximum(f, F_FLOOR))


def weighted_objective(A, W, ds: MultiViewDataset, G, lam: float) -> float:
    """``sum_i n_i sqrt(f_i)``."""
    f = view_fits(A, W, ds, G, lam)
    return float(np.sum(ds.n_present * np.sqrt(np.maximum(f, 0.0))))


# --------------------------------------------------------------------------
# G update

def build_cost_tensor(A, delta, lam: float) -> np.ndarray:
    """``T[j, i, l] = lam / 2 * delta_i * ||A[:, j] - A[:, l]||^2``.

    With this layout ``sum(T * G) == lam * sum_i delta_i tr(A L_{G_i} A')``.
    """
    A = np.asarray(A, dtype=float)
    sq = np.sum(A * A, axis=0)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (A.T @ A), 0.0)
    np.fill_diagonal(dist, 0.0)
    return 0.5 * lam * np.asarray(delta, dtype=float)[None, :, None] * dist[:, None, :]


def solve_tubes(t, y, c, z, observed, rho: float, gamma: float,
                newton_tol: float = 1e-10) -> np.ndarray:
    """Solve many tube problems at once; all inputs have shape ``(..., n)``.

    The minimizer has the form ``g_i = s_i * max(b_i + v, 0)`` with
    ``s_i = rho / (rho + gamma)`` on observed entries and 1 elsewhere,
    ``u = y - c/rho + gamma/rho P_obs(z) - t/rho`` and
    ``b = u - mean(u) + 1/n``. The scalar ``v`` is the root of
    ``sum(g) - 1``, found by Newton's method from ``v = 0``.
    """
    t, y, c, z = (np.asarray(a, dtype=float) for a in (t, y, c, z))
    observed = np.broadcast_to(np.asarray(observed, dtype=bool), t.shape)
    shape = t.shape
    n = shape[-1]
    t, y, c, z, observed = (a.reshape(-1, n) for a in (t, y, c, z, observed))

    u = y - c / rho - t / rho + np.where(observed, (gamma / rho) * z, 0.0)
    b = u - u.mean(axis=1, keepdims=True) + 1.0 / n
    s = np.where(observed, rho / (rho + gamma), 1.0)

    def f_and_grad(v, rows=slice(None)):
        arg = b[rows] + v[:, None]
        active = arg > 0
        f = np.sum(s[rows] * np.where(active, arg, 0.0), axis=1) - 1.0
        grad = np.sum(np.where(active, s[rows], 0.0), axis=1)
        return f, grad

    v = np.zeros(b.shape[0])
    f, grad = f_and_grad(v)
    todo = np.abs(f) > newton_tol
    fallback = np.zeros(b.shape[0], dtype=bool)
    for _ in range(MAX_NEWTON_ITERS):
        rows = np.flatnonzero(todo)
        if rows.size == 0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            v_new = v[rows] - f[rows] / grad[rows]
        f_new, grad_new = f_and_grad(v_new, rows)
        bad = ~np.isfinite(v_new) | ((f[rows] >= 0) & (np.abs(f_new) >= np.abs(f[rows])))
        ok = rows[~bad]
        v[ok], f[ok], grad[ok] = v_new[~bad], f_new[~bad], grad_new[~bad]
        fallback[rows[bad]] = True
        todo[rows[bad]] = False
        todo[ok] = np.abs(f[ok]) > newton_tol
    fallback |= todo

    for row in np.flatnonzero(fallback):
        v[row] = _bisect_root(b[row], s[row], newton_tol)

    g = s * np.maximum(b + v[:, None], 0.0)
    return g.reshape(shape)


def _bisect_root(b, s, tol):
    def f(v):
        return float(np.sum(s * np.maximum(b + v, 0.0)) - 1.0)

    lo = -float(np.max(b))  # every entry inactive: f = -1
    step = 1.0
    hi = 0.0
    while f(hi) < 0:
        hi = step
        step *= 2.0
    for _ in range(MAX_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_tube(tp: TubeProblem, newton_tol: float = 1e-10) -> np.ndarray:
    return solve_tubes(tp.t, tp.y, tp.c, tp.z, tp.observed, tp.rho, tp.gamma, newton_tol)


def update_graph_tensor(state: SolverState, graphs, observed, config: SolverConfig) -> np.ndarray:
    """Solve the ``n * m`` tube problems of the graph update."""
    T = build_cost_tensor(state.A, state.delta, config.lam)
    return solve_tubes(T, state.Y, state.C, graphs, observed, state.rho, config.gamma,
                       config.newton_tol)


def update_y(state: SolverState, config: SolverConfig,
             transform: TransformSpec | None = None,
             schatten: SchattenSpec | None = None) -> np.ndarray:
    """``Y = prox_{(mu/rho) ||.||^p}(G + C/rho)``."""
    G = state.G
    if transform is None:
        transform = config.resolve_transform(G.shape[2])
    if schatten is None:
        schatten = config.resolve_schatten(G.shape[1])
    return tensor_wsp_prox(G + state.C / state.rho, transform, config.mu / state.rho, schatten)


# --------------------------------------------------------------------------
# outer loop

def init_state(ds: MultiViewDataset, graphs, config: SolverConfig) -> SolverState:
    """``C = 0``, ``G = Y = graphs``, ``delta_i = 1/m``, ``rho = rho0``."""
    d = config.embed_dim
    if d is None:
        raise ValueError("config.embed_dim must be set")
    graphs = np.asarray(graphs, dtype=float)
    return SolverState(
        A=np.zeros((d, ds.n)),
        W=[np.zeros((dim, d)) for dim in ds.dims],
        delta=np.full(ds.m, 1.0 / ds.m),
        G=graphs.copy(),
        Y=graphs.copy(),
        C=np.zeros_like(graphs),
        rho=config.rho0,
    )


def step(state: SolverState, ds: MultiViewDataset, graphs, observed, config: SolverConfig, *,
         ops: ViewOperators | None = None, transform: TransformSpec | None = None,
         schatten: SchattenSpec | None = None) -> SolverState:
    """One outer iteration; returns a new state and leaves ``state`` untouched."""
    if ops is None:
        ops = view_operators(ds, config.eigen_reg)
    timings = dict(state.timings)

    def timed(key, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[key] = timings.get(key, 0.0) + time.perf_counter() - t0
        return out

    A, W = timed("embedding", lambda: update_embedding(state, ds, config, ops))
    new = replace(state, A=A, W=W)
    f = timed("weights", lambda: view_fits(A, W, ds, state.G, config.lam))
    if np.any(f <= 0):
        warnings.warn("a view fits exactly; f floored", DegenerateFitWarning, stacklevel=2)
    new.delta = ds.n_present / np.sqrt(np.maximum(f, F_FLOOR))
    objective = float(np.sum(ds.n_present * np.sqrt(np.maximum(f, 0.0))))

    new.G = timed("graph", lambda: update_graph_tensor(new, graphs, observed, config))
    new.Y = timed("y", lambda: update_y(new, config, transform, schatten))
    gap = new.G - new.Y
    new.C = state.C + state.rho * gap
    new.iter = state.iter + 1
    new.rho = config.rho0 * config.eta ** new.iter
    new.timings = timings
    new.history = state.history + [IterRecord(
        iter=new.iter,
        res_gy=float(np.linalg.norm(gap)),
        res_dg=float(np.linalg.norm(new.G - state.G)),
        res_dy=float(np.linalg.norm(new.Y - state.Y)),
        objective=objective,
        rho=new.rho,
    )]
    return new


def run(ds: MultiViewDataset, config: SolverConfig, seed: int = 0, *,
        graphs=None, observed=None, knn_k: int = 10, knn_sigma: float = 1.0,
        callback=None) -> SolverResult:
    """Iterate :func:`step` until the scaled residual drops below ``stop_tol``.

    The stopping quantity is
    ``max(||G-Y||, ||dG||, ||dY||) / max(1, ||graphs||)``. Hitting
    ``max_outer_iters`` first is not an error: the final state is returned
    with ``converged=False``. ``callback(state)`` is called after every
    iteration.
    """
    if graphs is None:
        graphs, observed = build_graph_tensor(ds, knn_k, knn_sigma)
    elif observed is None:
        raise ValueError("observed mask required with explicit graphs")
    transform = config.resolve_transform(ds.n)
    schatten = config.resolve_schatten(ds.m)
    ops = view_operators(ds, config.eigen_reg)
    scale = max(1.0, float(np.linalg.norm(graphs)))

    state = init_state(ds, graphs, config)
    converged = False
    for _ in range(config.max_outer_iters):
        state = step(state, ds, graphs, observed, config, ops=ops, transform=transform,
                     schatten=schatten)
        if callback is not None:
            callback(state)
        rec = state.history[-1]
        if max(rec.res_gy, rec.res_dg, rec.res_dy) / scale < config.stop_tol:
            converged = True
            break
    if not converged:
        log.warning("no convergence after %d iterations", state.iter)
    return SolverResult(
        A=state.A, W=state.W, G=state.G, Y=state.Y, delta=state.delta,
        history=state.history, converged=converged, n_iter=state.iter,
        timings=state.timings, seed=seed, transform=transform,
    )


def transform_out_of_sample(W, x_views, presence) -> np.ndarray:
    """Embed a new sample as the mean of ``W_i' x_i`` over its present views."""
    presence = np.asarray(presence, dtype=bool)
    if presence.shape != (len(W),) or len(x_views) != len(W):
        raise ValueError("need one feature vector and one presence flag per view")
    if not presence.any():
        raise ValueError("sample has no present view")
    parts = [W[i].T @ np.asarray(x_views[i], dtype=float) for i in np.flatnonzero(presence)]
    return np.mean(parts, axis=0)
