import warnings
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_dataset, random_simplex_tensor
from mvcomplete.graphs import MultiViewDataset, build_graph_tensor, laplacian
from mvcomplete.prox import tensor_wsp_prox
from mvcomplete.solver import (
    DegenerateFitWarning,
    SolverConfig,
    SolverState,
    TubeProblem,
    ViewOperators,
    build_cost_tensor,
    init_state,
    run,
    solve_tube,
    step,
    transform_out_of_sample,
    update_embedding,
    update_graph_tensor,
    update_weights,
    update_y,
    view_fits,
    view_operators,
    weighted_objective,
)
from mvcomplete.tensor import wsp_norm
from oracles import project_simplex, random_tube, tube_qp_oracle

def make_state(ds, config, seed=0):
    rng = np.random.default_rng(seed)
    graphs, observed = build_graph_tensor(ds, k=3)
    state = init_state(ds, graphs, config)
    state.G = random_simplex_tensor(rng, graphs.shape)
    state.delta = rng.uniform(0.5, 2, ds.m)
    A, W = update_embedding(state, ds, config)
    return replace(state, A=A, W=W), graphs, observed


CFG = SolverConfig(embed_dim=3)

# ---- tube subproblem


def test_tube_feasible_point_is_fixed():
    y = np.random.default_rng(0).random(12)
    y /= y.sum()
    tp = TubeProblem(np.zeros(12), y, np.zeros(12), np.zeros(12), np.ones(12, bool), 1.0, 0.0)
    np.testing.assert_allclose(solve_tube(tp), y, atol=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_tube_matches_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    gamma = 0.0 if seed % 10 == 0 else None
    observed = np.ones(12, bool) if seed % 10 == 1 else None
    tp = random_tube(rng, gamma=gamma, observed=observed)
    g = solve_tube(tp)
    assert g.min() >= -1e-12 and abs(g.sum() - 1) <= 1e-8
    assert abs(tp.objective(g) - tp.objective(tube_qp_oracle(tp))) < 1e-6


def test_tube_extreme_inputs_stay_feasible():
    rng = np.random.default_rng(1)
    for scale in (1e-8, 1.0, 1e8):
        tp = random_tube(rng)
        tp = replace(tp, t=tp.t * scale, c=tp.c * scale, rho=1e-4)
        g = solve_tube(tp)
        assert np.isfinite(g).all() and g.min() >= -1e-12 and abs(g.sum() - 1) <= 1e-8


def test_tube_problem_validation():
    with pytest.raises(ValueError):
        TubeProblem(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3), np.ones(3, bool), 1.0, 1.0)
    with pytest.raises(ValueError):
        TubeProblem(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), np.ones(3, bool), 0.0, 1.0)


# ---- (A, W) and delta


def test_embedding_orthonormal():
    state, _, _ = make_state(random_dataset(2), CFG)
    np.testing.assert_allclose(state.A @ state.A.T, np.eye(3), atol=1e-8)


def test_embedding_single_view_eigen_sum():
    rng = np.random.default_rng(3)
    ds = MultiViewDataset([rng.standard_normal((4, 15))])
    cfg = SolverConfig(embed_dim=2, lam=1e-300)
    state, _, _ = make_state(ds, cfg)
    ops = view_operators(ds, cfg.eigen_reg)
    evals = np.linalg.eigvalsh(state.delta[0] * ops.residual[0])
    f = view_fits(state.A, state.W, ds, state.G, 0.0)
    assert abs(state.delta[0] * f[0] - evals[:2].sum()) < 1e-6


def test_projection_stationarity():
    ds = random_dataset(4)
    state, _, _ = make_state(ds, CFG)
    h = 1e-5
    for i in range(ds.m):
        W = [w.copy() for w in state.W]
        grad = np.zeros_like(W[i])
        for idx in np.ndindex(W[i].shape):
            vals = []
            for sign in (1, -1):
                W[i][idx] = state.W[i][idx] + sign * h
                vals.append(view_fits(state.A, W, ds, state.G, CFG.lam)[i])
            W[i][idx] = state.W[i][idx]
            grad[idx] = (vals[0] - vals[1]) / (2 * h)
        assert np.linalg.norm(grad) < 1e-4


def test_largest_eig_order_switch():
    ds = random_dataset(5)
    state, _, _ = make_state(ds, CFG)
    small, _ = update_embedding(state, ds, CFG)
    large, _ = update_embedding(state, ds, replace(CFG, eig_order="largest"))
    ops = view_operators(ds)
    mat = sum(state.delta[i] * (ops.residual[i] + CFG.lam * laplacian(state.G[:, i, :])) for i in range(ds.m))
    assert np.trace(small @ mat @ small.T) < np.trace(large @ mat @ large.T)


def test_weights_direct_formula():
    ds = random_dataset(6)
    state, _, _ = make_state(ds, CFG)
    delta = update_weights(state, ds, CFG)
    for i in range(ds.m):
        present = ds.presence[i]
        r = (state.A - state.W[i].T @ ds.views[i])[:, present]
        f = np.sum(r**2) + CFG.lam * np.trace(state.A @ laplacian(state.G[:, i, :]) @ state.A.T)
        assert abs(delta[i] - present.sum() / np.sqrt(f)) < 1e-10


def test_weights_symmetric_views():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 12))
    presence = np.ones((3, 12), bool)
    presence[:2, [1, 5]] = False
    ds = MultiViewDataset([x, x.copy(), rng.standard_normal((2, 12))], presence)
    state, _, _ = make_state(ds, CFG)
    state.G[:, 1, :] = state.G[:, 0, :]
    A, W = update_embedding(state, ds, CFG)
    delta = update_weights(replace(state, A=A, W=W), ds, CFG)
    assert abs(delta[0] - delta[1]) < 1e-10 * delta[0]


def test_weights_linear_in_present_count():
    ds = random_dataset(8)
    state, _, _ = make_state(ds, CFG)
    base = update_weights(state, ds, CFG)

    class Doubled(MultiViewDataset):
        @property
        def n_present(self):
            return 2 * self.presence.sum(axis=1)

    doubled = Doubled(ds.views, ds.presence)
    np.testing.assert_allclose(update_weights(state, doubled, CFG), 2 * base, rtol=1e-12)


def test_weights_floor_warns():
    ds = random_dataset(9)
    state, _, _ = make_state(ds, CFG)
    state = replace(state, A=np.zeros_like(state.A), W=[np.zeros_like(w) for w in state.W])
    with pytest.warns(DegenerateFitWarning):
        delta = update_weights(state, ds, CFG)
    assert np.isfinite(delta).all()


# ---- cost tensor and graph update


def test_cost_tensor_zero_and_symmetric():
    rng = np.random.default_rng(10)
    assert not build_cost_tensor(np.ones((2, 5)), [1.0, 2.0], 3.0).any()
    T = build_cost_tensor(rng.standard_normal((3, 6)), rng.random(2), 3.0)
    np.testing.assert_allclose(T, np.transpose(T, (2, 1, 0)), atol=1e-14)


def test_cost_tensor_trace_identity():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((3, 8))
    delta = rng.random(4)
    G = random_simplex_tensor(rng, (8, 4, 8))
    lhs = np.sum(build_cost_tensor(A, delta, 3.0) * G)
    rhs = 3.0 * sum(delta[i] * np.trace(A @ laplacian(G[:, i, :]) @ A.T) for i in range(4))
    assert abs(lhs - rhs) < 1e-6


def test_graph_update_on_simplex_and_order_invariant():
    ds = random_dataset(12)
    state, graphs, observed = make_state(ds, CFG)
    state.rho = 0.7
    G = update_graph_tensor(state, graphs, observed, CFG)
    assert G.min() >= -1e-12
    np.testing.assert_allclose(G.sum(axis=2), 1.0, atol=1e-6)
    # tube-by-tube sequential evaluation agrees
    T = build_cost_tensor(state.A, state.delta, CFG.lam)
    for j, i in [(0, 0), (5, 1), (19, 1)]:
        tp = TubeProblem(T[j, i], state.Y[j, i], state.C[j, i], graphs[j, i], observed[j, i], 0.7, CFG.gamma)
        np.testing.assert_allclose(solve_tube(tp), G[j, i], atol=1e-12)


def test_graph_update_large_gamma_projects_graph():
    rng = np.random.default_rng(13)
    ds = MultiViewDataset([rng.standard_normal((3, 15)), rng.standard_normal((4, 15))])
    cfg = replace(CFG, gamma=1e8)
    state, graphs, observed = make_state(ds, cfg)
    state.rho = 1.0
    G = update_graph_tensor(state, graphs, observed, cfg)
    expected = np.apply_along_axis(project_simplex, 2, graphs)
    assert np.abs(G - expected).max() < 1e-3


# ---- Y update


def test_update_y_zero_mu():
    ds = random_dataset(14)
    state, _, _ = make_state(ds, CFG)
    state.C = np.random.default_rng(14).standard_normal(state.G.shape)
    cfg = replace(CFG, mu=0.0)
    np.testing.assert_array_equal(update_y(state, cfg), state.G + state.C / state.rho)


def test_update_y_large_rho():
    ds = random_dataset(15)
    state, _, _ = make_state(ds, CFG)
    state.C = np.random.default_rng(15).standard_normal(state.G.shape)
    state.rho = 1e8
    assert np.abs(update_y(state, CFG) - (state.G + state.C / state.rho)).max() < 1e-6


def test_update_y_stochastic_optimality():
    rng = np.random.default_rng(16)
    ds = random_dataset(16, n=8, dims=(2, 3, 2))
    state, _, _ = make_state(ds, CFG)
    state.C = rng.standard_normal(state.G.shape)
    state.rho = 2.0
    transform = CFG.resolve_transform(ds.n)
    schatten = CFG.resolve_schatten(ds.m)
    target = state.G + state.C / state.rho
    tau = CFG.mu / state.rho

    def objective(x):
        return tau * wsp_norm(x, transform, schatten, power=True) + 0.5 * np.linalg.norm(x - target) ** 2

    y = update_y(state, CFG)
    best = objective(y)
    for scale in np.geomspace(1e-4, 1, 500):
        assert best <= objective(y + scale * rng.standard_normal(y.shape)) + 1e-10


# ---- outer loop


def test_step_rho_and_multiplier_identity(small_synth):
    cfg = SolverConfig(embed_dim=3)
    graphs, observed = build_graph_tensor(small_synth, k=5)
    state = init_state(small_synth, graphs, cfg)
    for k in range(1, 6):
        new = step(state, small_synth, graphs, observed, cfg)
        assert new.rho == 1e-4 * 1.1**k
        assert np.abs((new.C - state.C) - state.rho * (new.G - new.Y)).max() < 1e-12
        assert len(new.history) == k and new.history[-1].rho == new.rho
        assert set(new.timings) == {"embedding", "weights", "graph", "y"}
        state = new


@pytest.mark.parametrize("seed", range(10))
def test_embedding_weights_pair_monotone(seed):
    ds = random_dataset(100 + seed, n=18, dims=(3, 4, 5))
    state, _, _ = make_state(ds, CFG, seed)
    state.delta = update_weights(state, ds, CFG)
    before = weighted_objective(state.A, state.W, ds, state.G, CFG.lam)
    for _ in range(3):
        A, W = update_embedding(state, ds, CFG)
        state = replace(state, A=A, W=W)
        state.delta = update_weights(state, ds, CFG)
        after = weighted_objective(A, W, ds, state.G, CFG.lam)
        assert after <= before * (1 + 1e-10)
        before = after


def test_ky_fan_block_graph():
    c, sizes = 3, [5, 4, 6]
    n = sum(sizes)
    rng = np.random.default_rng(17)
    g = np.zeros((n, n))
    start = 0
    for s in sizes:
        g[start:start + s, start:start + s] = rng.uniform(0.1, 1, (s, s))
        start += s
    ds = MultiViewDataset([rng.standard_normal((2, n))])
    graphs = g[:, None, :]
    cfg = SolverConfig(embed_dim=c)
    state = init_state(ds, graphs, cfg)
    ops = ViewOperators(residual=(np.zeros((n, n)),), solve=view_operators(ds).solve)
    A, _ = update_embedding(state, ds, cfg, ops)
    assert np.trace(A @ laplacian(g) @ A.T) < 1e-8


def test_run_deterministic(small_synth):
    cfg = SolverConfig(embed_dim=3, max_outer_iters=15)
    r1 = run(small_synth, cfg, seed=1, knn_k=5)
    r2 = run(small_synth, cfg, seed=1, knn_k=5)
    assert r1.diagnostics == r2.diagnostics
    np.testing.assert_array_equal(r1.A, r2.A)
    assert not r1.converged and r1.n_iter == 15


def test_run_stops_by_tolerance(small_synth):
    cfg = SolverConfig(embed_dim=3, rho0=1.0, eta=1.5, stop_tol=1e-6)
    graphs, observed = build_graph_tensor(small_synth, k=5)
    res = run(small_synth, cfg, graphs=graphs, observed=observed)
    assert res.converged and res.n_iter < cfg.max_outer_iters
    assert res.history[-1].res_gy / np.linalg.norm(graphs) < 1e-6


def multiplier_norms(ds, **kwargs):
    norms = []
    cfg = SolverConfig(embed_dim=3, stop_tol=1e-300, **kwargs)
    run(ds, cfg, knn_k=5, callback=lambda s: norms.append(np.linalg.norm(s.C)))
    return np.array(norms)


@pytest.mark.parametrize("seed", range(3))
def test_multiplier_bounded(seed):
    ds = random_dataset(200 + seed, n=30, dims=(3, 4, 5))
    norms = multiplier_norms(ds, rho0=1.0)
    assert norms[20:].max() <= 10 * norms[19]


def test_multiplier_plateaus_at_default_penalty(small_synth):
    norms = multiplier_norms(small_synth)
    assert norms[100:].max() <= 10 * norms[99]
    assert np.ptp(norms[-30:]) <= 0.05 * norms[-1]


@pytest.mark.xfail(strict=True, reason="C starts at 0 and only builds up once rho grows; "
                   "from rho0=1e-4 iteration 20 is still in that warm-up")
def test_multiplier_bounded_from_iteration_20_at_default_penalty(small_synth):
    norms = multiplier_norms(small_synth)
    assert norms[20:].max() <= 10 * norms[19]


def test_run_needs_observed_with_graphs(small_synth):
    graphs, _ = build_graph_tensor(small_synth, k=5)
    with pytest.raises(ValueError):
        run(small_synth, SolverConfig(embed_dim=3), graphs=graphs)


# ---- out of sample


def test_out_of_sample_single_view_and_permutation():
    rng = np.random.default_rng(18)
    W = [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]
    x = [rng.standard_normal(3), rng.standard_normal(4)]
    np.testing.assert_array_equal(transform_out_of_sample(W, x, [True, False]), W[0].T @ x[0])
    np.testing.assert_allclose(
        transform_out_of_sample(W, x, [True, True]),
        transform_out_of_sample(W[::-1], x[::-1], [True, True]), atol=1e-15)
    with pytest.raises(ValueError):
        transform_out_of_sample(W, x, [False, False])


def test_out_of_sample_recovers_training_column():
    # noiseless instance: every view is an invertible linear map of the embedding
    rng = np.random.default_rng(19)
    n, d = 12, 2
    base = np.linalg.qr(rng.standard_normal((n, d)))[0].T
    views = [rng.standard_normal((d, d)) @ base for _ in range(2)]
    ds = MultiViewDataset(views)
    cfg = SolverConfig(embed_dim=d, lam=1e-12)
    graphs, observed = build_graph_tensor(ds, k=3)
    state = init_state(ds, graphs, cfg)
    A, W = update_embedding(state, ds, cfg)
    residual = max(np.linalg.norm(A - w.T @ x) for w, x in zip(W, ds.views))
    for j in (0, 5, 11):
        z = transform_out_of_sample(W, [v[:, j] for v in ds.views], [True, True])
        assert np.linalg.norm(z - A[:, j]) <= residual + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eta=1.0)
    with pytest.raises(ValueError):
        SolverConfig(p=0.0)
    with pytest.raises(ValueError):
        SolverConfig(rank=1.5)
    with pytest.raises(ValueError):
        SolverConfig(gamma=-1.0)
    assert SolverConfig(rank=3).resolve_transform(10).r == 3
    assert SolverConfig(rank=0.5).resolve_transform(9).r == 5
