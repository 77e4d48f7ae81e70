import math

import numpy as np
import pytest

from treeising.graph import complete_graph, cycle_graph, path_graph, random_regular_graph, random_tree
from treeising.mcmc import (
    ChainState,
    ball_prediction,
    d_beta_free_entropy,
    edge_corr_avg,
    edge_corr_sum,
    free_entropy,
    integrated_autocorr_time,
    magnetization_estimate,
    random_flip,
    run_chain,
    sample_conditioned_plus,
    sample_configs,
    sign_condition,
    summarize,
)
from treeising.tree_ising import IsingSpec, brute_force_measure


def test_chain_bookkeeping_stays_in_sync():
    g = random_regular_graph(60, 3, np.random.default_rng(0))
    st = ChainState.new(g, 0.8, 0.0, 1, init="random")
    mags, edges = run_chain(st, 200, check_every=10)
    st.check()
    x = st.spins.astype(int)
    assert mags[-1] == x.sum()
    assert edges[-1] == sum(x[i] * x[j] for i, j in g.edges)


def test_chain_is_reproducible():
    g = cycle_graph(30)
    a = ChainState.new(g, 0.5, 0.1, 7)
    b = ChainState.new(g, 0.5, 0.1, 7)
    assert np.array_equal(run_chain(a, 50)[0], run_chain(b, 50)[0])


def test_chain_matches_exact_law_small_graph():
    # empirical configuration frequencies on K4 against enumeration
    g = complete_graph(4)
    beta, B = 0.4, 0.2
    st = ChainState.new(g, beta, B, 3)
    run_chain(st, 100)
    xs = sample_configs(st, 40_000)
    ex = brute_force_measure(IsingSpec(g, beta, np.full(4, B)))
    idx = ((xs > 0).astype(int) * (1 << np.arange(4))).sum(1)
    freq = np.bincount(idx, minlength=16) / len(xs)
    exact_idx = ((ex.configs > 0).astype(int) * (1 << np.arange(4))).sum(1)
    exact = np.zeros(16)
    exact[exact_idx] = ex.probs
    assert 0.5 * np.abs(freq - exact).sum() < 0.02


def test_sign_condition():
    rng = np.random.default_rng(0)
    x = np.array([[1, 1, -1], [-1, -1, 1], [1, -1, 1]], dtype=np.int8)
    y = sign_condition(x, rng)
    assert np.all(y.sum(1) > 0)
    ties = sign_condition(np.tile(np.array([1, -1], dtype=np.int8), (2000, 1)), rng)
    assert 0.45 < np.mean(ties[:, 0] == 1) < 0.55


def test_random_flip_symmetrises():
    rng = np.random.default_rng(1)
    y = random_flip(np.ones((4000, 3), dtype=np.int8), rng)
    assert abs(y.mean()) < 0.05
    assert np.all(np.abs(y.sum(1)) == 3)


def test_conditioned_plus_requires_zero_field():
    st = ChainState.new(cycle_graph(5), 0.5, 0.3, 0)
    with pytest.raises(ValueError):
        sample_conditioned_plus(st)


def test_summarize_iid():
    rng = np.random.default_rng(2)
    est = summarize("x", rng.normal(size=20_000))
    assert abs(est.mean) < 4 * est.se
    assert 0.005 < est.se < 0.01
    assert est.ess > 10_000
    assert integrated_autocorr_time(np.ones(10)) == 1.0


def test_edge_corr_single_edge_normalisations():
    g = path_graph(2)
    e = edge_corr_avg(g, 0.6, n_samples=50_000, rng=0, per="edge")
    v = edge_corr_avg(g, 0.6, n_samples=50_000, rng=0, per="vertex")
    assert abs(e.mean - math.tanh(0.6)) < 4 * e.se
    assert v.mean == pytest.approx(e.mean / 2)


def test_magnetization_high_temperature_near_zero_spread():
    g = random_regular_graph(200, 3, np.random.default_rng(3))
    est = magnetization_estimate(g, 0.2, "unconditioned", 2000, rng=4)
    assert abs(est.mean) < 4 * est.se + 1e-3


def test_ball_prediction_on_tree_equals_exact_plus_law():
    # on a star the depth-1 ball is the whole graph with no outside neighbours
    g = random_tree(6, np.random.default_rng(5))
    law = ball_prediction(g, 10, 0.7, 1.0, "plus", centers=[g.root])
    assert abs(sum(law.values()) - 1) < 1e-12
    sym = ball_prediction(g, 10, 0.7, 1.0, "symmetric", centers=[g.root])
    assert len(sym) >= len(law)


def test_free_entropy_derivative_identity():
    g = cycle_graph(6)
    spec = IsingSpec(g, 0.9, np.linspace(0, 1, 6))
    assert d_beta_free_entropy(spec) == pytest.approx(edge_corr_sum(spec), rel=1e-7)
    # beta = 0: log 2 per site plus the field terms
    zero = IsingSpec(g, 0.0)
    assert free_entropy(zero) == pytest.approx(math.log(2))
