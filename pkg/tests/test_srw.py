import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeising.graph import cycle_graph, path_graph, random_regular_graph, random_tree, regular_tree
from treeising.limits import rho_mu_regular
from treeising.srw import (
    functionals_JAF,
    occupation_apply,
    occupation_matrix,
    occupation_matrix_eig,
    occupation_weights,
    plus_window_magnetizations,
    rho_l,
    rho_l_regular,
    tau_r_simulate,
    u_n_small_check,
    uniformization_weights,
)
from treeising.tree_ising import spherical_magnetizations, regular_children


def test_uniformization_weights_sum_to_one():
    for mu in (1e-6, 0.3, 5.0, 300.0):
        assert uniformization_weights(mu).sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), l=st.sampled_from([0.05, 1.0, 7.0]))
def test_uniformization_matches_eigendecomposition(seed, l):
    rng = np.random.default_rng(seed)
    g = random_tree(int(rng.integers(2, 30)), rng)
    assert np.abs(occupation_matrix(g, l) - occupation_matrix_eig(g, l)).max() < 1e-12


def test_two_state_closed_form():
    g = path_graph(2)
    for l in (1e-4, 0.5, 3.0, 200.0):
        a = 0.5 + (-math.expm1(-2 * l)) / (4 * l)
        M = occupation_matrix(g, l)
        assert M[0, 0] == pytest.approx(a, abs=1e-12)
        assert M[0, 1] == pytest.approx(1 - a, abs=1e-12)


def test_occupation_apply_matches_matrix():
    g = random_regular_graph(30, 3, np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=30)
    assert np.allclose(occupation_apply(g, 2.0, x), occupation_matrix(g, 2.0) @ x, atol=1e-13)


def test_killed_weights_single_edge_exit():
    # killed mass E[(l - theta_0)^+]/l with theta_0 ~ Exp(1) at l = 1 equals 1/e
    w = occupation_weights(path_graph(2), 0, 1.0, 0)
    assert 1 - w.total == pytest.approx(math.exp(-1), abs=1e-12)


def test_killed_weights_nonincreasing_in_radius():
    g = regular_tree(3, 6)
    full = occupation_weights(g, 0, 4.0).full(g.n)
    prev = np.zeros(g.n)
    for r in range(0, 6):
        w = occupation_weights(g, 0, 4.0, r).full(g.n)
        assert np.all(w >= prev - 1e-15) and np.all(w <= full + 1e-15)
        prev = w


def test_tau_r_exit_law_single_edge():
    sim = tau_r_simulate(path_graph(2), 0, 200_000, np.random.default_rng(2))
    assert np.mean(sim.theta < 1.0) == pytest.approx(1 - math.exp(-1), abs=0.005)
    stuck = tau_r_simulate(path_graph(2), 1, 100, np.random.default_rng(3))
    assert np.all(np.isinf(stuck.theta))


def test_tau_r_mean_on_regular_tree():
    # each of r jumps from a degree-3 vertex takes Exp(3) time
    sim = tau_r_simulate(regular_tree(3, 7), 5, 40_000, np.random.default_rng(4))
    assert np.mean(sim.tau) == pytest.approx(5 / 3, rel=0.02)


def test_rho_l_regular_limits():
    rho = rho_mu_regular(3, 1.0)
    for l in (1.0, 10.0, 100.0):
        assert rho_l_regular(3, 1.0, l, 200) == pytest.approx(rho, abs=1e-9)


def test_rho_l_explicit_tree_vs_level_chain():
    t = regular_tree(3, 8)
    for l in (0.5, 3.0):
        assert rho_l(t, 0.9, l, 5) == pytest.approx(rho_l_regular(3, 0.9, l, 5, margin=3), abs=1e-12)
    with pytest.raises(ValueError):
        rho_l(t, 0.9, 1.0, 8)


def test_plus_window_on_tree():
    t = regular_tree(3, 6)
    m = plus_window_magnetizations(t, 0, 3, 0.8)
    sph = spherical_magnetizations(regular_children(3, 6), 0.8, math.inf)
    # the window with outside clamped plus is the depth-4 plus measure
    sph4 = spherical_magnetizations(regular_children(3, 4), 0.8)
    assert m[0] == pytest.approx(sph4[0], abs=1e-13)
    assert m[0] <= 1.0 and sph[0] > 0


def test_functionals():
    g = cycle_graph(8)
    x = np.ones(8)
    x[:3] = -1
    w = occupation_weights(g, 0, 0.1)
    m = plus_window_magnetizations(g, 0, 2, 0.5)
    f = functionals_JAF(w, x, 0.3, m)
    assert f.J == int(f.y <= -0.3) and f.F == f.J * f.A


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.floats(1e-3, 1.0), l=st.sampled_from([0.1, 1.0, 10.0]))
def test_small_set_inequality_property(seed, eta, l):
    rng = np.random.default_rng(seed)
    g = random_tree(int(rng.integers(2, 60)), rng)
    x = rng.choice([-1.0, 1.0], size=g.n)
    if x.sum() < 0:
        x = -x
    assert u_n_small_check(g, x, l, eta).holds


def test_small_set_rejects_negative_total():
    with pytest.raises(ValueError):
        u_n_small_check(path_graph(3), -np.ones(3), 1.0, 0.5)
