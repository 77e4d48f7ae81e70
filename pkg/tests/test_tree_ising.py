import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeising.graph import path_graph, random_tree, regular_tree, star_graph
from treeising.tree_ising import (
    IsingSpec,
    brute_force_measure,
    dlr_window_check,
    edge_corr_formula,
    f_theta,
    h_cont_gap,
    h_cont_gap_regular,
    pair_correlation,
    regular_root_magnetization,
    root_magnetization,
    spherical_magnetizations,
    tree_messages,
    truncate,
)


def f_direct(h, beta):
    return math.atanh(math.tanh(beta) * math.tanh(h))


@settings(max_examples=200, deadline=None)
@given(h=st.floats(-15, 15), beta=st.floats(0, 3))
def test_f_theta_matches_definition(h, beta):
    assert abs(f_theta(h, beta) - f_direct(h, beta)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(h=st.floats(0, 1e6), beta=st.floats(0, 5))
def test_f_theta_bounds(h, beta):
    v = f_theta(h, beta)
    assert 0 <= v <= beta + 1e-15
    assert v <= math.tanh(beta) * h + 1e-12
    assert f_theta(-h, beta) == -v


def test_f_theta_limits():
    assert f_theta(math.inf, 0.7) == 0.7
    assert f_theta(-math.inf, 0.7) == -0.7
    assert f_theta(60.0, 0.7) == pytest.approx(0.7, abs=1e-15)
    assert np.all(np.isfinite(f_theta(np.array([1e300, -1e300, 40.0]), 2.0)))


def test_pair_correlation_formula():
    assert pair_correlation(0.0, 0.0, 0.8) == pytest.approx(math.tanh(0.8))
    r = math.tanh(0.3) * math.tanh(1.1)
    assert pair_correlation(0.3, 1.1, 0.5) == pytest.approx(edge_corr_formula(math.tanh(0.5), r))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1), beta=st.floats(0, 1.5))
def test_bp_matches_enumeration(n, seed, beta):
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    B = rng.uniform(-2, 2, size=n)
    msg = tree_messages(t, beta, "free", fields=B)
    ex = brute_force_measure(IsingSpec(t, beta, B))
    assert np.abs(msg.magnetizations() - ex.magnetizations).max() < 1e-10
    if t.m:
        assert np.abs(msg.edge_correlations() - ex.edge_correlations).max() < 1e-10


def test_plus_boundary_matches_clamped_enumeration():
    t = regular_tree(3, 3)
    msg = tree_messages(t, 0.9, "plus")
    B = np.where(msg.depth == 3, np.inf, 0.0)
    ex = brute_force_measure(IsingSpec(t, 0.9, B))
    assert np.abs(msg.magnetizations() - ex.magnetizations).max() < 1e-12
    assert np.abs(msg.edge_correlations() - ex.edge_correlations).max() < 1e-12


def test_minus_is_flip_of_plus():
    t = random_tree(12, np.random.default_rng(5))
    plus = tree_messages(t, 0.8, "plus").magnetizations()
    minus = tree_messages(t, 0.8, "minus").magnetizations()
    assert np.allclose(plus, -minus, atol=1e-15)


def test_brute_force_rejects_antiferro():
    with pytest.raises(ValueError):
        IsingSpec(path_graph(2), -0.1)


def test_dlr_window_consistency():
    rng = np.random.default_rng(6)
    for _ in range(5):
        t = random_tree(10, rng)
        spec = IsingSpec(t, 0.7, rng.uniform(0, 1, size=10))
        assert dlr_window_check(spec, 1) < 1e-12


def test_dlr_detects_wrong_measure():
    spec = IsingSpec(path_graph(5, root=2), 0.7)
    p = brute_force_measure(spec).probs
    q = np.ones_like(p) / len(p)
    assert dlr_window_check(spec, 1, q) > 1e-3


def test_spherical_matches_explicit_tree():
    beta = 0.9
    t = regular_tree(3, 5)
    msg = tree_messages(t, beta, "plus")
    m = msg.magnetizations()
    sph = spherical_magnetizations([3, 2, 2, 2, 2], beta)
    for d in range(6):
        assert np.allclose(m[msg.depth == d], sph[d], atol=1e-13)


def test_regular_high_temperature_decay():
    assert regular_root_magnetization(3, 0.3, 100) < 1e-10
    assert regular_root_magnetization(3, 0.7, 100) > 0.5


def test_truncate():
    t = regular_tree(3, 4)
    assert truncate(t, 2).n == 1 + 3 + 6


def test_root_magnetization_field_on_frontier():
    t = star_graph(3)
    # root sees three independent leaves each with field H
    H = 0.6
    expect = math.tanh(3 * f_direct(H, 0.5))
    assert root_magnetization(t, 0.5, H) == pytest.approx(expect, abs=1e-14)
    with pytest.raises(ValueError):
        root_magnetization(t, 0.5, -1.0)


def test_h_cont_gap_sign_and_threshold():
    t = regular_tree(3, 8)
    g = h_cont_gap(t, 0.7, 0.9, 4)
    assert g >= 0
    assert h_cont_gap_regular(3, 0.7, 0.9, 4) >= 0
    with pytest.raises(ValueError):
        h_cont_gap(t, 0.5, 0.9, 4)
