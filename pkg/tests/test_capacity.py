import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeising.capacity import (
    H,
    capa3_bound,
    capa3_exact,
    capa3_solve,
    divergence_slope,
    entropy_predictor,
    entropy_sup,
    eps0_estimate,
    eps_bounds,
    expansion_exact,
    expansion_spectral,
    f_envelope_check,
    fiedler_value,
    level_sizes,
    max_admissible_kappa,
    prune_T_t,
    s_t_profile,
    s_t_sum,
)
from treeising.ensembles import load_law, umgw_sample
from treeising.graph import (
    complete_graph,
    cycle_graph,
    from_edges,
    from_parents,
    kary_tree,
    path_graph,
    random_regular_graph,
    regular_tree,
)


def test_regular_S_profile_is_linear():
    s = s_t_profile(level_sizes(regular_tree(3, 12)), 2.0)
    assert np.allclose(s, 4 * np.arange(1, 13) / 9, atol=1e-13)
    assert divergence_slope(s) == pytest.approx(4 / 9)


def test_prune_keeps_only_long_rays():
    # root with a long branch and a short branch
    parent = [-1, 0, 1, 2, 0]
    t = from_parents(parent)
    p = prune_T_t(t, 3)
    assert p.n == 4
    with pytest.raises(ValueError):
        prune_T_t(t, 4)


def test_S_variants():
    t = regular_tree(3, 6)
    full = s_t_sum(t, 2.0, 6, "full")
    pruned = s_t_sum(t, 2.0, 6, "pruned")
    assert np.allclose(full, pruned)


def test_capa_exact_on_path():
    # a single ray of length t: capa3 = (sum_k theta^-2k)^-1/2
    theta = 0.5
    for t in (1, 3, 6):
        expect = sum(theta ** (-2 * k) for k in range(1, t + 1)) ** -0.5
        assert capa3_exact(path_graph(t + 1), theta) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("method", ["mirror", "pairwise", "fw"])
def test_solver_brackets_exact_value(method):
    t = kary_tree(2, 5)
    exact = capa3_exact(t, 0.5)
    res = capa3_solve(t, 0.5, tol=1e-4, method=method, max_iter=5000)
    assert res.value <= exact + 1e-9 <= res.upper + 2e-9
    assert res.gap <= 1e-4


def test_solver_flow_is_feasible_unit_direction():
    rng = np.random.default_rng(0)
    tree = prune_T_t(umgw_sample(load_law("P34"), 6, rng), 6)
    res = capa3_solve(tree, 0.4)
    assert res.flow.conservation_defect() < 1e-10
    assert res.flow.V() <= 1 + 1e-9
    assert res.flow.strength == pytest.approx(res.value, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(2, 7))
def test_capa_below_level_bound(seed, t):
    rng = np.random.default_rng(seed)
    law = load_law("P34")
    theta = 7 / 18
    tree = prune_T_t(umgw_sample(law, t, rng), t)
    res = capa3_solve(tree, theta)
    assert res.gap <= 1e-3
    assert res.value <= capa3_bound(tree, theta) + 1e-3
    assert res.upper >= capa3_exact(tree, theta) - 1e-9


def test_capa_on_regular_tree_matches_symmetric_flow():
    t = regular_tree(3, 5)
    theta = 0.5
    # symmetric flow: load on every ray is sum_k (theta^-k / |level k|)^2 = S
    S = s_t_profile(level_sizes(t), 1 / theta)[-1]
    assert capa3_exact(t, theta) == pytest.approx(S ** -0.5, rel=1e-12)
    assert capa3_bound(t, theta) == pytest.approx(S ** -0.5, rel=1e-12)


def test_envelope():
    h = np.linspace(1e-3, 50, 20001)
    k = max_admissible_kappa(0.5, h)
    assert k == pytest.approx(math.sqrt(2 * (1 - 0.25) / 3), rel=1e-4)
    assert f_envelope_check(0.5, k, h) <= 1e-12
    assert f_envelope_check(0.5, 1.1 * k, h) > 0


def test_expansion_known_values():
    assert expansion_exact(complete_graph(4), 0, 0.5).value == 2
    assert expansion_exact(cycle_graph(8), 0, 0.5).value == 0.5
    assert expansion_exact(path_graph(6), 0, 0.5).value == pytest.approx(1 / 3)
    rep = expansion_exact(cycle_graph(8), 0, 0.5)
    assert len(rep.witness) == 4
    assert json.loads(rep.to_json())["value"] == 0.5


def test_spectral_known_values():
    assert expansion_spectral(complete_graph(6)).value == pytest.approx(3.0)
    assert fiedler_value(cycle_graph(10)) == pytest.approx(2 - 2 * math.cos(2 * math.pi / 10))
    disconnected = from_edges(4, [(0, 1), (2, 3)])
    assert expansion_spectral(disconnected).value == 0.0


def test_fiedler_dense_and_sparse_agree():
    g = random_regular_graph(60, 3, np.random.default_rng(1))
    if not g.is_connected():
        pytest.skip("disconnected sample")
    assert fiedler_value(g, dense_max=10) == pytest.approx(fiedler_value(g), abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_spectral_below_exact(seed):
    g = random_regular_graph(14, 3, np.random.default_rng(seed))
    assert expansion_spectral(g).value <= expansion_exact(g, 0, 0.5).value + 1e-12


def test_binary_entropy():
    assert H(0.0) == 0 and H(1.0) == 0
    assert H(0.5) == pytest.approx(math.log(2))


def test_entropy_half_set_on_cubic_law():
    law = load_law("P3")
    r = entropy_predictor(law, [np.array([0.5])])
    assert r.total == pytest.approx(-0.5 * math.log(2), abs=1e-14)
    assert r.bound == pytest.approx(-0.5 * math.log(2), abs=1e-14)


def test_entropy_sup_negative_and_eps():
    law = load_law("P3")
    assert entropy_sup(law, 0.1, which="total") == pytest.approx(-0.1625, abs=5e-4)
    for d in (0.3, 1.5, 2.2):  # equality at d = a/2
        tight, loose = eps_bounds(3.0, d, 0.01)
        assert tight <= loose + 1e-15
    e_loose = eps0_estimate(law, 0.1, "eps_loose")
    e_tight = eps0_estimate(law, 0.1, "eps_tight")
    assert 0 < e_loose < e_tight
    assert entropy_sup(law, 0.1, 0.5 * e_loose, which="eps_loose") < 0


def test_entropy_rejects_bad_input():
    with pytest.raises(ValueError):
        entropy_predictor(load_law("P3"), [np.array([1.5])])
    with pytest.raises(ValueError):
        entropy_predictor(load_law("P3").degree_law({2: 1.0}), [np.array([0.2])])
