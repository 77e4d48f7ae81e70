"""Continuous-time simple random walk occupation weights and related functionals.

The walk jumps along each edge at rate 1, so vertex ``v`` is left at rate
``deg(v)``. Time averages ``(1/l) int_0^l P_i(X_s = j, s <= theta_r) ds`` are
computed by uniformisation: with ``Lam`` the largest degree in the ball and
``P = I + L/Lam``,

    a = sum_k w_k (P^k)[i, :],   w_k = P(Poisson(Lam l) >= k + 1) / (Lam l).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .graph import RootedGraph, ball, bfs
from .tree_ising import IsingSpec, brute_force_measure, regular_children, spherical_magnetizations, tree_messages

TAIL_TOL = 1e-13


def uniformization_weights(rate_time: float, tol: float = TAIL_TOL) -> np.ndarray:
    """``w_k = P(N >= k+1)/mu`` for ``N ~ Poisson(mu)``, truncated once the
    remaining mass ``sum_{j >= k} w_j`` drops below ``tol``."""
    mu = rate_time
    if mu <= 0:
        return np.ones(1)
    kmax = int(mu + 15 * math.sqrt(mu) + 50)  # Poisson tail beyond is negligible
    w = poisson.sf(np.arange(kmax + 1), mu) / mu
    remaining = np.cumsum(w[::-1])[::-1]
    return w[: int(np.sum(remaining >= tol)) or 1]


def _killed_generator(g: RootedGraph, verts: np.ndarray):
    """Sub-generator ``A_S - D`` on ``verts`` with full-graph degrees on the diagonal."""
    A = sparse.csr_matrix(
        (np.ones(len(g.indices)), g.indices, g.indptr), shape=(g.n, g.n)
    )[verts][:, verts]
    deg = g.degrees[verts].astype(float)
    return A, deg


def _time_average(A, deg, l: float, start: np.ndarray) -> np.ndarray:
    """``(1/l) int_0^l start @ exp(s (A - D)) ds`` by uniformisation."""
    lam = float(deg.max(initial=0.0))
    if lam == 0:
        return start.copy()
    w = uniformization_weights(lam * l)
    PT = sparse.csr_matrix(A.T) / lam
    stay = 1.0 - deg / lam
    v = start.astype(float).copy()
    out = w[0] * v
    for k in range(1, len(w)):
        v = PT @ v + stay * v
        out += w[k] * v
    return out


@dataclass(frozen=True)
class OccupationWeights:
    center: int
    l: float
    r: float
    vertices: np.ndarray  # parent-graph ids of the weighted vertices
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def full(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.vertices] = self.weights
        return out


def occupation_weights(g: RootedGraph, i: int, l: float, r=math.inf) -> OccupationWeights:
    """``a_{i, .}^{l, r}``: time-averaged law of the walk killed on leaving ``B_i(r)``."""
    if l <= 0:
        raise ValueError("l must be positive")
    if not 0 <= i < g.n:
        raise ValueError(f"vertex {i} out of range")
    if math.isinf(r):
        verts = np.arange(g.n)
    else:
        verts = np.sort(ball(g, i, int(r)).vertex_map)
    A, deg = _killed_generator(g, verts)
    start = (verts == i).astype(float)
    a = _time_average(A, deg, l, start)
    return OccupationWeights(i, l, r, verts, np.maximum(a, 0.0))


def occupation_matrix(g: RootedGraph, l: float) -> np.ndarray:
    """All rows ``a_{i, j}^{l, inf}`` as a dense ``n x n`` matrix."""
    if l <= 0:
        raise ValueError("l must be positive")
    verts = np.arange(g.n)
    A, deg = _killed_generator(g, verts)
    lam = float(deg.max(initial=0.0))
    if lam == 0:
        return np.eye(g.n)
    P = np.asarray(A.todense()) / lam + np.diag(1.0 - deg / lam)
    w = uniformization_weights(lam * l)
    V = np.eye(g.n)
    out = w[0] * V
    for k in range(1, len(w)):
        V = V @ P
        out += w[k] * V
    return out


def occupation_apply(g: RootedGraph, l: float, x) -> np.ndarray:
    """``y = a^{l, inf} x`` for all centres at once (the matrix is symmetric)."""
    if l <= 0:
        raise ValueError("l must be positive")
    A, deg = _killed_generator(g, np.arange(g.n))
    return _time_average(A, deg.astype(float), l, np.asarray(x, float))


def occupation_matrix_eig(g: RootedGraph, l: float) -> np.ndarray:
    """Independent evaluation by diagonalising the (symmetric) generator."""
    L = -g.laplacian()
    lam, V = np.linalg.eigh(L)
    x = lam * l
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(np.abs(x) < 1e-12, 1.0 + x / 2, np.expm1(x) / x)
    return (V * factor) @ V.T


def y_weighted_average(weights: OccupationWeights, x) -> float:
    """``y_i = sum_j x_j a_{i, j}``; ``x`` is indexed by parent-graph vertex."""
    x = np.asarray(x, float)
    return float(weights.weights @ x[weights.vertices])


# ---------------------------------------------------------------------------
# plus window measure


def plus_window_magnetizations(g: RootedGraph, i: int, t: int, beta: float) -> np.ndarray:
    """Magnetisations of the Ising model on ``B_i(t)`` with every vertex outside
    clamped to ``+1`` (returned for all vertices; outside ones are ``1``)."""
    view = ball(g, i, t)
    outside = g.degrees[view.vertex_map] - view.graph.degrees
    fields = beta * outside.astype(float)
    if view.graph.is_tree():
        m_local = tree_messages(view.graph, beta, "free", fields=fields).magnetizations()
    elif view.graph.n <= 20:
        m_local = brute_force_measure(IsingSpec(view.graph, beta, fields)).magnetizations
    else:
        raise ValueError("window too large for exact computation (non-tree ball with > 20 vertices)")
    m = np.ones(g.n)
    m[view.vertex_map] = m_local
    return m


@dataclass(frozen=True)
class Functionals:
    y: float
    mean_y: float
    J: int
    A: int
    F: int


def functionals_JAF(weights: OccupationWeights, x, eta: float, window_m) -> Functionals:
    """``J = 1{y <= -eta}``, ``A = 1{|E_+[y]| >= 2 eta}`` and ``F = J A``.

    ``window_m`` holds the plus-window magnetisations (see
    :func:`plus_window_magnetizations`).
    """
    y = y_weighted_average(weights, x)
    mean_y = y_weighted_average(weights, window_m)
    J = int(y <= -eta)
    A = int(abs(mean_y) >= 2 * eta)
    return Functionals(y, mean_y, J, A, J * A)


@dataclass(frozen=True)
class SmallSetCheck:
    fraction: float
    bound: float
    holds: bool


def u_n_small_check(g: RootedGraph, x, l: float, eta: float, M=None, tol: float = 1e-9,
                    strict: bool = False) -> SmallSetCheck:
    """Fraction of vertices with ``y_i > -eta`` against ``eta/(1 + eta)``.

    ``M`` may carry a precomputed :func:`occupation_matrix`.
    """
    x = np.asarray(x, float)
    if x.sum() < 0:
        raise ValueError("configuration must have non-negative total spin")
    if not eta > 0:
        raise ValueError("eta must be positive")
    y = occupation_apply(g, l, x) if M is None else M @ x
    frac = float(np.mean(y > -eta))
    bound = eta / (1 + eta)
    holds = frac >= bound - tol
    if strict and not holds:
        raise AssertionError(f"fraction {frac} below {bound}")
    return SmallSetCheck(frac, bound, holds)


# ---------------------------------------------------------------------------
# rho on trees


def rho_l(tree: RootedGraph, beta: float, l: float, t_depth: int) -> float:
    """``rho_o^{l, T}`` under the plus measure clamped at depth ``t_depth``.

    The walk runs on the given finite tree and is killed on reaching its last
    level; since that level lies beyond the plus frontier the killed mass
    contributes spin ``+1``.
    """
    order, dist, _ = bfs(tree, tree.root)
    D = int(dist.max())
    if D <= t_depth:
        raise ValueError("tree must extend beyond the plus frontier")
    mags = tree_messages(tree, beta, "plus", depth=t_depth).magnetizations()
    w = occupation_weights(tree, tree.root, l, D - 1)
    return float(w.weights @ mags[w.vertices] + (1.0 - w.total))


def rho_l_regular(k: int, beta: float, l: float, t_depth: int, margin: int = 80) -> float:
    """``rho_o^{l, T}`` on the ``k``-regular tree with plus frontier at ``t_depth``.

    The walk is lumped to its level (birth-death chain: the root moves up at
    rate ``k``, other levels up at ``k - 1`` and down at ``1``) and killed
    ``margin`` levels beyond the frontier, where the return probability is below
    ``(k-1)^-margin``.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    L = t_depth + margin
    up = np.full(L, k - 1.0)
    up[0] = k
    down = np.ones(L)
    rows = np.concatenate([np.arange(L - 1), np.arange(1, L)])
    cols = np.concatenate([np.arange(1, L), np.arange(L - 1)])
    vals = np.concatenate([up[:-1], down[1:]])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(L, L))
    rate = up + np.where(np.arange(L) > 0, down, 0.0)
    start = np.zeros(L)
    start[0] = 1.0
    a = _time_average(A, rate, l, start)
    m = np.ones(L)
    m[: t_depth + 1] = spherical_magnetizations(regular_children(k, t_depth), beta)
    return float(a @ m + (1.0 - a.sum()))


# ---------------------------------------------------------------------------
# exit-time simulation


@dataclass(frozen=True)
class TauSample:
    tau: np.ndarray  # time of the r-th jump
    theta: np.ndarray  # first time at distance > r (inf if not reached before horizon)


def tau_r_simulate(g: RootedGraph, r: int, n_trials: int, rng=None, center=None,
                   horizon: float = math.inf, max_steps: int = 100_000) -> TauSample:
    """Simulate ``tau_r = sum_{k <= r} E_k / deg(Y_{k-1})`` along discrete SRW paths,
    together with the exit time ``theta_r`` from ``B_o(r)`` (``r >= 0``)."""
    if r < 0:
        raise ValueError("r must be non-negative")
    rng = np.random.default_rng(rng)
    o = g.root if center is None else center
    dist = bfs(g, o)[1]
    deg = g.degrees
    pos = np.full(n_trials, o, dtype=np.int64)
    time = np.zeros(n_trials)
    tau = np.full(n_trials, np.nan)
    theta = np.full(n_trials, np.inf)
    active = np.ones(n_trials, dtype=bool)
    if r == 0:
        tau[:] = 0.0
    can_exit = bool(np.any(dist > r))
    for step in range(1, max_steps + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        d = deg[pos[idx]]
        stuck = d == 0
        if np.any(stuck):
            active[idx[stuck]] = False
            if step <= r:
                tau[idx[stuck]] = np.inf
            idx, d = idx[~stuck], d[~stuck]
        time[idx] += rng.standard_exponential(len(idx)) / d
        choice = (rng.random(len(idx)) * d).astype(np.int64)
        pos[idx] = g.indices[g.indptr[pos[idx]] + choice]
        if step == r:
            tau[idx] = time[idx]
        out = dist[pos[idx]] > r
        theta[idx[out]] = time[idx[out]]
        done = out | (time[idx] > horizon)
        if step >= r:
            active[idx[done]] = False
            if not can_exit and math.isinf(horizon):
                break  # the ball is the whole component: no exit
    return TauSample(tau, theta)
