"""Exact Ising computations on finite trees and tiny graphs.

Cavity messages use ``h_{v->u} = B_v + sum_{w in dv \\ u} f(h_{w->v})`` with
``f(h) = atanh(tanh(beta) tanh(h))``. Clamped vertices carry field ``+inf``
(``f(+inf) = beta``), so infinite values never propagate past one step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .graph import RootedGraph, bfs, from_parents

MAX_ENUM = 20

f_theta = _backend.f_theta


def pair_correlation(h1, h2, beta):
    """``<x1 x2>`` for ``exp(beta x1 x2 + h1 x1 + h2 x2)``, i.e. ``F(theta, m1 m2)``."""
    theta = math.tanh(beta)
    r = np.tanh(h1) * np.tanh(h2)
    return (theta + r) / (1.0 + theta * r)


def edge_corr_formula(theta, r):
    """``F(theta, r) = (theta + r)/(1 + theta r)``."""
    return (theta + r) / (1.0 + theta * r)


# ---------------------------------------------------------------------------
# brute force


@dataclass(frozen=True, eq=False)
class IsingSpec:
    graph: RootedGraph
    beta: float
    fields: np.ndarray | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("only ferromagnetic beta >= 0 is supported")
        B = np.zeros(self.graph.n) if self.fields is None else np.asarray(self.fields, float)
        if B.shape == ():
            B = np.full(self.graph.n, float(B))
        if B.shape != (self.graph.n,):
            raise ValueError("fields must have one entry per vertex")
        object.__setattr__(self, "fields", B)


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    spec: IsingSpec
    configs: np.ndarray  # (2^f, n) int8, clamped vertices fixed
    probs: np.ndarray
    log_z: float  # log partition function over the free vertices
    magnetizations: np.ndarray
    edge_correlations: np.ndarray  # aligned with spec.graph.edges

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    def expect(self, values) -> float:
        return float(self.probs @ np.asarray(values, dtype=float))

    def correlation(self, i: int, j: int) -> float:
        x = self.configs
        return float(self.probs @ (x[:, i].astype(float) * x[:, j]))

    def covariance(self, i: int, j: int) -> float:
        return self.correlation(i, j) - self.magnetizations[i] * self.magnetizations[j]


def brute_force_measure(spec: IsingSpec) -> BruteForceResult:
    """Exact enumeration of ``exp(beta sum_E x_i x_j + sum_i B_i x_i)``.

    Vertices with infinite field are clamped to its sign and excluded from the
    enumeration (and from ``log_z``).
    """
    g, B = spec.graph, spec.fields
    clamped = np.isinf(B)
    free = np.flatnonzero(~clamped)
    if len(free) > MAX_ENUM:
        raise ValueError(f"{len(free)} free spins exceed the enumeration limit {MAX_ENUM}")
    idx = np.arange(2 ** len(free), dtype=np.int64)
    x = np.empty((len(idx), g.n), dtype=np.int8)
    x[:, clamped] = np.sign(B[clamped]).astype(np.int8)
    for k, v in enumerate(free):
        x[:, v] = 1 - 2 * ((idx >> k) & 1)
    energy = np.zeros(len(idx))
    for i, j in g.edges:
        energy += spec.beta * (x[:, i] * x[:, j])
    for v in free:
        if B[v] != 0:
            energy += B[v] * x[:, v]
    log_z = float(logsumexp(energy))
    probs = np.exp(energy - log_z)
    mags = probs @ x
    corr = np.array([probs @ (x[:, i] * x[:, j]).astype(float) for i, j in g.edges])
    return BruteForceResult(spec, x, probs, log_z, mags, corr)


# ---------------------------------------------------------------------------
# message passing on trees


@dataclass(frozen=True, eq=False)
class MessageField:
    """Directional cavity fields of a rooted tree.

    ``h_up[v]`` is ``h_{v -> parent(v)}`` and ``h_down[v]`` is
    ``h_{parent(v) -> v}``; entries at the root are unused (``h_up[root]`` holds
    the root's total field).
    """

    tree: RootedGraph
    beta: float
    fields: np.ndarray
    order: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    h_up: np.ndarray
    h_down: np.ndarray | None
    sign: int = 1  # -1 for minus boundary (computed by global flip)

    @property
    def root_field(self) -> float:
        return self.sign * float(self.h_up[self.tree.root])

    @property
    def root_magnetization(self) -> float:
        return self.sign * float(np.tanh(self.h_up[self.tree.root]))

    def total_fields(self) -> np.ndarray:
        if self.h_down is None:
            raise ValueError("downward sweep not computed")
        clamped = np.isinf(self.fields)
        with np.errstate(invalid="ignore"):
            acc = self.h_up - self.fields
        H = self.h_up.copy()
        nonroot = (self.parent >= 0) & ~clamped
        H[nonroot] = self.fields[nonroot] + acc[nonroot] + f_theta(self.h_down[nonroot], self.beta)
        return H

    def magnetizations(self) -> np.ndarray:
        return self.sign * np.tanh(self.total_fields())

    def edge_correlation(self, v: int) -> float:
        """Correlation across the edge between ``v`` and its parent."""
        return float(pair_correlation(self.h_up[v], self.h_down[v], self.beta))

    def edge_correlations(self) -> np.ndarray:
        """Correlations aligned with ``tree.edges``."""
        out = np.empty(self.tree.m)
        for k, (a, b) in enumerate(self.tree.edges):
            child = b if self.parent[b] == a else a
            out[k] = self.edge_correlation(child)
        return out


def tree_structure(tree: RootedGraph):
    if not tree.is_tree():
        raise ValueError("message passing requires a tree")
    order, depth, parent = bfs(tree, tree.root)
    return order, parent, depth


def boundary_fields(tree: RootedGraph, boundary: str = "free", fields=None, depth=None,
                    structure=None):
    """Per-vertex fields with frontier vertices at ``depth`` clamped for ``plus``."""
    order, parent, dist = structure or tree_structure(tree)
    B = np.zeros(tree.n) if fields is None else np.array(np.broadcast_to(fields, tree.n), float)
    if boundary in ("plus", "minus"):
        t = int(dist.max()) if depth is None else depth
        B[dist >= t] = np.inf
    elif boundary != "free":
        raise ValueError(f"unknown boundary {boundary!r}")
    return B


def tree_messages(tree: RootedGraph, beta: float, boundary: str = "free", fields=None,
                  depth: int | None = None, both: bool = True) -> MessageField:
    """Cavity messages on a tree.

    ``boundary`` is ``"free"``, ``"plus"`` or ``"minus"``; plus/minus clamp all
    vertices at distance ``depth`` (default: the tree's depth) from the root.
    The minus boundary is obtained from the plus computation with negated
    fields by global spin-flip symmetry.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    structure = tree_structure(tree)
    order, parent, dist = structure
    sign = 1
    if boundary == "minus":
        sign = -1
        fields = None if fields is None else -np.asarray(fields, float)
    B = boundary_fields(tree, "plus" if boundary == "minus" else boundary, fields, depth,
                        structure)
    h_up, acc = _backend.bp_upward(order, parent, B, float(beta))
    h_down = _backend.bp_downward(order, parent, B, float(beta), h_up, acc) if both else None
    return MessageField(tree, beta, B, order, parent, dist, h_up, h_down, sign)


def truncate(tree: RootedGraph, depth: int) -> RootedGraph:
    """``T(depth)``: the tree restricted to vertices within ``depth`` of the root."""
    order, dist, parent = bfs(tree, tree.root, radius=depth)
    keep = order
    new = {int(v): k for k, v in enumerate(keep)}
    par = [-1 if parent[v] < 0 else new[int(parent[v])] for v in keep]
    types = None if tree.types is None else tree.types[keep]
    return from_parents(par, types)


def root_magnetization(tree: RootedGraph, beta: float, H, depth: int | None = None) -> float:
    """Root magnetisation of the Ising model on ``T(depth)`` with field ``H_v`` on
    the frontier ``dT(depth)`` and zero field elsewhere."""
    order, parent, dist = tree_structure(tree)
    t = int(dist.max()) if depth is None else depth
    H = np.broadcast_to(np.asarray(H, float), tree.n)
    if np.any(H[dist == t] < 0):
        raise ValueError("frontier fields must be non-negative")
    B = np.where(dist == t, H, 0.0)
    if t < dist.max():
        B = B.copy()
        B[dist > t] = 0.0
        keep = dist <= t
        # vertices deeper than the frontier are dropped by zeroing their messages
        parent = np.where(keep, parent, -1)
        order = order[keep[order]]
    h_up, _ = _backend.bp_upward(order, parent, B, float(beta))
    return float(np.tanh(h_up[tree.root]))


# ---------------------------------------------------------------------------
# spherically symmetric trees


def spherical_fields(children, beta: float, frontier=math.inf, field: float = 0.0) -> np.ndarray:
    """Upward fields on a spherically symmetric tree.

    ``children[d]`` is the number of children of every vertex at level ``d``
    (``d = 0..L-1``); level ``L`` vertices carry ``frontier``. Returns
    ``h[0..L]`` with ``h[0]`` the root's total field.
    """
    L = len(children)
    h = np.empty(L + 1)
    h[L] = frontier
    for d in range(L - 1, -1, -1):
        h[d] = field + children[d] * f_theta(h[d + 1], beta)
    return h


def spherical_magnetizations(children, beta: float, frontier=math.inf, field: float = 0.0):
    """Per-level magnetisations ``m[0..L]`` for a spherically symmetric tree."""
    h = spherical_fields(children, beta, frontier, field)
    L = len(children)
    m = np.empty(L + 1)
    m[0] = math.tanh(h[0])
    down = None
    for d in range(1, L + 1):
        fd = f_theta(h[d], beta)
        # message from the level d-1 parent to a level d child
        down = field + (children[d - 1] - 1) * fd + (0.0 if down is None else f_theta(down, beta))
        if math.isinf(h[d]):
            m[d] = 1.0
        else:
            m[d] = math.tanh(h[d] + f_theta(down, beta))
    return m


def regular_children(k: int, depth: int) -> list[int]:
    return [k] + [k - 1] * (depth - 1) if depth > 0 else []


def regular_root_magnetization(k: int, beta: float, depth: int, branch: bool = False) -> float:
    """Plus-boundary root magnetisation of the depth-``depth`` ``k``-regular tree.

    With ``branch=True`` the root has ``k - 1`` children (a cavity branch).
    """
    children = [k - 1] * depth if branch else regular_children(k, depth)
    return math.tanh(spherical_fields(children, beta)[0])


# ---------------------------------------------------------------------------
# checks


def _conditional_table(x, probs, rows, cols):
    """Joint table ``P[y, x_W]`` from full-configuration probabilities."""
    bits = (x > 0).astype(np.int64)
    yi = bits[:, rows] @ (1 << np.arange(len(rows))) if len(rows) else np.zeros(len(x), np.int64)
    xi = bits[:, cols] @ (1 << np.arange(len(cols)))
    table = np.zeros((2 ** len(rows), 2 ** len(cols)))
    np.add.at(table, (yi, xi), probs)
    return table


def dlr_window_check(spec: IsingSpec, t: int, probs=None) -> float:
    """Max discrepancy between the conditional law of ``x`` on ``B_o(t)`` given
    the layer ``B_o(t+1) \\ B_o(t)`` and the finite-window Ising law.

    ``probs`` optionally replaces the exact measure (aligned with the
    enumeration order of :func:`brute_force_measure`).
    """
    res = brute_force_measure(spec)
    p = res.probs if probs is None else np.asarray(probs, float)
    g, x = spec.graph, res.configs
    dist = bfs(g, g.root)[1]
    inside = np.flatnonzero((dist >= 0) & (dist <= t))
    layer = np.flatnonzero(dist == t + 1)
    table = _conditional_table(x, p, layer, inside)
    inside_set = set(inside.tolist())
    layer_pos = {int(v): k for k, v in enumerate(layer)}
    in_pos = {int(v): k for k, v in enumerate(inside)}
    # bit k of an index is 1 for spin +1, matching _conditional_table
    W = np.array([[2 * ((c >> k) & 1) - 1 for k in range(len(inside))]
                  for c in range(2 ** len(inside))], dtype=float)
    Y = np.array([[2 * ((c >> k) & 1) - 1 for k in range(len(layer))]
                  for c in range(2 ** len(layer))], dtype=float).reshape(2 ** len(layer), -1)
    logw = np.zeros((len(Y), len(W)))
    for i, j in g.edges:
        i, j = int(i), int(j)
        if i in inside_set and j in inside_set:
            logw += spec.beta * (W[:, in_pos[i]] * W[:, in_pos[j]])[None, :]
        elif i in inside_set and j in layer_pos:
            logw += spec.beta * np.outer(Y[:, layer_pos[j]], W[:, in_pos[i]])
        elif j in inside_set and i in layer_pos:
            logw += spec.beta * np.outer(Y[:, layer_pos[i]], W[:, in_pos[j]])
    B = spec.fields
    for v in inside:
        if np.isinf(B[v]):
            bad = W[:, in_pos[int(v)]] != np.sign(B[v])
            logw[:, bad] = -np.inf
        elif B[v] != 0:
            logw += B[v] * W[:, in_pos[int(v)]][None, :]
    window = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    worst = 0.0
    for y in range(len(Y)):
        mass = table[y].sum()
        if mass <= 1e-300:
            continue
        worst = max(worst, float(np.abs(table[y] / mass - window[y]).max()))
    return worst


@dataclass(frozen=True)
class CovarianceDecay:
    max_ratio: float  # max Cov(x_o, x_j)/tanh(beta)^|j| over j with positive bound
    min_cov: float
    max_excess: float  # max Cov(x_o, x_j) - tanh(beta)^|j|
    covariances: np.ndarray
    distances: np.ndarray


def covariance_decay_check(tree: RootedGraph, beta: float, depth: int | None = None,
                           boundary: str = "plus") -> CovarianceDecay:
    """Exact ``Cov(x_o, x_j)`` against the bound ``tanh(beta)^|j|``."""
    structure = tree_structure(tree)
    dist = structure[2]
    B = boundary_fields(tree, boundary, None, depth, structure)
    res = brute_force_measure(IsingSpec(tree, beta, B))
    o = tree.root
    free = np.flatnonzero(~np.isinf(B))
    cov = np.array([res.covariance(o, int(j)) for j in free])
    gamma = math.tanh(beta) ** dist[free].astype(float)
    pos = gamma > 0
    ratio = float(np.max(cov[pos] / gamma[pos])) if np.any(pos) else 0.0
    return CovarianceDecay(ratio, float(cov.min()), float(np.max(cov - gamma)), cov, dist[free])


def ghs_concavity_check(tree: RootedGraph, beta: float, H, lambdas) -> float:
    """Largest second difference of ``lambda -> m(lambda H)`` on a uniform grid."""
    lambdas = np.asarray(lambdas, float)
    m = np.array([root_magnetization(tree, beta, lam * np.asarray(H, float)) for lam in lambdas])
    if len(m) < 3:
        return 0.0
    return float(np.max(m[:-2] - 2 * m[1:-1] + m[2:]))


def plus_cavity_fields(tree: RootedGraph, beta: float) -> np.ndarray:
    """``h^beta_v``: plus-boundary field of the subtree hanging below each vertex,
    clamped at the tree's maximal depth."""
    msg = tree_messages(tree, beta, "plus", both=False)
    return msg.h_up


def h_cont_gap(tree: RootedGraph, beta0: float, beta: float, ell: int) -> float:
    """``ell [m_ell({h^beta_v}) - m_ell({h^beta0_v})]`` at inverse temperature ``beta``.

    Frontier fields are the plus-boundary subtree fields at ``beta`` and
    ``beta0`` clamped at the tree's full depth.
    """
    order, parent, dist = tree_structure(tree)
    interior = dist < dist.max()
    d_star = int(tree.degrees[interior & (np.arange(tree.n) != tree.root)].min(initial=tree.degrees[tree.root]))
    d_star = min(d_star, int(tree.degrees[tree.root]))
    if (d_star - 1) * math.tanh(beta0) <= 1:
        raise ValueError(f"beta0={beta0} is below the threshold for minimum degree {d_star}")
    h_hi = plus_cavity_fields(tree, beta)
    h_lo = plus_cavity_fields(tree, beta0)
    m_hi = root_magnetization(tree, beta, h_hi, depth=ell)
    m_lo = root_magnetization(tree, beta, h_lo, depth=ell)
    return ell * (m_hi - m_lo)


def h_cont_gap_regular(k: int, beta0: float, beta: float, ell: int) -> float:
    """:func:`h_cont_gap` on the infinite ``k``-regular tree (exact fixed-point fields)."""
    from .limits import regular_fixed_point

    if (k - 1) * math.tanh(beta0) <= 1:
        raise ValueError(f"beta0={beta0} is below the threshold for degree {k}")
    h_hi = regular_fixed_point(k, beta).h_star
    h_lo = regular_fixed_point(k, beta0).h_star
    children = regular_children(k, ell)
    m_hi = math.tanh(spherical_fields(children, beta, h_hi)[0])
    m_lo = math.tanh(spherical_fields(children, beta, h_lo)[0])
    return ell * (m_hi - m_lo)
