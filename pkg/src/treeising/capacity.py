"""Tree capacities and edge-expansion certificates.

Resistances on a rooted tree are ``R(e) = theta^-|e|`` with ``|e|`` the depth
of the edge's lower endpoint. A flow ``w`` is scored by the largest
resistance-weighted load on a root-to-leaf ray,

    V(w) = max_y sum_{e in y} (w(e) R(e))^2,

and ``capa3`` is the largest strength of a flow with ``V = 1``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import eigsh

from .ensembles import OffspringLaw
from .graph import RootedGraph, bfs, from_parents
from .tree_ising import f_theta

# ---------------------------------------------------------------------------
# S_T(t)


def level_sizes(tree: RootedGraph, t: int | None = None) -> np.ndarray:
    """``|dT(k)|`` for ``k = 1..t``."""
    dist = bfs(tree, tree.root)[1]
    t = int(dist.max()) if t is None else t
    return np.bincount(dist[dist >= 0], minlength=t + 1)[1 : t + 1]


def s_t_profile(sizes, br: float) -> np.ndarray:
    """Partial sums ``S(t) = sum_{k<=t} br^{2k} |dT(k)|^-2`` for ``t = 1..len(sizes)``."""
    sizes = np.asarray(sizes, float)
    k = np.arange(1, len(sizes) + 1)
    with np.errstate(divide="ignore"):
        terms = np.where(sizes > 0, np.exp(2 * k * math.log(br)) / sizes**2, np.inf)
    return np.cumsum(terms)


def prune_T_t(tree: RootedGraph, t: int) -> RootedGraph:
    """``T_t``: union of the root-to-depth-``t`` rays; vertex 0 is the root."""
    order, dist, parent = bfs(tree, tree.root, radius=t)
    keep = np.zeros(tree.n, dtype=bool)
    keep[order[dist[order] == t]] = True
    for v in order[::-1]:
        if keep[v] and parent[v] >= 0:
            keep[parent[v]] = True
    kept = [int(v) for v in order if keep[v]]
    if not kept:
        raise ValueError(f"tree has no ray of length {t}")
    new = {v: k for k, v in enumerate(kept)}
    types = None if tree.types is None else tree.types[kept]
    return from_parents([-1 if parent[v] < 0 else new[int(parent[v])] for v in kept], types)


def s_t_sum(tree: RootedGraph, br: float, t: int, variant: str = "full") -> np.ndarray:
    """Partial sums of ``S_T`` up to ``t``.

    ``variant="full"`` counts all of ``dT(k)``; ``"pruned"`` counts only the
    vertices of ``dT(k)`` that connect to ``dT(t)`` (the levels of ``T_t``).
    """
    if variant == "full":
        return s_t_profile(level_sizes(tree, t), br)
    if variant == "pruned":
        return s_t_profile(level_sizes(prune_T_t(tree, t), t), br)
    raise ValueError(f"unknown variant {variant!r}")


def divergence_slope(partial_sums) -> float:
    """Least-squares slope of ``S(t)`` against ``t`` (positive for linear growth)."""
    s = np.asarray(partial_sums, float)
    t = np.arange(1, len(s) + 1)
    return float(np.polyfit(t, s, 1)[0]) if len(s) > 1 else float(s[0]) if len(s) else 0.0


# ---------------------------------------------------------------------------
# capa3


class _Levels:
    """Level-wise arrays of a tree whose leaves all sit at depth ``t``."""

    def __init__(self, tree: RootedGraph, theta: float):
        order, dist, parent = bfs(tree, tree.root)
        self.n = tree.n
        self.t = int(dist.max())
        self.parent = parent
        self.depth = dist
        self.levels = [order[dist[order] == k] for k in range(self.t + 1)]
        leaves = self.levels[self.t]
        kids = np.bincount(parent[parent >= 0], minlength=tree.n)
        if np.any((kids == 0) & (dist < self.t)):
            raise ValueError("all leaves must sit at the same depth (prune with prune_T_t)")
        self.leaves = leaves
        self.R2 = np.where(dist > 0, theta ** (-2.0 * dist), 0.0)

    def subtree_mass(self, p_leaves: np.ndarray) -> np.ndarray:
        mass = np.zeros(self.n)
        mass[self.leaves] = p_leaves
        for k in range(self.t, 0, -1):
            vs = self.levels[k]
            np.add.at(mass, self.parent[vs], mass[vs])
        return mass

    def eff_resistance(self, r: np.ndarray) -> np.ndarray:
        """Root-to-leaves effective resistance below each vertex (leaves grounded)."""
        Reff = np.zeros(self.n)
        for k in range(self.t, 0, -1):
            vs = self.levels[k]
            tot = r[vs] + Reff[vs]
            with np.errstate(divide="ignore"):
                cond = np.where(tot > 0, 1.0 / np.where(tot > 0, tot, 1.0), np.inf)
            csum = np.zeros(self.n)
            np.add.at(csum, self.parent[vs], cond)
            ps = np.unique(self.parent[vs])
            Reff[ps] = np.where(np.isinf(csum[ps]), 0.0, 1.0 / csum[ps])
        return Reff

    def unit_flow(self, r: np.ndarray, Reff: np.ndarray) -> np.ndarray:
        """Electrical unit current from the root; ``flow[v]`` is on the edge above ``v``."""
        flow = np.zeros(self.n)
        flow[self.levels[0]] = 1.0
        for k in range(1, self.t + 1):
            vs = self.levels[k]
            tot = r[vs] + Reff[vs]
            zero = tot <= 0
            par = self.parent[vs]
            has_zero = np.zeros(self.n, dtype=bool)
            has_zero[par[zero]] = True
            w = np.where(has_zero[par], zero.astype(float), 1.0 / np.where(zero, 1.0, tot))
            wsum = np.zeros(self.n)
            np.add.at(wsum, par, w)
            flow[vs] = flow[par] * w / wsum[par]
        return flow

    def ray_sums(self, flow: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.n)
        for k in range(1, self.t + 1):
            vs = self.levels[k]
            acc[vs] = acc[self.parent[vs]] + flow[vs] ** 2 * self.R2[vs]
        return acc[self.leaves]

    def dual(self, p_leaves):
        r = self.R2 * self.subtree_mass(p_leaves)
        Reff = self.eff_resistance(r)
        return float(Reff[self.levels[0][0]]), r, Reff


@dataclass
class FlowOnTree:
    tree: RootedGraph
    theta: float
    flow: np.ndarray  # flow on the edge above each vertex (root entry = strength)

    @property
    def strength(self) -> float:
        return float(self.flow[self.tree.root])

    def V(self) -> float:
        return float(_Levels(self.tree, self.theta).ray_sums(self.flow).max())

    def conservation_defect(self) -> float:
        lv = _Levels(self.tree, self.theta)
        inflow = np.zeros(self.tree.n)
        nonroot = lv.parent >= 0
        np.add.at(inflow, lv.parent[nonroot], self.flow[nonroot])
        internal = np.bincount(lv.parent[nonroot], minlength=self.tree.n) > 0
        return float(np.abs(inflow[internal] - self.flow[internal]).max(initial=0.0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("parent,child,flow\n")
            lv = _Levels(self.tree, self.theta)
            for v in range(self.tree.n):
                if lv.parent[v] >= 0:
                    fh.write(f"{lv.parent[v]},{v},{self.flow[v]:.17g}\n")


@dataclass
class CapaResult:
    value: float  # strength of the returned feasible flow (a lower bound)
    upper: float  # dual certificate (an upper bound)
    gap: float
    flow: FlowOnTree
    iterations: int
    history: list = field(default_factory=list)


def capa3_solve(tree: RootedGraph, theta: float, tol: float = 1e-3, max_iter: int = 20_000,
                method: str = "mirror") -> CapaResult:
    """``capa3`` by first-order ascent over probability measures ``p`` on rays.

    For ray weights ``p`` the dual value ``D(p)`` is the effective resistance
    from the root to the leaves with edge resistances ``R(e)^2 p(e)``
    (``p(e)`` the ray mass through ``e``). Its minimising unit current ``w`` is
    a feasible primal point, the ray loads of ``w`` are the gradient of ``D``,
    and ``capa3`` lies in ``[V(w)^-1/2, D(p)^-1/2]``. Iteration stops once this
    bracket is narrower than ``tol``.

    ``method`` picks the update of ``p``: ``"mirror"`` (multiplicative weights,
    ``p_y <- p_y (load_y / V)^eta``), ``"pairwise"`` (conditional gradient moving
    mass from the least to the most loaded active ray) or ``"fw"`` (plain
    conditional gradient towards the most loaded ray). Step sizes come from an
    exact line search on ``D``.
    """
    if method not in ("mirror", "pairwise", "fw"):
        raise ValueError(f"unknown method {method!r}")
    lv = _Levels(tree, theta)
    m = len(lv.leaves)
    p = np.full(m, 1.0 / m)
    history = []
    best_lo, best_w, upper = 0.0, None, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        D, r, Reff = lv.dual(p)
        w = lv.unit_flow(r, Reff)
        loads = lv.ray_sums(w)
        V = float(loads.max())
        if V ** -0.5 > best_lo:
            best_lo, best_w = V ** -0.5, w
        if D > 0:
            upper = min(upper, D ** -0.5)
        history.append((best_lo, upper))
        if upper - best_lo <= tol:
            break
        if method == "mirror":
            logr = np.log(np.maximum(loads, 1e-300) / V)

            def move(g):
                q = p * np.exp(g * logr)
                return q / q.sum()

            gmax = 50.0
        else:
            s = int(np.argmax(loads))
            direction = np.zeros(m)
            direction[s] = 1.0
            if method == "pairwise":
                active = np.flatnonzero(p > 0)
                a = int(active[np.argmin(loads[active])])
                direction[a] -= 1.0
                gmax = float(p[a])
            else:
                direction -= p
                gmax = 1.0

            def move(g):
                q = np.maximum(p + g * direction, 0.0)
                return q / q.sum()

        res = minimize_scalar(lambda g: -lv.dual(move(g))[0], bounds=(0.0, gmax),
                              method="bounded", options={"xatol": 1e-10 * gmax})
        if -res.fun <= D:
            break  # no ascent possible along this direction
        p = move(float(res.x))
    flow = FlowOnTree(tree, theta, best_w * best_lo)
    return CapaResult(best_lo, upper, upper - best_lo, flow, it, history)


def capa3_exact(tree: RootedGraph, theta: float) -> float:
    """``capa3`` of a tree with all leaves at one depth by the series recursion
    ``C_v = sum_w (R(vw)^2 + C_w^-2)^-1/2`` (``C_leaf = inf``)."""
    lv = _Levels(tree, theta)
    C = np.full(tree.n, np.inf)
    for k in range(lv.t, 0, -1):
        vs = lv.levels[k]
        term = 1.0 / np.sqrt(lv.R2[vs] + np.where(np.isinf(C[vs]), 0.0, C[vs] ** -2.0))
        acc = np.zeros(tree.n)
        np.add.at(acc, lv.parent[vs], term)
        ps = np.unique(lv.parent[vs])
        C[ps] = acc[ps]
    return float(C[tree.root]) if lv.t > 0 else math.inf


def capa3_bound(tree_t: RootedGraph, theta: float) -> float:
    """``S_{T_t}^-1/2`` with ``S_{T_t} = sum_k theta^-2k |dT_t(k)|^-2``."""
    sizes = level_sizes(tree_t)
    return float(s_t_profile(sizes, 1.0 / theta)[-1] ** -0.5)


# ---------------------------------------------------------------------------
# f_theta envelope


def f_envelope_ratio(theta: float, kappa: float, h) -> np.ndarray:
    """``f(h) sqrt(1 + (kappa h)^2) / (theta h) - 1`` on the grid ``h > 0``."""
    h = np.asarray(h, float)
    beta = math.atanh(theta)
    return f_theta(h, beta) * np.sqrt(1.0 + (kappa * h) ** 2) / (theta * h) - 1.0


def f_envelope_check(theta: float, kappa: float, h_grid) -> float:
    """Largest violation of ``f(h) <= theta h / sqrt(1 + (kappa h)^2)`` on the grid
    (non-positive means the envelope holds)."""
    return float(np.max(f_envelope_ratio(theta, kappa, h_grid)))


def max_admissible_kappa(theta: float, h_grid) -> float:
    """Largest ``kappa`` for which the envelope holds at every grid point."""
    h = np.asarray(h_grid, float)
    f = f_theta(h, math.atanh(theta))
    return float(np.min(np.sqrt(np.maximum((theta * h / f) ** 2 - 1.0, 0.0)) / h))


# ---------------------------------------------------------------------------
# expansion


@dataclass
class ExpansionReport:
    method: str
    delta1: float
    delta2: float
    value: float
    witness: list | None = None
    n: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def _cut_sizes(edges: np.ndarray, masks: np.ndarray) -> np.ndarray:
    cut = np.zeros(len(masks), dtype=np.int64)
    for i, j in edges:
        if i != j:
            cut += ((masks >> i) ^ (masks >> j)) & 1
    return cut


def expansion_exact(g: RootedGraph, delta1: float, delta2: float, chunk: int = 1 << 20,
                    max_n: int = 24) -> ExpansionReport:
    """Exact ``min |dS|/|S|`` over ``delta1 n <= |S| <= delta2 n`` by enumeration."""
    n = g.n
    if n > max_n:
        raise ValueError(f"exhaustive expansion limited to n <= {max_n}")
    lo, hi = math.ceil(delta1 * n - 1e-12), math.floor(delta2 * n + 1e-12)
    lo = max(lo, 1)
    best, witness = math.inf, None
    total = 1 << n
    for start in range(1, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        size = np.zeros(len(masks), dtype=np.int64)
        for k in range(n):
            size += (masks >> k) & 1
        ok = (size >= lo) & (size <= hi)
        if not np.any(ok):
            continue
        masks, size = masks[ok], size[ok]
        ratio = _cut_sizes(g.edges, masks) / size
        k = int(np.argmin(ratio))
        if ratio[k] < best:
            best = float(ratio[k])
            witness = [v for v in range(n) if (int(masks[k]) >> v) & 1]
    return ExpansionReport("exact", delta1, delta2, best, witness, n)


def fiedler_value(g: RootedGraph, dense_max: int = 400) -> float:
    """Second-smallest Laplacian eigenvalue (dense for small graphs, Lanczos otherwise)."""
    if g.n < 2:
        return 0.0
    if g.n <= dense_max:
        return float(np.linalg.eigvalsh(g.laplacian())[1])
    from scipy import sparse

    A = sparse.csr_matrix((np.ones(len(g.indices)), g.indices, g.indptr), shape=(g.n, g.n))
    L = sparse.diags(np.asarray(A.sum(axis=1)).ravel()) - A
    vals = eigsh(L.astype(float), k=2, sigma=-1e-3, which="LM", return_eigenvectors=False)
    return float(np.sort(vals)[1])


def expansion_spectral(g: RootedGraph, delta1: float = 0.0, delta2: float = 0.5) -> ExpansionReport:
    """Certified lower bound ``lambda_2 (1 - delta2)`` on ``|dS|/|S|`` for ``|S| <= delta2 n``."""
    if not g.is_connected():
        return ExpansionReport("spectral", delta1, delta2, 0.0, None, g.n)
    lam2 = fiedler_value(g)
    return ExpansionReport("spectral", delta1, delta2, max(lam2, 0.0) * (1 - delta2), None, g.n)


# ---------------------------------------------------------------------------
# entropy predictor


def H(p):
    """Binary entropy in nats; ``H(0) = H(1) = 0``."""
    p = np.asarray(p, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.where(p > 0, p * np.log(p), 0.0) - np.where(p < 1, (1 - p) * np.log1p(-p), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EntropyRate:
    N: float
    Q: float
    bound: float  # -(1/6) sum_{i,j} a_ij H(d_ij / a_ij)
    eps_tight: float | None = None
    eps_loose: float | None = None

    @property
    def total(self) -> float:
        return self.N + self.Q


def _check_support(law: OffspringLaw):
    for s, p in zip(law.support, law.probs):
        if np.any((s.sum(axis=1) <= 2) & (p > 0)):
            raise ValueError("offspring support must have total degree >= 3")


def _hat(law: OffspringLaw, x) -> np.ndarray:
    """``x_hat[i, j] = sum_k k_j x[i][k]``."""
    return np.stack([np.asarray(xi, float) @ s for xi, s in zip(x, law.support)])


def _ratio(num, den):
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def entropy_predictor(law: OffspringLaw, delta, eps: float = 0.0) -> EntropyRate:
    """Exponential rate terms for a vertex set with composition ``delta``.

    ``delta[i][k]`` is the density of type-``i`` vertices with offspring vector
    ``support[i][k]`` in the set (``0 <= delta <= theta(i) P_i``). The
    self-matching term sums over ordered type pairs with weight ``1/2``.
    The ``eps`` corrections are available for single-type laws only.
    """
    _check_support(law)
    alpha = [law.theta[i] * law.probs[i] for i in range(law.num_types)]
    delta = [np.asarray(d, float) for d in delta]
    for a, d in zip(alpha, delta):
        if np.any(d < -1e-15) or np.any(d > a + 1e-15):
            raise ValueError("need 0 <= delta <= alpha componentwise")
    N = float(sum(np.sum(a * H(_ratio(d, a))) for a, d in zip(alpha, delta)))
    ah, dh = _hat(law, alpha), _hat(law, delta)
    terms = ah * H(_ratio(dh, ah))
    Q = -0.5 * float(terms.sum())
    bound = -float(terms.sum()) / 6.0
    tight = loose = None
    if law.num_types == 1:
        a, d = float(ah[0, 0]), float(dh[0, 0])
        tight, loose = eps_bounds(a, d, eps)
    elif eps:
        raise ValueError("eps corrections are implemented for single-type laws only")
    return EntropyRate(N, Q, bound, tight, loose)


def eps_bounds(a_hat: float, d_hat: float, eps: float) -> tuple[float, float]:
    """Single-type bounds with ``eps n`` crossing edges: the two-term form and
    its simplified upper bound ``-(a/6) H(d/a) + (a/2) H(2 eps/a)``."""
    base = -a_hat / 6.0 * H(d_hat / a_hat)
    if eps == 0:
        return base, base
    rest = a_hat - d_hat
    tight = base
    tight += 0.5 * d_hat * H(min(eps / d_hat, 1.0)) if d_hat > 0 else 0.0
    tight += 0.5 * rest * H(min(eps / rest, 1.0)) if rest > 0 else 0.0
    loose = base + 0.5 * a_hat * H(min(2 * eps / a_hat, 1.0))
    return float(tight), float(loose)


def delta_grid(law: OffspringLaw, delta0: float, delta_max: float = 0.5, points: int = 41):
    """Compositions with every coordinate on a ``points``-grid of ``[0, alpha]`` and
    total density in ``[delta0, delta_max]``."""
    alpha = [law.theta[i] * law.probs[i] for i in range(law.num_types)]
    flat = np.concatenate(alpha)
    u = np.linspace(0.0, 1.0, points)
    for combo in itertools.product(u, repeat=len(flat)):
        d = np.asarray(combo) * flat
        if delta0 - 1e-12 <= d.sum() <= delta_max + 1e-12:
            out, pos = [], 0
            for a in alpha:
                out.append(d[pos : pos + len(a)])
                pos += len(a)
            yield out


def entropy_sup(law: OffspringLaw, delta0: float, eps: float = 0.0, points: int = 41,
                which: str = "bound") -> float:
    """Supremum over the composition grid of the chosen rate (``"total"`` for
    ``N + Q``, ``"bound"``, ``"eps_tight"`` or ``"eps_loose"``)."""
    best = -math.inf
    for d in delta_grid(law, delta0, 0.5, points):
        r = entropy_predictor(law, d, eps)
        val = r.total if which == "total" else getattr(r, which)
        best = max(best, val)
    return best


def eps0_estimate(law: OffspringLaw, delta0: float, which: str = "eps_loose",
                  points: int = 41) -> float:
    """Smallest ``eps`` at which the sup of the single-type bound reaches zero."""
    if law.num_types != 1:
        raise ValueError("eps0 is available for single-type laws only")
    a_hat = float(_hat(law, [law.probs[0]])[0, 0])
    hi = a_hat / 4.0

    def g(e):
        return entropy_sup(law, delta0, e, points, which)

    if g(hi) < 0:
        return hi
    return float(brentq(g, 1e-15, hi, xtol=1e-12))
