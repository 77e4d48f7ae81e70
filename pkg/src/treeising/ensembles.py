"""Configuration-model graphs, unimodular (multi-type) Galton-Watson trees and
their analytic quantities (size-biased kernels, mean matrices, branching
numbers, critical inverse temperatures).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .graph import RootedGraph, from_edges, from_parents

BALANCE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Per-type offspring laws ``P_i`` over count vectors ``k`` in ``Z_>=^|Q|``.

    ``support[i]`` is an ``(s_i, |Q|)`` integer array of offspring vectors and
    ``probs[i]`` the matching probabilities.
    """

    Q: tuple
    theta: np.ndarray
    support: tuple
    probs: tuple

    def __post_init__(self):
        q = len(self.Q)
        theta = np.asarray(self.theta, dtype=float)
        support = tuple(np.asarray(s, dtype=np.int64).reshape(-1, q) for s in self.support)
        probs = tuple(np.asarray(p, dtype=float) for p in self.probs)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if theta.shape != (q,) or len(support) != q or len(probs) != q:
            raise ValueError("theta, support and probs must have one entry per type")
        if np.any(theta <= 0) or abs(theta.sum() - 1) > 1e-12:
            raise ValueError("theta must be a strictly positive probability vector")
        for i in range(q):
            if len(support[i]) != len(probs[i]):
                raise ValueError(f"type {self.Q[i]}: support and probs differ in length")
            if np.any(support[i] < 0) or np.any(probs[i] < 0):
                raise ValueError(f"type {self.Q[i]}: negative offspring count or probability")
            if abs(probs[i].sum() - 1) > 1e-12:
                raise ValueError(f"type {self.Q[i]}: probabilities sum to {probs[i].sum()}")
        imbalance = self.balance_defect()
        if imbalance > BALANCE_TOL * max(1.0, float(self.mean_matrix().max(initial=0))):
            raise ValueError(f"balance condition violated by {imbalance:.3g}")

    @property
    def num_types(self) -> int:
        return len(self.Q)

    def mean_matrix(self) -> np.ndarray:
        """``A[i, j] = sum_k P_i(k) k_j``."""
        return np.stack([p @ s for s, p in zip(self.support, self.probs)])

    def balance_defect(self) -> float:
        A = self.theta[:, None] * self.mean_matrix()
        return float(np.abs(A - A.T).max(initial=0.0))

    def is_nonsingular(self) -> bool:
        kernel = size_bias(self)
        for (i, j), (ks, ps) in kernel.rho.items():
            if np.any((ps > 0) & (ks.sum(axis=1) != 1)):
                return True
        return False

    def min_degree(self) -> int:
        return int(min(s[p > 0].sum(axis=1).min() for s, p in zip(self.support, self.probs)))

    def is_deterministic(self) -> bool:
        return self.num_types == 1 and np.count_nonzero(self.probs[0]) == 1

    def mean_degree(self) -> float:
        return float(self.theta @ self.mean_matrix().sum(axis=1))

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "Q": list(self.Q),
            "theta": self.theta.tolist(),
            "P": {
                str(q): [[s.tolist(), float(p)] for s, p in zip(self.support[i], self.probs[i])]
                for i, q in enumerate(self.Q)
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringLaw":
        Q = tuple(d["Q"])
        support, probs = [], []
        for q in Q:
            rows = d["P"][str(q)]
            support.append([r[0] if isinstance(r[0], list) else [r[0]] for r in rows])
            probs.append([r[1] for r in rows])
        return cls(Q, d["theta"], tuple(support), tuple(probs))

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "OffspringLaw":
        text = Path(source).read_text() if Path(str(source)).exists() else source
        return cls.from_dict(json.loads(text))

    # -- named laws --------------------------------------------------------

    @classmethod
    def degree_law(cls, pmf: dict) -> "OffspringLaw":
        """Single-type law from ``{degree: probability}``."""
        ks = sorted(pmf)
        return cls((0,), [1.0], ([[k] for k in ks],), ([pmf[k] for k in ks],))

    @classmethod
    def regular(cls, d: int) -> "OffspringLaw":
        return cls.degree_law({d: 1.0})

    @classmethod
    def poisson(cls, mean: float, tail: float = 1e-8) -> "OffspringLaw":
        pmf = truncated_poisson(mean, tail)
        return cls.degree_law(dict(enumerate(pmf)))

    @classmethod
    def q_partite(cls, q: int, alpha: float, tail: float = 1e-8) -> "OffspringLaw":
        """Random ``q``-partite recipe: ``P_i(k) = prod_{l != i} Poisson(2 alpha q/(q-1))(k_l)``."""
        if q < 2:
            raise ValueError("q-partite ensembles need q >= 2")
        pmf = truncated_poisson(2 * alpha * q / (q - 1), tail)
        kmax = len(pmf)
        grids = np.stack(np.meshgrid(*[np.arange(kmax)] * (q - 1), indexing="ij"), -1)
        grids = grids.reshape(-1, q - 1)
        weights = np.prod(pmf[grids], axis=1)
        support, probs = [], []
        for i in range(q):
            ks = np.zeros((len(grids), q), dtype=np.int64)
            ks[:, [j for j in range(q) if j != i]] = grids
            support.append(ks)
            probs.append(weights / weights.sum())
        return cls(tuple(range(q)), np.full(q, 1.0 / q), tuple(support), tuple(probs))


def truncated_poisson(mean: float, tail: float = 1e-8) -> np.ndarray:
    """Poisson pmf on ``0..k_max`` with ``P(K > k_max) < tail``, renormalised."""
    kmax = int(stats.poisson.isf(tail, mean)) + 1
    while stats.poisson.sf(kmax, mean) >= tail:
        kmax += 1
    pmf = stats.poisson.pmf(np.arange(kmax + 1), mean)
    return pmf / pmf.sum()


BUILTIN_LAWS = {
    "P3": lambda: OffspringLaw.regular(3),
    "P4": lambda: OffspringLaw.regular(4),
    "P34": lambda: OffspringLaw.degree_law({3: 0.5, 4: 0.5}),
}


def load_law(spec: str) -> OffspringLaw:
    """Built-in name (``P3``, ``P34``, ...) or path to a JSON law."""
    if spec in BUILTIN_LAWS:
        return BUILTIN_LAWS[spec]()
    return OffspringLaw.from_json(spec)


# ---------------------------------------------------------------------------
# size-biased kernel


@dataclass(frozen=True, eq=False)
class SizeBiasedKernel:
    law: OffspringLaw
    pairs: tuple  # Q_A as (i, j) index pairs
    rho: dict  # (i, j) -> (support, probs)
    mean_matrix: np.ndarray  # A_rho over pairs


def size_bias(law: OffspringLaw, pairs=None) -> SizeBiasedKernel:
    """``rho_{i,j}(k) = P_i(k + e_j)(k_j + 1)/A(i, j)`` on ``Q_A = {A(i,j) > 0}``."""
    A = law.mean_matrix()
    q = law.num_types
    if pairs is None:
        pairs = [(i, j) for i in range(q) for j in range(q) if A[i, j] > 0]
    rho = {}
    for i, j in pairs:
        if not A[i, j] > 0:
            raise ValueError(f"A({law.Q[i]},{law.Q[j]}) = 0: size-biased kernel undefined")
        ks, ps = law.support[i], law.probs[i]
        keep = (ks[:, j] >= 1) & (ps > 0)
        shifted = ks[keep].copy()
        shifted[:, j] -= 1
        rho[(i, j)] = (shifted, ps[keep] * ks[keep, j] / A[i, j])
    index = {pair: a for a, pair in enumerate(pairs)}
    M = np.zeros((len(pairs), len(pairs)))
    for (i1, j1), (ks, ps) in rho.items():
        child_means = ps @ ks
        for i2 in range(q):
            b = index.get((i2, i1))
            if b is not None:
                M[index[(i1, j1)], b] = child_means[i2]
    return SizeBiasedKernel(law, tuple(pairs), rho, M)


def is_positive_regular(M: np.ndarray) -> bool:
    """Some power of ``M`` strictly positive (Wielandt bound on the exponent)."""
    m = len(M)
    if m == 0:
        return False
    P = (M > 0).astype(np.int64)
    R = P.copy()
    for _ in range((m - 1) ** 2 + 1):
        if R.all():
            return True
        R = ((R @ P) > 0).astype(np.int64)
    return bool(R.all())


def spectral_radius(kernel: SizeBiasedKernel, tol: float = 1e-10, check: bool = True) -> float:
    """Perron root of the mean matrix by power iteration."""
    M = kernel.mean_matrix
    if np.any(np.isinf(M)):
        return math.inf
    if check and not is_positive_regular(M):
        raise ValueError("mean matrix of the size-biased kernel is not positive regular")
    if not check:
        return float(np.max(np.abs(np.linalg.eigvals(M)))) if len(M) else 0.0
    v = np.ones(len(M)) / len(M)
    r = 0.0
    for _ in range(100000):
        w = M @ v
        r_new = float(w.sum() / v.sum())
        w /= w.sum()
        if abs(r_new - r) <= tol * max(r_new, 1e-300) and np.abs(w - v).max() < tol:
            return r_new
        v, r = w, r_new
    raise RuntimeError("power iteration did not converge")


def branching_number(law: OffspringLaw, **kw) -> float:
    return spectral_radius(size_bias(law), **kw)


def beta_c(br: float) -> float:
    """Critical inverse temperature ``atanh(1/br)``; ``inf`` when ``br <= 1``."""
    if br <= 1:
        return math.inf
    return math.atanh(1.0 / br)


# ---------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class ConfigModelSample:
    graph: RootedGraph
    padded: int  # half-edges added to equalise (i,j)/(j,i) counts
    discarded: int  # odd (i,i) half-edges dropped
    attempts: int = 1


def _config_once(law, n, rng, pad_endpoint):
    q = law.num_types
    vtypes, vdeg = [], []
    for i in range(q):
        counts = np.floor(n * law.theta[i] * law.probs[i] * (1 + 1e-12)).astype(np.int64)
        for ks, c in zip(law.support[i], counts):
            if c:
                vtypes.append(np.full(c, i))
                vdeg.append(np.repeat(ks[None, :], c, axis=0))
    if not vtypes:
        raise ValueError(f"n={n} too small: no stars created")
    vtypes = np.concatenate(vtypes)
    vdeg = np.concatenate(vdeg)
    nv = len(vtypes)
    stubs = {}
    for i in range(q):
        ids = np.flatnonzero(vtypes == i)
        for j in range(q):
            stubs[(i, j)] = np.repeat(ids, vdeg[ids, j])
    padded = discarded = 0
    extra_types = []
    for i in range(q):
        for j in range(i + 1, q):
            d = len(stubs[(j, i)]) - len(stubs[(i, j)])
            if d == 0:
                continue
            a, b = (i, j) if d > 0 else (j, i)
            d = abs(d)
            if pad_endpoint == "new":
                new = nv + len(extra_types) + np.arange(d)
                extra_types.extend([a] * d)
            else:
                pool = np.flatnonzero(vtypes == a)
                if len(pool) == 0:
                    raise ValueError(f"no type-{law.Q[a]} vertex to attach padding half-edges")
                new = rng.choice(pool, size=d)
            stubs[(a, b)] = np.concatenate([stubs[(a, b)], new])
            padded += d
    edges = []
    for i in range(q):
        s = rng.permutation(stubs[(i, i)])
        if len(s) % 2:
            s = s[:-1]
            discarded += 1
        edges.append(s.reshape(-1, 2))
        for j in range(i + 1, q):
            edges.append(np.stack([stubs[(i, j)], rng.permutation(stubs[(j, i)])], axis=1))
    types = np.concatenate([vtypes, np.asarray(extra_types, dtype=np.int64)])
    g = from_edges(len(types), np.concatenate(edges), 0, types)
    return g, padded, discarded


def config_model_sample(
    law: OffspringLaw,
    n: int,
    rng: np.random.Generator,
    pad_endpoint: str = "uniform",
    simple: bool = False,
    max_tries: int = 1000,
) -> ConfigModelSample:
    """Typed configuration model by uniform half-edge matching.

    ``floor(n theta(i) P_i(k))`` stars are created per ``(i, k)``. Deficits
    between ``(i,j)`` and ``(j,i)`` half-edges are padded on uniformly chosen
    existing type-``i`` vertices (``pad_endpoint="uniform"``) or on new
    degree-one vertices (``"new"``). With ``simple=True`` the matching is
    redrawn until the multigraph has no loops or multi-edges.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if pad_endpoint not in ("uniform", "new"):
        raise ValueError("pad_endpoint must be 'uniform' or 'new'")
    for attempt in range(1, max_tries + 1):
        g, padded, discarded = _config_once(law, n, rng, pad_endpoint)
        if not simple or g.is_simple():
            return ConfigModelSample(g, padded, discarded, attempt)
    raise RuntimeError(f"no simple graph in {max_tries} attempts")


def umgw_sample(law: OffspringLaw, depth: int, rng: np.random.Generator) -> RootedGraph:
    """UMGW tree truncated at ``depth``; vertex 0 is the root."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    kernel = size_bias(law) if depth > 1 else None
    root_type = int(rng.choice(law.num_types, p=law.theta))
    parent, types = [-1], [root_type]
    ks = law.support[root_type][rng.choice(len(law.probs[root_type]), p=law.probs[root_type])]
    gen = []  # (vertex, type, parent type)
    if depth >= 1:
        for j, c in enumerate(ks):
            for _ in range(c):
                parent.append(0)
                types.append(j)
                gen.append((len(parent) - 1, j, root_type))
    for _ in range(1, depth):
        nxt = []
        groups: dict = {}
        for v, i, j in gen:
            groups.setdefault((i, j), []).append(v)
        for (i, j), vs in sorted(groups.items()):
            sup, ps = kernel.rho[(i, j)]
            draws = sup[rng.choice(len(ps), size=len(vs), p=ps)]
            for v, kv in zip(vs, draws):
                for c_type, c in enumerate(kv):
                    for _ in range(c):
                        parent.append(v)
                        types.append(c_type)
                        nxt.append((len(parent) - 1, c_type, i))
        gen = nxt
    return from_parents(parent, types)


def umgw_generation_sizes(law: OffspringLaw, depth: int, rng: np.random.Generator) -> np.ndarray:
    """Sizes ``|dT(1)|, ..., |dT(depth)|`` of a UMGW tree without building it.

    Offspring are drawn per (type, parent type) class by multinomial counts,
    which has the same law as drawing vertex by vertex.
    """
    kernel = size_bias(law) if depth > 1 else None
    q = law.num_types
    i0 = int(rng.choice(q, p=law.theta))
    ks = law.support[i0][rng.choice(len(law.probs[i0]), p=law.probs[i0])]
    counts = np.zeros((q, q), dtype=np.int64)  # counts[type, parent type]
    counts[:, i0] = ks
    sizes = [int(ks.sum())]
    for _ in range(1, depth):
        nxt = np.zeros((q, q), dtype=np.int64)
        for i in range(q):
            for j in range(q):
                c = counts[i, j]
                if c == 0:
                    continue
                sup, ps = kernel.rho[(i, j)]
                mult = rng.multinomial(c, ps)
                nxt[:, i] += mult @ sup
        counts = nxt
        sizes.append(int(counts.sum()))
    return np.asarray(sizes[:depth], dtype=np.int64)
