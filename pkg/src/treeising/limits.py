"""Tree limits: regular fixed points, U(beta, B), rho_mu and population dynamics."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ensembles import OffspringLaw, size_bias, umgw_sample
from .tree_ising import (
    edge_corr_formula,
    f_theta,
    pair_correlation,
    regular_children,
    spherical_fields,
    tree_messages,
)


@dataclass(frozen=True)
class FixedPointResult:
    h_star: float
    m_star: float
    iterations: int
    residual: float


def regular_fixed_point(k: int, beta: float, tol: float = 1e-14, field: float = 0.0,
                        max_iter: int = 10_000_000) -> FixedPointResult:
    """Largest solution of ``h = B + (k-1) f(h)``, iterated down from ``h = +inf``.

    At zero field and ``(k-1) tanh(beta) <= 1`` the answer is ``0``.
    """
    if k < 2 or beta < 0:
        raise ValueError("need k >= 2 and beta >= 0")
    if field == 0 and (k - 1) * math.tanh(beta) <= 1:
        return FixedPointResult(0.0, 0.0, 0, 0.0)
    h = field + (k - 1) * beta
    it = 1
    while it < max_iter:
        new = field + (k - 1) * f_theta(h, beta)
        it += 1
        if abs(new - h) < tol:
            h = new
            break
        h = new
    residual = abs(h - field - (k - 1) * f_theta(h, beta))
    return FixedPointResult(float(h), math.tanh(h), it, float(residual))


def U_regular(k: int, beta: float, B: float = 0.0) -> float:
    """``U(beta, B)`` on the ``k``-regular tree: ``(k/2) F(theta, m^2)`` with the cavity ``m``."""
    h = regular_fixed_point(k, beta, field=B).h_star
    m = math.tanh(h)
    return 0.5 * k * edge_corr_formula(math.tanh(beta), m * m)


def rho_mu_regular(k: int, beta: float, B: float = 0.0) -> float:
    """Plus-measure root magnetisation of the infinite ``k``-regular tree."""
    h = regular_fixed_point(k, beta, field=B).h_star
    return math.tanh(B + k * f_theta(h, beta))


def _se(values) -> float:
    values = np.asarray(values, float)
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def _root_edge_sum(tree, beta, B, depth) -> float:
    msg = tree_messages(tree, beta, "plus", fields=B, depth=depth)
    kids = tree.neighbors(tree.root)
    return float(sum(msg.edge_correlation(int(c)) for c in kids))


def U_tree(tree, beta: float, B: float = 0.0, depth: int | None = None) -> float:
    """Half the sum of plus-boundary edge correlations at the root of one tree."""
    return 0.5 * _root_edge_sum(tree, beta, B, depth)


def U_estimate(law: OffspringLaw, beta: float, B: float = 0.0, depth: int = 10,
               n_trees: int = 200, rng=None) -> tuple[float, float]:
    """Monte Carlo ``U(beta, B)`` over UMGW trees truncated at ``depth`` (mean, SE).

    Deterministic single-type laws are evaluated exactly level by level.
    """
    if depth < 2:
        raise ValueError("depth must be at least 2")
    if law.is_deterministic():
        d = int(law.support[0][np.argmax(law.probs[0])][0])
        if d == 0:
            return 0.0, 0.0
        h = spherical_fields(regular_children(d, depth), beta, math.inf, B)
        down = B + (d - 1) * f_theta(h[1], beta)
        return 0.5 * d * float(pair_correlation(h[1], down, beta)), 0.0
    rng = np.random.default_rng(rng)
    vals = [U_tree(umgw_sample(law, depth, rng), beta, B, depth) for _ in range(n_trees)]
    return float(np.mean(vals)), _se(vals)


def rho_mu_estimate(law: OffspringLaw, beta: float, depth: int, n_trees: int = 200,
                    rng=None, B: float = 0.0) -> tuple[float, float]:
    """Mean plus-boundary root magnetisation over UMGW trees of depth ``depth``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if law.is_deterministic():
        d = int(law.support[0][np.argmax(law.probs[0])][0])
        h = spherical_fields(regular_children(d, depth), beta, math.inf, B)
        return math.tanh(h[0]), 0.0
    rng = np.random.default_rng(rng)
    vals = [tree_messages(umgw_sample(law, depth, rng), beta, "plus", fields=B, depth=depth,
                          both=False).root_magnetization for _ in range(n_trees)]
    return float(np.mean(vals)), _se(vals)


def adaptive_depth(fn, tol: float = 1e-8, start: int = 2, max_depth: int = 100_000):
    """Smallest ``t`` with ``|fn(t) - fn(t+1)| < tol``; returns ``(t, fn(t+1))``."""
    t, prev = start, fn(start)
    while t < max_depth:
        cur = fn(t + 1)
        if abs(cur - prev) < tol:
            return t, cur
        t, prev = t + 1, cur
    raise RuntimeError("no convergence in depth")


# ---------------------------------------------------------------------------
# population dynamics


@dataclass
class ParticlePool:
    samples: np.ndarray
    t: int = 0
    stream: int = 0

    @classmethod
    def plus(cls, n: int, stream: int = 0) -> "ParticlePool":
        return cls(np.full(n, np.inf), 0, stream)

    @property
    def size(self) -> int:
        return len(self.samples)

    def summary(self) -> dict:
        s = self.samples
        q05, q50, q95 = np.quantile(s, [0.05, 0.5, 0.95])
        return {"mean_h": float(s.mean()), "q05": float(q05), "q50": float(q50), "q95": float(q95)}


@dataclass(frozen=True)
class ChildLaw:
    """Law of ``K - 1`` (children of a non-root vertex) for a single-type law."""

    values: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_law(cls, law: OffspringLaw, strict: bool = True) -> "ChildLaw":
        if law.num_types != 1:
            raise ValueError("population dynamics is implemented for single-type laws")
        if law.min_degree() < 3:
            msg = "offspring law has degrees below 3: outside the regime of the convergence result"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg)
        ks, ps = size_bias(law).rho[(0, 0)]
        return cls(ks[:, 0].astype(np.int64), ps)

    def draw(self, n: int, pool_size: int, rng: np.random.Generator):
        counts = self.values[rng.choice(len(self.probs), size=n, p=self.probs)]
        idx = rng.integers(0, pool_size, size=int(counts.sum()))
        return counts, idx


def apply_step(values: np.ndarray, counts: np.ndarray, idx: np.ndarray, beta: float,
               field: float = 0.0) -> np.ndarray:
    """``h_new[i] = B + sum of f(values[idx])`` over particle ``i``'s ``counts[i]`` draws."""
    contrib = f_theta(values[idx], beta)
    owner = np.repeat(np.arange(len(counts)), counts)
    return field + np.bincount(owner, weights=contrib, minlength=len(counts))


def pop_dynamics_step(pool: ParticlePool, children: ChildLaw, beta: float, rng,
                      draws=None, field: float = 0.0) -> ParticlePool:
    """One resampling step of the distributional cavity recursion."""
    if draws is None:
        draws = children.draw(pool.size, pool.size, rng)
    new = apply_step(pool.samples, *draws, beta, field)
    return ParticlePool(new, pool.t + 1, pool.stream)


def w1(a, b) -> float:
    """Exact 1-D Wasserstein-1 distance between equal-size empirical samples."""
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    if a.shape != b.shape:
        raise ValueError("pools must have equal size")
    both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    with np.errstate(invalid="ignore"):
        return float(np.mean(np.where(both_inf, 0.0, np.abs(a - b))))


@dataclass
class PopResult:
    pool: ParticlePool
    trace: list = field(default_factory=list)  # rows (t, W1, mean_h, q05, q50, q95)
    converged: bool = False


def _run(pool, children, beta, rng, max_t, w1_tol, min_t):
    trace = []
    converged = False
    for _ in range(max_t):
        new = pop_dynamics_step(pool, children, beta, rng)
        d = w1(new.samples, pool.samples)
        s = new.summary()
        trace.append((new.t, d, s["mean_h"], s["q05"], s["q50"], s["q95"]))
        pool = new
        if new.t >= min_t and d < w1_tol:
            converged = True
            break
    return PopResult(pool, trace, converged)


def pop_converge(law: OffspringLaw, beta: float, init: str = "plus", N: int = 100_000,
                 max_t: int = 500, w1_tol: float = 1e-2, rng=None, beta0: float | None = None,
                 min_t: int = 20) -> PopResult:
    """Iterate population dynamics until consecutive pools are within ``w1_tol``.

    ``init="plus"`` starts from ``h = +inf``. ``init="dominating"`` starts from a
    converged plus pool at ``beta0 < beta``, which requires
    ``(d_min - 1) tanh(beta0) > 1``.
    """
    rng = np.random.default_rng(rng)
    children = ChildLaw.from_law(law, strict=(init == "dominating"))
    if init == "plus":
        pool = ParticlePool.plus(N)
    elif init == "dominating":
        if beta0 is None or not beta0 < beta:
            raise ValueError("dominating init needs beta0 < beta")
        if (law.min_degree() - 1) * math.tanh(beta0) <= 1:
            raise ValueError(f"beta0={beta0} is below the threshold for minimum degree "
                             f"{law.min_degree()}")
        pool = _run(ParticlePool.plus(N), children, beta0, rng, max_t, w1_tol, min_t).pool
        pool = ParticlePool(pool.samples, 0, pool.stream)
    else:
        raise ValueError(f"unknown init {init!r}")
    if beta == 0:
        return PopResult(pop_dynamics_step(pool, children, 0.0, rng), [], True)
    return _run(pool, children, beta, rng, max_t, w1_tol, min_t)


def coupled_gap_trace(law: OffspringLaw, beta: float, upper, lower, steps: int, rng=None,
                      tol: float = 1e-12):
    """Run two pools with common random numbers on their sorted orders.

    Returns ``(gaps, dominated)``: the mean gap ``mean(A - B)`` after each step
    and whether ``A >= B - tol`` held pointwise throughout (once the pools
    merge, rounding leaves differences of a few ulps of either sign).
    """
    rng = np.random.default_rng(rng)
    children = ChildLaw.from_law(law)
    a, b = np.sort(np.asarray(upper, float)), np.sort(np.asarray(lower, float))
    if a.shape != b.shape:
        raise ValueError("pools must have equal size")
    gaps, dominated = [], bool(np.all(a >= b))
    for _ in range(steps):
        counts, idx = children.draw(len(a), len(a), rng)
        a = np.sort(apply_step(a, counts, idx, beta))
        b = np.sort(apply_step(b, counts, idx, beta))
        dominated &= bool(np.all(a >= b - tol))
        gaps.append(float(np.mean(a - b)))
    return np.array(gaps), dominated


def scalar_trajectory(d: int, beta: float, steps: int) -> np.ndarray:
    """``h_0 = inf, h_{t+1} = (d-1) f(h_t)``: the deterministic-law pool trajectory."""
    out = np.empty(steps + 1)
    out[0] = np.inf
    for t in range(steps):
        out[t + 1] = (d - 1) * f_theta(out[t], beta)
    return out


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "W1", "mean_h", "q05", "q50", "q95"])
        for row in trace:
            w.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])
