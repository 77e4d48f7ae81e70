"""Heat-bath Glauber dynamics, sign-conditioned sampling and finite-graph estimators."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import _backend
from .graph import RootedGraph, ball, canonical_code
from .tree_ising import IsingSpec, brute_force_measure, f_theta

CHUNK_UPDATES = 1 << 22  # random numbers drawn per kernel call


@dataclass
class ChainState:
    graph: RootedGraph
    beta: float
    fields: np.ndarray
    spins: np.ndarray  # int8
    rng: np.random.Generator
    sweeps: int = 0
    mag: int = 0  # sum of spins, maintained incrementally
    edge: int = 0  # sum over edges of x_i x_j (loops contribute 1)

    @classmethod
    def new(cls, graph: RootedGraph, beta: float, B=0.0, rng=None, init="plus") -> "ChainState":
        if beta < 0:
            raise ValueError("beta must be non-negative")
        rng = np.random.default_rng(rng)
        fields = np.array(np.broadcast_to(np.asarray(B, float), graph.n))
        if init == "plus":
            spins = np.ones(graph.n, dtype=np.int8)
        elif init == "minus":
            spins = -np.ones(graph.n, dtype=np.int8)
        elif init == "random":
            spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=graph.n)
        else:
            spins = np.asarray(init, dtype=np.int8).copy()
        st = cls(graph, beta, fields, spins, rng)
        st.resync()
        return st

    def resync(self) -> None:
        x = self.spins.astype(np.int64)
        self.mag = int(x.sum())
        e = self.graph.edges
        self.edge = int(np.sum(x[e[:, 0]] * x[e[:, 1]])) if len(e) else 0

    def check(self) -> None:
        mag, edge = self.mag, self.edge
        self.resync()
        if (mag, edge) != (self.mag, self.edge):
            raise AssertionError("running magnetisation or edge sum out of sync")


def run_chain(state: ChainState, n_sweeps: int, check_every: int = 1000):
    """Advance ``n_sweeps`` random-scan sweeps; returns per-sweep ``(mag, edge)`` arrays."""
    n = state.graph.n
    mags = np.empty(n_sweeps, dtype=np.int64)
    edges = np.empty(n_sweeps, dtype=np.int64)
    per_chunk = max(1, CHUNK_UPDATES // max(n, 1))
    done = 0
    g = state.graph
    while done < n_sweeps:
        k = min(per_chunk, n_sweeps - done)
        sites = state.rng.integers(0, n, size=k * n, dtype=np.int64)
        unif = state.rng.random(k * n)
        state.mag, state.edge = _backend.glauber_run(
            state.spins, g.indptr, g.indices, float(state.beta), state.fields, sites, unif, k,
            mags[done:done + k], edges[done:done + k], state.mag, state.edge)
        before = state.sweeps
        done += k
        state.sweeps += k
        if check_every and before // check_every != state.sweeps // check_every:
            state.check()
    return mags, edges


def glauber_sweep(state: ChainState, n_sweeps: int = 1) -> ChainState:
    run_chain(state, n_sweeps)
    return state


def sample_configs(state: ChainState, n_samples: int, thin: int = 1) -> np.ndarray:
    """Spin configurations recorded every ``thin`` sweeps."""
    out = np.empty((n_samples, state.graph.n), dtype=np.int8)
    for s in range(n_samples):
        run_chain(state, thin, check_every=0)
        out[s] = state.spins
    state.check()
    return out


def sign_condition(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``s x`` with ``s = sign(sum x)`` and a fair coin on ties (rows of ``x``)."""
    x = np.asarray(x)
    tot = x.sum(axis=-1, dtype=np.int64)
    coin = rng.choice(np.array([-1, 1]), size=tot.shape)
    s = np.where(tot > 0, 1, np.where(tot < 0, -1, coin))
    return (x * s[..., None]).astype(np.int8) if x.ndim > 1 else (x * int(s)).astype(np.int8)


def random_flip(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform global flip: symmetrises samples of a flip-invariant measure."""
    x = np.asarray(x)
    s = rng.choice(np.array([-1, 1]), size=x.shape[:-1])
    return (x * s[..., None]).astype(np.int8) if x.ndim > 1 else (x * int(s)).astype(np.int8)


def sample_conditioned_plus(state: ChainState, rng=None) -> np.ndarray:
    """Draw from the plus-conditioned measure from the chain's current configuration."""
    if np.any(state.fields != 0):
        raise ValueError("sign conditioning is defined at zero field only")
    return sign_condition(state.spins, np.random.default_rng(rng) if rng is not None else state.rng)


# ---------------------------------------------------------------------------
# estimators


def integrated_autocorr_time(x) -> float:
    """Integrated autocorrelation time with a self-consistent window (c = 5)."""
    x = np.asarray(x, float)
    n = len(x)
    x = x - x.mean()
    var = x @ x / n
    if n < 4 or var == 0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    tau = 1.0
    for w in range(1, n):
        tau += 2 * acf[w]
        if w >= 5 * tau:
            break
    return max(tau, 1.0)


@dataclass(frozen=True)
class Estimate:
    observable: str
    mean: float
    se: float
    n_samples: int
    ess: float
    seed: int | None = None

    def row(self) -> list:
        return [self.observable, self.mean, self.se, self.n_samples, self.ess, self.seed]


def summarize(name: str, series, n_batches: int = 50, seed=None) -> Estimate:
    """Mean with batch-means standard error and autocorrelation-based ESS."""
    x = np.asarray(series, float)
    n = len(x)
    mean = float(x.mean())
    b = min(n_batches, n)
    if b >= 2:
        usable = (n // b) * b
        batches = x[n - usable:].reshape(b, -1).mean(axis=1)
        se = float(batches.std(ddof=1) / math.sqrt(b))
    else:
        se = 0.0
    ess = n / integrated_autocorr_time(x)
    return Estimate(name, mean, se, n, float(ess), seed)


def edge_corr_avg(graph: RootedGraph, beta: float, sampler: str = "unconditioned",
                  n_samples: int = 10_000, burn_in: int = 200, rng=None,
                  per: str = "vertex") -> Estimate:
    """``(1/n) sum_E <x_i x_j>`` from one chain (one sample per sweep).

    ``per="edge"`` divides by ``|E|`` instead of ``n``.

    The observable is flip invariant, so the plus-conditioned and unconditioned
    samplers give the same per-sample values.
    """
    if sampler not in ("unconditioned", "plus"):
        raise ValueError(f"unknown sampler {sampler!r}")
    state = ChainState.new(graph, beta, 0.0, rng)
    run_chain(state, burn_in)
    _, edges = run_chain(state, n_samples)
    norm = graph.n if per == "vertex" else graph.m
    return summarize("edge_corr_avg", edges / norm)


def magnetization_estimate(graph: RootedGraph, beta: float, sampler: str = "plus",
                           n_samples: int = 10_000, burn_in: int = 200, rng=None) -> Estimate:
    """Mean spin at a uniform vertex under the chosen sampler."""
    state = ChainState.new(graph, beta, 0.0, rng)
    run_chain(state, burn_in)
    mags, _ = run_chain(state, n_samples)
    if sampler == "plus":
        coin = state.rng.choice(np.array([-1, 1]), size=len(mags))
        vals = np.where(mags != 0, np.abs(mags), mags * coin)
    elif sampler == "unconditioned":
        vals = mags * state.rng.choice(np.array([-1, 1]), size=len(mags))
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return summarize("magnetization", vals / graph.n)


@dataclass
class BallMarginals:
    law: dict  # marked canonical code -> frequency
    shapes: dict  # unmarked canonical code -> frequency
    non_tree_fraction: float
    n_observations: int


def ball_marginal_estimate(graph: RootedGraph, beta: float, t: int = 1,
                           sampler: str = "unconditioned", n_samples: int = 2000,
                           centers_per_sample: int = 20, burn_in: int = 200, thin: int = 1,
                           rng=None) -> BallMarginals:
    """Joint empirical law of (rooted ``t``-ball shape, spins on it) at random centres.

    Non-tree balls are excluded and their fraction reported.
    """
    if sampler not in ("unconditioned", "plus"):
        raise ValueError(f"unknown sampler {sampler!r}")
    state = ChainState.new(graph, beta, 0.0, rng)
    rng = state.rng
    run_chain(state, burn_in)
    views: dict = {}
    codes: dict = {}
    shape_codes: dict = {}
    counts: Counter = Counter()
    shapes: Counter = Counter()
    non_tree = 0
    for _ in range(n_samples):
        run_chain(state, thin, check_every=0)
        x = state.spins
        x = sign_condition(x, rng) if sampler == "plus" else random_flip(x, rng)
        for c in rng.integers(0, graph.n, size=centers_per_sample):
            c = int(c)
            view = views.get(c)
            if view is None:
                view = views[c] = ball(graph, c, t)
            if not view.is_tree():
                non_tree += 1
                continue
            local = x[view.vertex_map]
            key = (c, local.tobytes())
            code = codes.get(key)
            if code is None:
                code = codes[key] = canonical_code(view.graph, marks=local)
            counts[code] += 1
            shape = shape_codes.get(c)
            if shape is None:
                shape = shape_codes[c] = canonical_code(view.graph)
            shapes[shape] += 1
    state.check()
    total = sum(counts.values())
    obs = n_samples * centers_per_sample
    return BallMarginals({k: v / total for k, v in counts.items()},
                         {k: v / total for k, v in shapes.items()}, non_tree / obs, obs)


def ball_prediction(graph: RootedGraph, t: int, beta: float, cavity_h: float,
                    mixture: str = "plus", centers=None) -> dict:
    """Tree-measure prediction for the marked ball law.

    A ball vertex with ``r`` neighbours outside the ball receives the external
    field ``r f(cavity_h)``, the contribution of ``r`` independent plus-measure
    subtrees. ``mixture="plus"`` gives the plus measure, ``"symmetric"`` the
    half-half mixture of plus and minus. Shapes are weighted by their frequency
    over ``centers`` (default all vertices); non-tree balls are skipped.
    """
    if mixture not in ("plus", "symmetric"):
        raise ValueError(f"unknown mixture {mixture!r}")
    centers = range(graph.n) if centers is None else centers
    fcav = float(f_theta(cavity_h, beta))
    cache: dict = {}
    law: Counter = Counter()
    used = 0
    deg = graph.degrees
    for c in centers:
        view = ball(graph, int(c), t)
        if not view.is_tree():
            continue
        outside = deg[view.vertex_map] - view.graph.degrees
        key = (canonical_code(view.graph), tuple(sorted(zip(view.dist.tolist(), outside.tolist()))))
        if key not in cache:
            signs = (1,) if mixture == "plus" else (1, -1)
            dist_law: Counter = Counter()
            for s in signs:
                res = brute_force_measure(IsingSpec(view.graph, beta, s * outside * fcav))
                for x, p in zip(res.configs, res.probs):
                    dist_law[canonical_code(view.graph, marks=x)] += p / len(signs)
            cache[key] = dist_law
        for code, p in cache[key].items():
            law[code] += p
        used += 1
    return {k: v / used for k, v in law.items()}


# ---------------------------------------------------------------------------
# free entropy


def free_entropy(spec: IsingSpec) -> float:
    """``phi_n = (1/n) log Z`` by enumeration."""
    return brute_force_measure(spec).log_z / spec.graph.n


def d_beta_free_entropy(spec: IsingSpec, step: float = 1e-4) -> float:
    """Central difference of ``phi_n`` in ``beta``."""
    if spec.beta < step:
        raise ValueError("beta must exceed the difference step")
    up = IsingSpec(spec.graph, spec.beta + step, spec.fields)
    dn = IsingSpec(spec.graph, spec.beta - step, spec.fields)
    return (free_entropy(up) - free_entropy(dn)) / (2 * step)


def edge_corr_sum(spec: IsingSpec) -> float:
    """Exact ``(1/n) sum_E <x_i x_j>``, the beta-derivative of ``phi_n``."""
    return float(brute_force_measure(spec).edge_correlations.sum() / spec.graph.n)
