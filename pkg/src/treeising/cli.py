"""Command-line experiment harness.

Every experiment is split into tasks (grid points or samples). Task ``k``
draws from ``SeedSequence(seed, spawn_key=(k, j))`` (``j`` numbers the
independent streams inside a task), so output does not depend on
how many worker processes run the tasks.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

EXPERIMENTS = ("theorem-free", "theorem-plus", "lemma-recursion", "capacity", "expander", "u-curve")
COLUMNS = ["experiment", "task", "beta", "observable", "mean", "se", "n_samples", "ess", "seed"]


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"config.{path}: {msg}")
        self.path = path


@dataclass
class ExperimentConfig:
    experiment: str
    law: str | None = "P3"
    graph: str | None = None
    beta: str = "1.0"
    beta0: float | None = None
    B: float = 0.0
    n: str = "500"
    depth: int = 8
    samples: int = 2000
    pool: int = 100_000
    seed: int = 0
    out: str = "out"
    assert_: bool = False
    threads: int | None = None

    def betas(self) -> list[float]:
        return parse_beta(self.beta)

    def sizes(self) -> list[int]:
        """``--n`` as one size or a comma-separated list (theorem experiments sweep it)."""
        try:
            vals = [int(x) for x in str(self.n).split(",")]
        except ValueError as exc:
            raise ConfigError("n", f"cannot parse {self.n!r}") from exc
        if any(v < 1 for v in vals):
            raise ConfigError("n", "must be a positive integer")
        return vals

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        self.betas()
        self.sizes()
        for name in ("depth", "samples", "pool"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be a positive integer")
        if self.B < 0:
            raise ConfigError("B", "must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if self.experiment == "lemma-recursion" and self.beta0 is None:
            raise ConfigError("beta0", "required for lemma-recursion")
        if self.graph is not None and not Path(self.graph).exists():
            raise ConfigError("graph", f"file {self.graph!r} not found")
        if self.graph is None and self.law is None:
            raise ConfigError("law", "either --law or --graph is required")
        if self.law is not None:
            try:
                self.offspring_law()
            except Exception as exc:  # surface JSON and validation problems uniformly
                raise ConfigError("law", str(exc)) from exc

    def offspring_law(self):
        from .ensembles import load_law

        return load_law(self.law)


def parse_beta(text: str) -> list[float]:
    """``"b"`` or ``"a:b:step"`` (inclusive of ``b`` up to rounding)."""
    try:
        parts = [float(x) for x in str(text).split(":")]
    except ValueError as exc:
        raise ConfigError("beta", f"cannot parse {text!r}") from exc
    if len(parts) == 1:
        vals = parts
    elif len(parts) == 3:
        a, b, step = parts
        if step <= 0 or b < a:
            raise ConfigError("beta", "need a <= b and step > 0")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        vals = [round(a + k * step, 12) for k in range(count)]
    else:
        raise ConfigError("beta", "expected b or a:b:step")
    if any(v < 0 for v in vals):
        raise ConfigError("beta", "values must be non-negative")
    return vals


def task_rng(seed: int, task: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(task, sub)))


def thread_count(requested: int | None) -> int:
    env = os.environ.get("TREEISING_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(requested or cap, cap))


# ---------------------------------------------------------------------------
# tasks (module level so they pickle)


def _row(cfg, task, beta, name, mean, se=0.0, n=1, ess=float("nan")):
    return [cfg.experiment, task, beta, name, mean, se, n, ess, cfg.seed]


def _graph_for(cfg, rng, n=None):
    from .ensembles import config_model_sample
    from .graph import read_graph

    if cfg.graph is not None:
        return read_graph(cfg.graph)
    n = cfg.sizes()[0] if n is None else n
    return config_model_sample(cfg.offspring_law(), n, rng, simple=True).graph


def _regular_degree(cfg, g):
    deg = np.unique(g.degrees)
    return int(deg[0]) if len(deg) == 1 else None


def task_theorem(cfg, task, beta, n=None):
    from .graph import total_variation
    from .limits import U_estimate, U_regular, regular_fixed_point, rho_mu_estimate, rho_mu_regular
    from .mcmc import ball_marginal_estimate, ball_prediction, edge_corr_avg, magnetization_estimate

    rng = task_rng(cfg.seed, task)
    g = _graph_for(cfg, rng, n)
    plus = cfg.experiment == "theorem-plus"
    sampler = "plus" if plus else "unconditioned"
    sweeps = cfg.samples
    k = _regular_degree(cfg, g)
    rows = []
    if plus:
        est = magnetization_estimate(g, beta, "plus", sweeps, rng=rng)
        pred = rho_mu_regular(k, beta) if k else rho_mu_estimate(cfg.offspring_law(), beta, cfg.depth, 200, rng)[0]
        rows.append(_row(cfg, task, beta, "magnetization", est.mean, est.se, est.n_samples, est.ess))
        rows.append(_row(cfg, task, beta, "rho_mu", pred))
    else:
        est = edge_corr_avg(g, beta, sampler, sweeps, rng=rng)
        pred = U_regular(k, beta) if k else U_estimate(cfg.offspring_law(), beta, 0.0, cfg.depth, 200, rng)[0]
        rows.append(_row(cfg, task, beta, "edge_corr_avg", est.mean, est.se, est.n_samples, est.ess))
        rows.append(_row(cfg, task, beta, "U", pred))
    rows.append(_row(cfg, task, beta, "graph_n", float(g.n)))
    plot = {}
    if k:
        h = regular_fixed_point(k, beta).h_star
        bm = ball_marginal_estimate(g, beta, 1, sampler, max(sweeps // 5, 1), rng=rng)
        law = ball_prediction(g, 1, beta, h, "plus" if plus else "symmetric")
        tv = total_variation(bm.law, law)
        rows.append(_row(cfg, task, beta, "ball_tv", tv, 0.0, bm.n_observations))
        rows.append(_row(cfg, task, beta, "non_tree_fraction", bm.non_tree_fraction, 0.0, bm.n_observations))
        plot["tv_vs_n"] = [(g.n, beta, tv, bm.non_tree_fraction)]
    return rows, plot


def task_lemma(cfg, task, beta):
    from .limits import coupled_gap_trace, pop_converge, w1

    law = cfg.offspring_law()
    plus = pop_converge(law, beta, "plus", cfg.pool, rng=task_rng(cfg.seed, task, 0))
    dom = pop_converge(law, beta, "dominating", cfg.pool, rng=task_rng(cfg.seed, task, 1),
                       beta0=cfg.beta0)
    lower = pop_converge(law, cfg.beta0, "plus", cfg.pool, rng=task_rng(cfg.seed, task, 2))
    gaps, dominated = coupled_gap_trace(law, beta, np.full(cfg.pool, np.inf), lower.pool.samples,
                                        len(plus.trace), rng=task_rng(cfg.seed, task, 3))
    active = gaps > 1e-12
    monotone = bool(np.all(np.diff(gaps[active]) <= 0)) and dominated
    d = w1(plus.pool.samples, dom.pool.samples)
    rows = [
        _row(cfg, task, beta, "w1_final", d, 0.0, cfg.pool),
        _row(cfg, task, beta, "steps_plus", len(plus.trace)),
        _row(cfg, task, beta, "steps_dominating", len(dom.trace)),
        _row(cfg, task, beta, "mean_h_plus", float(plus.pool.samples.mean())),
        _row(cfg, task, beta, "domination_monotone", float(monotone)),
    ]
    plot = {
        f"w1_trace_beta{beta:g}": (["t", "W1", "mean_h", "q05", "q50", "q95"], plus.trace),
        f"crn_gap_beta{beta:g}": (["t", "gap"], [(t + 1, g) for t, g in enumerate(gaps)]),
    }
    return rows, plot


def task_capacity(cfg, task, beta):
    from .capacity import capa3_bound, capa3_exact, capa3_solve, prune_T_t, s_t_sum
    from .ensembles import branching_number, umgw_sample

    law = cfg.offspring_law()
    br = branching_number(law)
    theta = 1.0 / br
    rng = task_rng(cfg.seed, task)
    for _ in range(1000):
        tree = umgw_sample(law, cfg.depth, rng)
        try:
            tt = prune_T_t(tree, cfg.depth)
            break
        except ValueError:
            continue
    res = capa3_solve(tt, theta)
    rows = [
        _row(cfg, task, theta, "capa3", res.value, res.gap, res.iterations),
        _row(cfg, task, theta, "capa3_exact", capa3_exact(tt, theta)),
        _row(cfg, task, theta, "S_Tt_bound", capa3_bound(tt, theta)),
        _row(cfg, task, theta, "S_full", float(s_t_sum(tree, br, cfg.depth, "full")[-1])),
        _row(cfg, task, theta, "S_pruned", float(s_t_sum(tree, br, cfg.depth, "pruned")[-1])),
    ]
    return rows, {}


def task_expander(cfg, task, beta):
    from .capacity import entropy_sup, expansion_exact, expansion_spectral

    rng = task_rng(cfg.seed, task)
    g = _graph_for(cfg, rng)
    rows = [_row(cfg, task, beta, "spectral_bound", expansion_spectral(g).value)]
    if g.n <= 24:
        rows.append(_row(cfg, task, beta, "exact_ratio", expansion_exact(g, 0.0, 0.5).value))
    if task == 0 and cfg.law is not None:
        law = cfg.offspring_law()
        if law.num_types == 1:
            rows.append(_row(cfg, task, beta, "entropy_sup", entropy_sup(law, 0.1, points=41)))
    return rows, {}


def task_ucurve(cfg, task, beta):
    from .limits import U_estimate

    mean, se = U_estimate(cfg.offspring_law(), beta, cfg.B, cfg.depth,
                          n_trees=cfg.samples, rng=task_rng(cfg.seed, task))
    return [_row(cfg, task, beta, "U", mean, se, cfg.samples)], {}


TASKS = {
    "theorem-free": task_theorem,
    "theorem-plus": task_theorem,
    "lemma-recursion": task_lemma,
    "capacity": task_capacity,
    "expander": task_expander,
    "u-curve": task_ucurve,
}


def _tasks(cfg):
    """``(task id, beta, extra kwargs)`` for every independent unit of work."""
    if cfg.experiment in ("capacity", "expander"):
        beta = cfg.betas()[0]
        return [(k, beta, {}) for k in range(cfg.samples if cfg.experiment == "capacity" else 10)]
    if cfg.experiment in ("theorem-free", "theorem-plus"):
        grid = [(n, b) for n in cfg.sizes() for b in cfg.betas()]
        return [(k, b, {"n": n}) for k, (n, b) in enumerate(grid)]
    return [(k, b, {}) for k, b in enumerate(cfg.betas())]


def _call(args):
    cfg, task, beta, extra = args
    return TASKS[cfg.experiment](cfg, task, beta, **extra)


# ---------------------------------------------------------------------------
# assertions


def check(cfg, rows) -> list[str]:
    """Acceptance-threshold breaches for ``--assert``."""
    by = {}
    for r in rows:
        by.setdefault(r[3], []).append(r)
    bad = []
    exp = cfg.experiment
    if exp == "u-curve":
        U = by.get("U", [])
        for a, b in zip(U, U[1:]):
            if b[4] < a[4] - 3 * math.hypot(a[5], b[5]):
                bad.append(f"U decreases between beta={a[2]} and beta={b[2]}")
    elif exp == "lemma-recursion":
        bad += [f"W1={r[4]:.4g} >= 0.01 at beta={r[2]}" for r in by["w1_final"] if not r[4] < 0.01]
        bad += [f"domination trace not monotone at beta={r[2]}"
                for r in by["domination_monotone"] if r[4] != 1.0]
    elif exp in ("theorem-free", "theorem-plus"):
        est, pred = ("magnetization", "rho_mu") if exp == "theorem-plus" else ("edge_corr_avg", "U")
        for e, p in zip(by[est], by[pred]):
            if abs(e[4] - p[4]) > 3 * e[5]:
                bad.append(f"{est}={e[4]:.6g} not within 3 SE of {pred}={p[4]:.6g}")
        bad += [f"ball TV {r[4]:.4g} >= 0.05" for r in by.get("ball_tv", []) if not r[4] < 0.05]
    elif exp == "capacity":
        for c, b in zip(by["capa3"], by["S_Tt_bound"]):
            if c[4] > b[4] + 1e-3 or c[5] > 1e-3:
                bad.append(f"task {c[1]}: capa3={c[4]:.6g} (gap {c[5]:.2g}) vs bound {b[4]:.6g}")
    elif exp == "expander":
        ex = {r[1]: r[4] for r in by.get("exact_ratio", [])}
        for r in by["spectral_bound"]:
            if r[1] in ex and r[4] > ex[r[1]] + 1e-12:
                bad.append(f"task {r[1]}: spectral bound exceeds exact expansion")
        bad += [f"entropy sup {r[4]:.4g} not negative" for r in by.get("entropy_sup", []) if r[4] >= 0]
    return bad


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    Path(path).write_text(buf.getvalue())


def run(cfg: ExperimentConfig) -> int:
    from . import BACKEND, __version__

    cfg.validate()
    t0 = time.time()
    tasks = [(cfg, k, b, extra) for k, b, extra in _tasks(cfg)]
    workers = min(thread_count(cfg.threads), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    rows, plots = [], {}
    for r, p in results:
        rows += r
        for name, data in p.items():  # rows of a shared plot file are concatenated in task order
            if isinstance(data, list):
                plots.setdefault(name, []).extend(data)
            else:
                plots[name] = data
    out = Path(cfg.out)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", COLUMNS, rows)
    if cfg.experiment == "u-curve":
        plots["U_vs_beta"] = (["beta", "U", "se"], [(r[2], r[4], r[5]) for r in rows])
    if "tv_vs_n" in plots:
        plots["tv_vs_n"] = (["n", "beta", "ball_tv", "non_tree_fraction"], plots["tv_vs_n"])
    for name, (header, data) in sorted(plots.items()):
        write_csv(out / "plotdata" / f"{name}.csv", header, data)
    breaches = check(cfg, rows)
    meta = {
        "config": asdict(cfg),
        "versions": {"treeising": __version__, "numpy": np.__version__,
                     "python": platform.python_version(), "backend": BACKEND},
        "workers": workers,
        "runtime_s": time.time() - t0,
        "breaches": breaches,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    if cfg.assert_ and breaches:
        for b in breaches:
            print(f"assertion failed: {b}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treeising", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--law", default=None, help="built-in law (P3, P4, P34) or JSON file")
    r.add_argument("--graph", default=None, help="graph file instead of a sampled graph")
    r.add_argument("--beta", default="1.0", help="value or a:b:step grid")
    r.add_argument("--beta0", type=float, default=None)
    r.add_argument("--B", type=float, default=0.0)
    r.add_argument("--n", default="500", help="graph size (theorem runs accept a list like 100,200,500)")
    r.add_argument("--depth", type=int, default=8)
    r.add_argument("--samples", type=int, default=2000)
    r.add_argument("--pool", type=int, default=100_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="out")
    r.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit non-zero when an acceptance threshold is breached")
    r.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if k != "command"}
    if opts["law"] is None and opts["graph"] is None:
        opts["law"] = "P3"
    cfg = ExperimentConfig(**opts)
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
