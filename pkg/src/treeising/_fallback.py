"""Pure-Python/numpy implementations of the hot kernels.

Interfaces match ``_kernels.pyx`` exactly; randomness is always drawn by the
caller so both backends produce identical trajectories.
"""
import math

import numpy as np


def f_theta(h, beta):
    """``atanh(tanh(beta) tanh(h))``, stable for large arguments; ``f(+-inf) = +-beta``.

    Where ``|tanh(beta) tanh(h)| > 1/2`` the value is taken from
    ``(logcosh(h + beta) - logcosh(h - beta)) / 2`` with the linear parts of
    the two logcosh terms cancelled exactly.
    """
    h = np.asarray(h, dtype=float)
    theta = math.tanh(beta)
    with np.errstate(invalid="ignore", over="ignore"):
        z = theta * np.tanh(h)
        out = np.arctanh(z)
        big = np.abs(z) > 0.5
        if np.any(big):
            a = np.abs(np.where(np.isfinite(h), h, 0.0))
            tail = np.log1p(np.exp(-2.0 * (a + beta))) - np.log1p(np.exp(-2.0 * np.abs(a - beta)))
            out = np.where(big, np.sign(h) * (np.minimum(a, beta) + 0.5 * tail), out)
        out = np.where(np.isinf(h), np.sign(h) * beta, out)
    return out if out.ndim else float(out)


def glauber_run(spins, indptr, indices, beta, fields, sites, uniforms, n_sweeps,
                mag_out, edge_out, mag, edge):
    """Heat-bath updates at the supplied sites; records per-sweep observables.

    ``mag`` and ``edge`` are the running magnetisation and edge sum, updated
    incrementally. Returns the final ``(mag, edge)``.
    """
    n = len(spins)
    s = spins.tolist()
    ip = indptr.tolist()
    nb = indices.tolist()
    fl = fields.tolist()
    st = sites.tolist()
    un = uniforms.tolist()
    exp = math.exp
    k = 0
    for sweep in range(n_sweeps):
        for _ in range(n):
            i = st[k]
            u = un[k]
            k += 1
            loc = 0
            for p in range(ip[i], ip[i + 1]):
                j = nb[p]
                if j != i:
                    loc += s[j]
            z = 2.0 * (beta * loc + fl[i])
            if z >= 0:
                p_plus = 1.0 / (1.0 + exp(-z))
            else:
                e = exp(z)
                p_plus = e / (1.0 + e)
            new = 1 if u < p_plus else -1
            if new != s[i]:
                mag += 2 * new
                edge += 2 * new * loc
                s[i] = new
        mag_out[sweep] = mag
        edge_out[sweep] = edge
    spins[:] = s
    return mag, edge


def bp_upward(order, parent, fields, beta):
    """Leaf-to-root sweep on a tree given in BFS ``order``.

    Returns ``(h_up, acc)``: ``h_up[v]`` is the message ``v -> parent(v)``
    and ``acc[v]`` the sum of ``f(h_up[c])`` over children ``c``.
    """
    n = len(order)
    acc = np.zeros(n)
    h_up = np.zeros(n)
    depth = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        depth[v] = depth[parent[v]] + 1
    for d in range(int(depth.max(initial=0)), -1, -1):
        vs = np.flatnonzero(depth == d)
        h_up[vs] = fields[vs] + acc[vs]
        if d > 0:
            np.add.at(acc, parent[vs], f_theta(h_up[vs], beta))
    return h_up, acc


def bp_downward(order, parent, fields, beta, h_up, acc):
    """Root-to-leaf sweep: ``h_down[v]`` is the message ``parent(v) -> v``."""
    n = len(order)
    h_down = np.zeros(n)
    f_up = f_theta(h_up, beta)
    depth = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        depth[v] = depth[parent[v]] + 1
    root = order[0]
    f_down = np.zeros(n)
    for d in range(1, int(depth.max(initial=0)) + 1):
        vs = np.flatnonzero(depth == d)
        p = parent[vs]
        incoming = np.where(p == root, 0.0, f_down[p])
        h_down[vs] = fields[p] + (acc[p] - f_up[vs]) + incoming
        f_down[vs] = f_theta(h_down[vs], beta)
    return h_down
