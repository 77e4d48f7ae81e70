"""Rooted multigraphs, balls, rooted-isomorphism codes and ball statistics.

Vertices are dense integers ``0..n-1``. Multi-edges are stored repeatedly and
a loop ``(i, i)`` contributes 2 to the degree of ``i`` (it appears twice in the
neighbour list), which matches half-edge matching semantics.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_GENERAL_CANON = 12


@dataclass(frozen=True, eq=False)
class RootedGraph:
    """Finite rooted multigraph with optional integer vertex types.

    ``edges`` is an ``(m, 2)`` integer array, one row per edge (multi-edges
    repeated, loops as ``(i, i)``). The adjacency is stored in CSR form with
    each neighbour list sorted.
    """

    n: int
    edges: np.ndarray
    root: int = 0
    types: np.ndarray | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ValueError("graph must have at least one vertex")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if not 0 <= self.root < self.n:
            raise ValueError(f"root {self.root} out of range for n={self.n}")
        edges = np.sort(edges, axis=1)
        object.__setattr__(self, "edges", edges)
        if self.types is not None:
            types = np.asarray(self.types, dtype=np.int64)
            if types.shape != (self.n,):
                raise ValueError("types must give exactly one label per vertex")
            object.__setattr__(self, "types", types)
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        indices = dst[order]
        counts = np.bincount(src, minlength=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def with_root(self, root: int) -> "RootedGraph":
        return RootedGraph(self.n, self.edges, root, self.types)

    def has_loops(self) -> bool:
        return bool(np.any(self.edges[:, 0] == self.edges[:, 1]))

    def is_simple(self) -> bool:
        if self.has_loops():
            return False
        keys = self.edges[:, 0] * self.n + self.edges[:, 1]
        return len(np.unique(keys)) == len(keys)

    def is_connected(self) -> bool:
        return len(bfs(self, 0)[0]) == self.n

    def is_tree(self) -> bool:
        return self.m == self.n - 1 and not self.has_loops() and self.is_connected()

    def laplacian(self) -> np.ndarray:
        """Dense graph Laplacian ``D - A``; loops cancel."""
        L = np.zeros((self.n, self.n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        off = i != j
        np.add.at(L, (i[off], j[off]), -1.0)
        np.add.at(L, (j[off], i[off]), -1.0)
        np.add.at(L, (i[off], i[off]), 1.0)
        np.add.at(L, (j[off], j[off]), 1.0)
        return L


def bfs(g: RootedGraph, source: int, radius: int | None = None):
    """Breadth-first search from ``source``.

    Returns ``(order, dist, parent)``; ``dist``/``parent`` are ``-1`` for
    vertices not reached (or beyond ``radius``).
    """
    dist = np.full(g.n, -1, dtype=np.int64)
    parent = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    order = [source]
    queue = deque([source])
    indptr, indices = g.indptr, g.indices
    while queue:
        u = queue.popleft()
        du = dist[u]
        if radius is not None and du >= radius:
            continue
        for w in indices[indptr[u]:indptr[u + 1]]:
            if dist[w] < 0:
                dist[w] = du + 1
                parent[w] = u
                order.append(int(w))
                queue.append(w)
    return np.asarray(order, dtype=np.int64), dist, parent


# ---------------------------------------------------------------------------
# constructors


def from_edges(n, edges, root=0, types=None) -> RootedGraph:
    return RootedGraph(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), root, types)


def from_parents(parent, types=None) -> RootedGraph:
    """Tree from a parent array (root has parent ``-1``)."""
    parent = np.asarray(parent, dtype=np.int64)
    child = np.flatnonzero(parent >= 0)
    roots = np.flatnonzero(parent < 0)
    if len(roots) != 1:
        raise ValueError("parent array must contain exactly one root")
    edges = np.stack([parent[child], child], axis=1)
    return RootedGraph(len(parent), edges, int(roots[0]), types)


def path_graph(n: int, root: int = 0) -> RootedGraph:
    return from_edges(n, [(i, i + 1) for i in range(n - 1)], root)


def cycle_graph(n: int, root: int = 0) -> RootedGraph:
    return from_edges(n, [(i, (i + 1) % n) for i in range(n)], root)


def complete_graph(n: int, root: int = 0) -> RootedGraph:
    return from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], root)


def star_graph(leaves: int) -> RootedGraph:
    """Star ``K_{1,leaves}`` rooted at its centre (vertex 0)."""
    return from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)], 0)


def regular_tree(k: int, depth: int) -> RootedGraph:
    """Ball of radius ``depth`` in the ``k``-regular tree, rooted at the centre."""
    parent = [-1]
    frontier = [0]
    for d in range(depth):
        nxt = []
        for v in frontier:
            for _ in range(k if d == 0 else k - 1):
                parent.append(v)
                nxt.append(len(parent) - 1)
        frontier = nxt
    return from_parents(parent)


def kary_tree(b: int, depth: int) -> RootedGraph:
    """Rooted tree in which every non-leaf vertex has exactly ``b`` children."""
    parent = [-1]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for v in frontier:
            for _ in range(b):
                parent.append(v)
                nxt.append(len(parent) - 1)
        frontier = nxt
    return from_parents(parent)


def random_tree(n: int, rng: np.random.Generator, root: int | None = None) -> RootedGraph:
    """Uniform labelled tree on ``n`` vertices (Prüfer decoding)."""
    if n == 1:
        return RootedGraph(1, np.zeros((0, 2), dtype=np.int64), 0)
    if n == 2:
        return from_edges(2, [(0, 1)], 0 if root is None else root)
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    np.add.at(degree, seq, 1)
    edges = []
    import heapq

    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    for s in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(s)))
        degree[s] -= 1
        if degree[s] == 1:
            heapq.heappush(leaves, int(s))
    u, v = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, v))
    r = int(rng.integers(n)) if root is None else root
    return from_edges(n, edges, r)


def random_regular_graph(n: int, k: int, rng: np.random.Generator) -> RootedGraph:
    """Configuration-model ``k``-regular multigraph (uniform half-edge matching)."""
    if (n * k) % 2:
        raise ValueError("n*k must be even")
    stubs = np.repeat(np.arange(n), k)
    rng.shuffle(stubs)
    return from_edges(n, stubs.reshape(-1, 2))


# ---------------------------------------------------------------------------
# balls


@dataclass(frozen=True)
class BallView:
    center: int
    radius: int
    graph: RootedGraph
    vertex_map: np.ndarray  # ball vertex id -> parent graph vertex id
    dist: np.ndarray  # distance of each ball vertex from the centre

    def is_tree(self) -> bool:
        return self.graph.is_tree()


def ball(g: RootedGraph, v: int, t: int) -> BallView:
    """Induced subgraph on all vertices within distance ``t`` of ``v``."""
    if not 0 <= v < g.n:
        raise ValueError(f"vertex {v} out of range for n={g.n}")
    if t < 0:
        raise ValueError("radius must be non-negative")
    order, dist, _ = bfs(g, v, radius=t)
    local = {int(u): k for k, u in enumerate(order)}
    edges = []
    indptr, indices = g.indptr, g.indices
    for u in order:
        lu = local[int(u)]
        loops = 0
        for w in indices[indptr[u]:indptr[u + 1]]:
            lw = local.get(int(w))
            if lw is None:
                continue
            if w == u:
                loops += 1
                if loops % 2 == 0:
                    edges.append((lu, lu))
            elif u < w:
                edges.append((lu, lw))
    types = None if g.types is None else g.types[order]
    sub = RootedGraph(len(order), np.asarray(edges, dtype=np.int64).reshape(-1, 2), 0, types)
    return BallView(v, t, sub, order, dist[order])


def uniform_sparseness_stat(g: RootedGraph, ell: int) -> float:
    """``(1/n) sum_i deg_i 1{deg_i >= ell}``."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    deg = g.degrees
    return float(np.sum(deg[deg >= ell]) / g.n)


# ---------------------------------------------------------------------------
# canonical codes


def _labels(g: RootedGraph, marks) -> list[str]:
    out = []
    for v in range(g.n):
        s = "" if g.types is None else f"t{int(g.types[v])}"
        if marks is not None:
            s += "+" if marks[v] > 0 else "-"
        out.append(s)
    return out


def _tree_code(g: RootedGraph, labels: list[str]) -> bytes:
    order, _, parent = bfs(g, g.root)
    codes: list[str | None] = [None] * g.n
    kids: list[list[str]] = [[] for _ in range(g.n)]
    for v in order[::-1]:
        codes[v] = "(" + labels[v] + "".join(sorted(kids[v])) + ")"
        if parent[v] >= 0:
            kids[parent[v]].append(codes[v])
    return b"T" + codes[g.root].encode()


def _refine(cells: list[list[int]], M: np.ndarray) -> list[list[int]]:
    while True:
        out = []
        changed = False
        for cell in cells:
            if len(cell) == 1:
                out.append(cell)
                continue
            sig = {v: tuple(int(M[v, c].sum()) for c in cells) for v in cell}
            keys = sorted(set(sig.values()))
            if len(keys) > 1:
                changed = True
                for key in keys:
                    out.append([v for v in cell if sig[v] == key])
            else:
                out.append(cell)
        cells = out
        if not changed:
            return cells


def _orbits(n: int, gens: list[np.ndarray]) -> np.ndarray:
    comp = np.arange(n)

    def find(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a

    for g in gens:
        for a in range(n):
            ra, rb = find(a), find(int(g[a]))
            if ra != rb:
                comp[max(ra, rb)] = min(ra, rb)
    return np.array([find(a) for a in range(n)])


def _general_code(g: RootedGraph, labels: list[str]) -> bytes:
    n = g.n
    M = np.zeros((n, n), dtype=np.int64)
    for i, j in g.edges:
        M[i, j] += 1
        if i != j:
            M[j, i] += 1
    dist = bfs(g, g.root)[1]
    colour = [(int(dist[v]), v != g.root, labels[v]) for v in range(n)]
    keys = sorted(set(colour))
    cells = [[v for v in range(n) if colour[v] == key] for key in keys]
    state = {"best": None, "order": None}
    autos: list[np.ndarray] = []

    def leaf(order):
        P = M[np.ix_(order, order)]
        code = (tuple(colour[v] for v in order), tuple(P[np.triu_indices(n)].tolist()))
        if state["best"] is None or code < state["best"]:
            state["best"], state["order"] = code, order
        elif code == state["best"]:
            perm = np.empty(n, dtype=np.int64)
            perm[state["order"]] = order
            autos.append(perm)

    def search(cells, path):
        cells = _refine(cells, M)
        if len(cells) == n:
            leaf([c[0] for c in cells])
            return
        idx = next(k for k, c in enumerate(cells) if len(c) > 1)
        explored = []
        for v in cells[idx]:
            if explored:
                stab = [a for a in autos if all(a[p] == p for p in path)]
                if stab:
                    orb = _orbits(n, stab)
                    if orb[v] in {orb[u] for u in explored}:
                        continue
            explored.append(v)
            rest = [u for u in cells[idx] if u != v]
            search(cells[:idx] + [[v], rest] + cells[idx + 1:], path + [v])

    search(cells, [])
    return b"G" + repr(state["best"]).encode()


def canonical_code(g: RootedGraph, marks=None) -> bytes:
    """Rooted-isomorphism invariant byte string.

    Trees use a recursive sorted-children encoding; other graphs are
    canonically labelled by individualisation-refinement (``n <= 12``).
    Vertex types and optional ``marks`` (spins) are part of the code.
    """
    labels = _labels(g, marks)
    if g.is_tree():
        return _tree_code(g, labels)
    if g.n > MAX_GENERAL_CANON:
        raise ValueError(
            f"canonical code of a non-tree with {g.n} > {MAX_GENERAL_CANON} vertices"
        )
    return _general_code(g, labels)


def empirical_ball_law(g: RootedGraph, t: int) -> dict[bytes, float]:
    """Frequency of each rooted ball isomorphism class over all centres."""
    counts = Counter(canonical_code(ball(g, v, t).graph) for v in range(g.n))
    return {code: c / g.n for code, c in counts.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = sorted(set(p) | set(q))  # fixed order keeps the float sum reproducible
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# text format


def write_graph(g: RootedGraph, path) -> None:
    """Write ``n m [typed]``, one ``i j`` line per edge, then ``type i q`` lines."""
    lines = [f"{g.n} {g.m}" + (" typed" if g.types is not None else "")]
    lines += [f"{i} {j}" for i, j in g.edges]
    if g.types is not None:
        lines += [f"type {v} {int(q)}" for v, q in enumerate(g.types)]
    if g.root != 0:
        lines.append(f"root {g.root}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> RootedGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError("empty graph file")
    head = rows[0]
    n, m = int(head[0]), int(head[1])
    typed = len(head) > 2 and head[2] == "typed"
    edges, root = [], 0
    types = np.zeros(n, dtype=np.int64) if typed else None
    for row in rows[1:]:
        if row[0] == "type":
            types[int(row[1])] = int(row[2])
        elif row[0] == "root":
            root = int(row[1])
        else:
            edges.append((int(row[0]), int(row[1])))
    if len(edges) != m:
        raise ValueError(f"header declares {m} edges, found {len(edges)}")
    return from_edges(n, edges, root, types)
