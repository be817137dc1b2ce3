"""Graph inputs and traversal kernels: BFS variants and Dijkstra variants.

Graphs are undirected CSR structures (every edge stored in both directions)
held as plain numpy arrays; each query lays them out in tracked memory of the
simulator it runs on.  Offsets and vertex ids (adjacency entries, queues) take
8 bytes and weights 4 bytes.  Frontier hash sets hold 4-byte ids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from numba import njit

from .khash import EMPTY, HashParams, new_core
from .memsim import Policy, Simulator

INF = np.iinfo(np.int64).max
MAX_WEIGHT = 10_000
OFFSET_BYTES = 8
VERTEX_BYTES = 8
WEIGHT_BYTES = 4
DIST_BYTES = 8
SIDE_BIT = 0x80000000  # marks vertices owned by the search from t
_LOW = 0x7FFFFFFF


@dataclass
class Graph:
    n: int
    offsets: np.ndarray  # int64, n + 1
    targets: np.ndarray  # int32 storage, 2m
    weights: np.ndarray | None = None  # int32, 2m, symmetric
    _symmetric: bool | None = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.targets) // 2

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v]:self.offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as rows (u, v) with u < v."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.offsets))
        keep = src < self.targets
        return np.stack([src[keep], self.targets[keep].astype(np.int64)], axis=1)

    def weighted_edges(self) -> np.ndarray:
        """Rows (u, v, w) with u < v."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.offsets))
        keep = src < self.targets
        return np.stack([src[keep], self.targets[keep].astype(np.int64),
                         self.weights[keep].astype(np.int64)], axis=1)

    def bind(self, sim: Simulator) -> "BoundGraph":
        ho = sim.alloc_array(self.n + 1, OFFSET_BYTES)
        ht = sim.alloc_array(len(self.targets), VERTEX_BYTES)
        hw = sim.alloc_array(len(self.targets) if self.weights is not None else 0, WEIGHT_BYTES)
        return BoundGraph(sim, ho.handle, ht.handle, hw.handle)


@dataclass
class BoundGraph:
    sim: Simulator
    ho: int
    ht: int
    hw: int

    def release(self) -> None:
        for h in (self.ho, self.ht, self.hw):
            self.sim.core.free(h)


def from_edges(n: int, u, v) -> Graph:
    """Symmetrized CSR graph; self-loops and duplicates are dropped."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if n >= _LOW:
        raise OverflowError("vertex ids must fit in 31 bits")
    keep = u != v
    a = np.concatenate([u[keep], v[keep]])
    b = np.concatenate([v[keep], u[keep]])
    code = np.unique(a * n + b)
    src = code // n
    dst = code % n
    if len(dst) >= 2**63 - 1:
        raise OverflowError("edge count overflow")
    offsets = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return Graph(n, offsets, dst.astype(np.int32))


def gen_grid(*sides: int) -> Graph:
    """2D or 3D lattice with row-major vertex ids and no wraparound."""
    if len(sides) not in (2, 3) or min(sides) < 1:
        raise ValueError("gen_grid takes two or three positive side lengths")
    n = math.prod(sides)
    ids = np.arange(n, dtype=np.int64).reshape(sides)
    us, vs = [], []
    for axis in range(len(sides)):
        lo = [slice(None)] * len(sides)
        hi = [slice(None)] * len(sides)
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        us.append(ids[tuple(lo)].ravel())
        vs.append(ids[tuple(hi)].ravel())
    return from_edges(n, np.concatenate(us), np.concatenate(vs))


def relabel(g: Graph, seed: int = 0) -> Graph:
    """Copy of g with vertex ids randomly permuted; weights follow their edges."""
    perm = np.random.default_rng(seed).permutation(g.n)
    src = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.offsets))
    u, v = perm[src], perm[g.targets]
    order = np.lexsort((v, u))
    offsets = np.zeros(g.n + 1, np.int64)
    np.cumsum(np.bincount(u, minlength=g.n), out=offsets[1:])
    w = None if g.weights is None else g.weights[order]
    return Graph(g.n, offsets, v[order].astype(np.int32), w)


def gen_powerlaw(n: int, avg_degree: float = 8.0, gamma: float = 2.3, seed: int = 0) -> Graph:
    """Chung-Lu graph with a power-law expected degree sequence.

    Vertex ids are shuffled so that heavy vertices are not clustered at the
    front of the arrays.
    """
    rng = np.random.default_rng(seed)
    w = (np.arange(n) + 10.0) ** (-1.0 / (gamma - 1.0))
    p = w / w.sum()
    m = int(n * avg_degree / 2)
    u = rng.choice(n, m, p=p)
    v = rng.choice(n, m, p=p)
    perm = rng.permutation(n)
    return from_edges(n, perm[u], perm[v])


def load_snap(path) -> Graph:
    """Read a whitespace-separated edge list; ``#`` lines are comments.

    Ids are relabelled densely in order of first appearance.
    """
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            try:
                if len(parts) < 2:
                    raise ValueError
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected two integer ids, got {s!r}") from None
    if not pairs:
        return Graph(0, np.zeros(1, np.int64), np.zeros(0, np.int32))
    flat = np.asarray(pairs, dtype=np.int64).ravel()
    uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    ids = rank[inv].reshape(-1, 2)
    return from_edges(len(uniq), ids[:, 0], ids[:, 1])


def write_snap(g: Graph, path) -> None:
    e = g.edges()
    with open(path, "w") as fh:
        fh.write(f"# Nodes: {g.n} Edges: {len(e)}\n")
        np.savetxt(fh, e, fmt="%d", delimiter="\t")


def assign_weights(g: Graph, seed: int = 0) -> None:
    """One uniform weight in [1, 10000] per undirected edge, both directions."""
    if g.weights is not None:
        raise ValueError("graph is already weighted")
    src = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.offsets))
    dst = g.targets.astype(np.int64)
    code = np.minimum(src, dst) * max(g.n, 1) + np.maximum(src, dst)
    uniq, inv = np.unique(code, return_inverse=True)
    w = np.random.default_rng(seed).integers(1, MAX_WEIGHT + 1, len(uniq))
    g.weights = w[inv].astype(np.int32)


def is_symmetric(g: Graph) -> bool:
    src = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.offsets))
    fwd = src * g.n + g.targets
    bwd = g.targets.astype(np.int64) * g.n + src
    if not np.array_equal(np.sort(fwd), np.sort(bwd)):
        return False
    if g.weights is None:
        return True
    a = np.lexsort((g.targets, src))
    b = np.lexsort((src, g.targets))
    return bool(np.array_equal(g.weights[a], g.weights[b]))


# -- BFS ---------------------------------------------------------------------------


@njit(cache=True)
def _bfs_classic(sim, ho, off, ht, tgt, s, hd, dist, hq, q):
    n = off.shape[0] - 1
    for v in range(n):
        sim.write(hd, v)
        dist[v] = INF
    sim.write(hd, s)
    dist[s] = 0
    sim.write(hq, 0)
    q[0] = s
    head = 0
    tail = 1
    while head < tail:
        sim.read(hq, head)
        u = q[head]
        head += 1
        sim.read(hd, u)
        du = dist[u]
        sim.read(ho, u)
        sim.read(ho, u + 1)
        for e in range(off[u], off[u + 1]):
            sim.read(ht, e)
            v = tgt[e]
            sim.read(hd, v)
            if dist[v] == INF:
                sim.write(hd, v)
                dist[v] = du + 1
                sim.write(hq, tail)
                q[tail] = v
                tail += 1
    return tail


def _frontier(sim: Simulator, key_mask: int = EMPTY):
    return new_core(sim, HashParams(k=2), key_mask)


@njit
def _pick(i, a, b, c):
    if i == 0:
        return a
    if i == 1:
        return b
    return c


@njit(cache=True)
def _bfs_rotating(sim, ho, off, ht, tgt, s, f0, f1, f2, dist):
    """Three rotating frontier sets; returns (levels, max frontier, visited)."""
    prev, cur, nxt = 2, 0, 1
    f0.insert(s)
    dist[s] = 0
    depth = 0
    widest = 1
    seen = 1
    while True:
        fc = _pick(cur, f0, f1, f2)
        fp = _pick(prev, f0, f1, f2)
        fn = _pick(nxt, f0, f1, f2)
        added = 0
        for i in range(fc.k):
            for p in range(fc.level_cap(i)):
                u = fc.read_slot(i, p)
                if u == EMPTY:
                    continue
                sim.read(ho, u)
                sim.read(ho, u + 1)
                for e in range(off[u], off[u + 1]):
                    sim.read(ht, e)
                    v = tgt[e]
                    if fp.lookup(v) >= 0 or fc.lookup(v) >= 0 or fn.lookup(v) >= 0:
                        continue
                    fn.insert(v)
                    dist[v] = depth + 1
                    added += 1
        if added == 0:
            return depth + 1, widest, seen
        depth += 1
        seen += added
        widest = max(widest, added)
        # the finished previous frontier becomes the next one's storage
        fp.clear()
        prev, cur, nxt = cur, nxt, prev


@njit(cache=True)
def _bibfs_classic(sim, ho, off, ht, tgt, s, t, hm, mark, hq, qs, qt):
    """mark[v] = d+1 for the s side, -(d+1) for the t side, 0 unvisited."""
    n = off.shape[0] - 1
    for v in range(n):
        sim.write(hm, v)
        mark[v] = 0
    sim.write(hm, s)
    mark[s] = 1
    sim.write(hm, t)
    mark[t] = -1
    sim.write(hq[0], 0)
    qs[0] = s
    sim.write(hq[1], 0)
    qt[0] = t
    # [head, level end, tail] per side
    bounds = np.array([[0, 1, 1], [0, 1, 1]], np.int64)
    depth = np.zeros(2, np.int64)
    while True:
        side = 0 if bounds[0, 1] - bounds[0, 0] <= bounds[1, 1] - bounds[1, 0] else 1
        if bounds[side, 1] == bounds[side, 0]:
            return -1
        q = qs if side == 0 else qt
        h = hq[side]
        sgn = 1 if side == 0 else -1
        best = INF
        for j in range(bounds[side, 0], bounds[side, 1]):
            sim.read(h, j)
            u = q[j]
            sim.read(ho, u)
            sim.read(ho, u + 1)
            for e in range(off[u], off[u + 1]):
                sim.read(ht, e)
                v = tgt[e]
                sim.read(hm, v)
                mv = mark[v]
                if mv == 0:
                    sim.write(hm, v)
                    mark[v] = sgn * (depth[side] + 2)
                    sim.write(h, bounds[side, 2])
                    q[bounds[side, 2]] = v
                    bounds[side, 2] += 1
                elif mv * sgn < 0:
                    best = min(best, depth[side] + 1 + abs(mv) - 1)
        if best < INF:
            return best
        bounds[side, 0] = bounds[side, 1]
        bounds[side, 1] = bounds[side, 2]
        depth[side] += 1


@njit(cache=True)
def _bibfs_rotating(sim, ho, off, ht, tgt, s, t, f0, f1, f2):
    # role[side] = (prev, cur); lvl[side, set] = depth of that side's entries there
    role = np.array([[2, 0], [2, 0]], np.int64)
    lvl = np.full((2, 3), -1, np.int64)
    lvl[0, 0] = 0
    lvl[1, 0] = 0
    size = np.ones(2, np.int64)
    depth = np.zeros(2, np.int64)
    f0.insert(s)
    f0.insert(t | SIDE_BIT)
    while True:
        side = 0 if size[0] <= size[1] else 1
        if size[side] == 0:
            return -1
        tag = np.uint32(SIDE_BIT if side == 1 else 0)
        prev = role[side, 0]
        cur = role[side, 1]
        nxt = 3 - prev - cur
        fc = _pick(cur, f0, f1, f2)
        fn = _pick(nxt, f0, f1, f2)
        if lvl[side, nxt] >= 0:
            fn.purge(SIDE_BIT, tag)
        lvl[side, nxt] = depth[side] + 1
        best = INF
        added = 0
        for i in range(fc.k):
            for p in range(fc.level_cap(i)):
                w = fc.read_slot(i, p)
                if w == EMPTY or (w & np.uint32(SIDE_BIT)) != tag:
                    continue
                u = w & np.uint32(_LOW)
                sim.read(ho, u)
                sim.read(ho, u + 1)
                for e in range(off[u], off[u + 1]):
                    sim.read(ht, e)
                    v = tgt[e]
                    owner = -1
                    where = -1
                    for j in range(3):
                        fj = _pick(j, f0, f1, f2)
                        if fj.lookup(v) >= 0:
                            owner = 1 if fj.last_word & np.uint32(SIDE_BIT) else 0
                            where = j
                            break
                    if owner < 0:
                        fn.insert(v | tag)
                        added += 1
                    elif owner != side:
                        best = min(best, depth[side] + 1 + lvl[owner, where])
        if best < INF:
            return best
        role[side, 0] = cur
        role[side, 1] = nxt
        depth[side] += 1
        size[side] = added


class Flavor(IntEnum):
    CLASSIC = 0
    ROTATING = 1


@dataclass
class BfsStats:
    levels: int = 0
    max_frontier: int = 0
    visited: int = 0


def _dist_out(dist: np.ndarray) -> np.ndarray:
    return dist.copy()


def bfs_classic(sim: Simulator, g: Graph, s: int) -> np.ndarray:
    """Queue plus distance array; the distance doubles as the visited flag."""
    _check_vertex(g, s)
    bg = g.bind(sim)
    hd = sim.alloc_array(g.n, DIST_BYTES)
    hq = sim.alloc_array(g.n, VERTEX_BYTES)
    dist = np.empty(g.n, np.int64)
    q = np.empty(g.n, np.int64)
    _bfs_classic(sim.core, bg.ho, g.offsets, bg.ht, g.targets, s, hd.handle, dist, hq.handle, q)
    sim.free_array(hd)
    sim.free_array(hq)
    bg.release()
    return dist


def bfs_rotating(sim: Simulator, g: Graph, s: int, stats: BfsStats | None = None) -> np.ndarray:
    """Level-synchronous BFS that keeps only three frontier hash sets.

    The returned distances are recorded outside simulated memory; the
    algorithm itself never stores them.
    """
    _check_vertex(g, s)
    _check_undirected(g)
    bg = g.bind(sim)
    sets = [_frontier(sim) for _ in range(3)]
    dist = np.full(g.n, INF, np.int64)
    levels, widest, seen = _bfs_rotating(sim.core, bg.ho, g.offsets, bg.ht, g.targets, s, *sets, dist)
    for f in sets:
        f.free_all()
    bg.release()
    if stats is not None:
        stats.levels, stats.max_frontier, stats.visited = int(levels), int(widest), int(seen)
    return dist


def bfs_bidirectional(sim: Simulator, g: Graph, s: int, t: int,
                      flavor: Flavor = Flavor.ROTATING) -> int | None:
    """Hop distance from s to t, or None when t is unreachable."""
    _check_vertex(g, s)
    _check_vertex(g, t)
    if s == t:
        return 0
    _check_undirected(g)
    bg = g.bind(sim)
    if Flavor(flavor) == Flavor.CLASSIC:
        hm = sim.alloc_array(g.n, DIST_BYTES)
        hqs = sim.alloc_array(g.n, VERTEX_BYTES)
        hqt = sim.alloc_array(g.n, VERTEX_BYTES)
        d = _bibfs_classic(sim.core, bg.ho, g.offsets, bg.ht, g.targets, s, t, hm.handle,
                           np.empty(g.n, np.int64), np.array([hqs.handle, hqt.handle]),
                           np.empty(g.n, np.int64), np.empty(g.n, np.int64))
        for a in (hm, hqs, hqt):
            sim.free_array(a)
    else:
        sets = [_frontier(sim, _LOW) for _ in range(3)]
        d = _bibfs_rotating(sim.core, bg.ho, g.offsets, bg.ht, g.targets, s, t, *sets)
        for f in sets:
            f.free_all()
    bg.release()
    return None if d < 0 else int(d)


def _check_undirected(g: Graph) -> None:
    if g._symmetric is None:
        g._symmetric = is_symmetric(g)
    if not g._symmetric:
        raise ValueError("frontier-based BFS needs a symmetric (undirected) adjacency")


def _check_vertex(g: Graph, v: int) -> None:
    if not 0 <= v < g.n:
        raise IndexError(f"vertex {v} out of range for a graph with {g.n} vertices")


# -- Dijkstra ----------------------------------------------------------------------


@njit(cache=True)
def _heap_less(sim, hd, dist, a, b):
    sim.read(hd, a)
    sim.read(hd, b)
    return dist[a] < dist[b]


@njit(cache=True)
def _sift_up(sim, hh, heap, hp, pos, hd, dist, i):
    sim.read(hh, i)
    v = heap[i]
    while i > 0:
        j = (i - 1) >> 1
        sim.read(hh, j)
        u = heap[j]
        if not _heap_less(sim, hd, dist, v, u):
            break
        sim.write(hh, i)
        heap[i] = u
        sim.write(hp, u)
        pos[u] = i
        i = j
    sim.write(hh, i)
    heap[i] = v
    sim.write(hp, v)
    pos[v] = i


@njit(cache=True)
def _sift_down(sim, hh, heap, hp, pos, hd, dist, i, size):
    sim.read(hh, i)
    v = heap[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        sim.read(hh, c)
        if c + 1 < size:
            sim.read(hh, c + 1)
            if _heap_less(sim, hd, dist, heap[c + 1], heap[c]):
                c += 1
        u = heap[c]
        if not _heap_less(sim, hd, dist, u, v):
            break
        sim.write(hh, i)
        heap[i] = u
        sim.write(hp, u)
        pos[u] = i
        i = c
    sim.write(hh, i)
    heap[i] = v
    sim.write(hp, v)
    pos[v] = i


@njit(cache=True)
def _dijkstra_heap(sim, ho, off, ht, tgt, hw, wts, s, hd, dist, hh, heap, hp, pos):
    n = off.shape[0] - 1
    for v in range(n):
        sim.write(hd, v)
        dist[v] = INF
    sim.write(hd, s)
    dist[s] = 0
    size = 1
    sim.write(hh, 0)
    heap[0] = s
    sim.write(hp, s)
    pos[s] = 0
    while size > 0:
        sim.read(hh, 0)
        u = heap[0]
        size -= 1
        if size > 0:
            sim.read(hh, size)
            sim.write(hh, 0)
            heap[0] = heap[size]
            _sift_down(sim, hh, heap, hp, pos, hd, dist, 0, size)
        sim.write(hp, u)
        pos[u] = -1  # finalized
        sim.read(hd, u)
        du = dist[u]
        sim.read(ho, u)
        sim.read(ho, u + 1)
        for e in range(off[u], off[u + 1]):
            sim.read(ht, e)
            sim.read(hw, e)
            v = tgt[e]
            nd = du + wts[e]
            sim.read(hd, v)
            if dist[v] == INF:
                sim.write(hd, v)
                dist[v] = nd
                sim.write(hh, size)
                heap[size] = v
                size += 1
                _sift_up(sim, hh, heap, hp, pos, hd, dist, size - 1)
            elif nd < dist[v]:
                sim.read(hp, v)
                if pos[v] >= 0:
                    sim.write(hd, v)
                    dist[v] = nd
                    _sift_up(sim, hh, heap, hp, pos, hd, dist, pos[v])


def _check_weights(g: Graph) -> None:
    if g.weights is None:
        raise ValueError("graph has no weights; call assign_weights first")
    if len(g.weights) and g.weights.min() < 0:
        raise ValueError("negative edge weight")


def dijkstra_heap(sim: Simulator, g: Graph, s: int) -> np.ndarray:
    """Binary heap of vertex ids with a global position array for decrease-key."""
    _check_vertex(g, s)
    _check_weights(g)
    bg = g.bind(sim)
    hd = sim.alloc_array(g.n, DIST_BYTES)
    hh = sim.alloc_array(g.n, VERTEX_BYTES)
    hp = sim.alloc_array(g.n, 4)
    dist = np.empty(g.n, np.int64)
    _dijkstra_heap(sim.core, bg.ho, g.offsets, bg.ht, g.targets, bg.hw, g.weights, s,
                   hd.handle, dist, hh.handle, np.empty(g.n, np.int64), hp.handle,
                   np.empty(g.n, np.int64))
    for a in (hd, hh, hp):
        sim.free_array(a)
    bg.release()
    return dist


@dataclass(frozen=True)
class PhasedParams:
    m_prime: int | None = None  # derived from the cache when None
    epsilon: float = 0.25
    pq_cache_fraction: float = 0.4

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 < self.pq_cache_fraction < 1:
            raise ValueError("pq_cache_fraction must lie in (0, 1)")
        if self.m_prime is not None and self.m_prime < 1:
            raise ValueError("m_prime must be positive")

    def resolve(self, cache_bytes: int) -> int:
        """M': queue entries of 16 bytes plus map slots of 4 bytes at occupancy 0.8."""
        if self.m_prime is not None:
            return self.m_prime
        return max(1, int(self.pq_cache_fraction * cache_bytes / (PQ_ENTRY_BYTES + MAP_SLOT_BYTES / 0.8)))


PQ_ENTRY_BYTES = 16
MAP_SLOT_BYTES = 4


@dataclass
class PhasedStats:
    phases: int = 0
    truncations: int = 0
    max_queue: int = 0
    retired: int = 0


@njit(cache=True)
def _pq_less(pd, a, b):
    return pd[a] < pd[b]


@njit(cache=True)
def _pq_place(sim, hh, pv, pd, where, i, v, d):
    sim.write(hh, i)
    pv[i] = v
    pd[i] = d
    where[v] = i


@njit(cache=True)
def _pq_up(sim, hh, pv, pd, where, i):
    v = pv[i]
    d = pd[i]
    while i > 0:
        j = (i - 1) >> 1
        sim.read(hh, j)
        if pd[j] <= d:
            break
        _pq_place(sim, hh, pv, pd, where, i, pv[j], pd[j])
        i = j
    _pq_place(sim, hh, pv, pd, where, i, v, d)


@njit(cache=True)
def _pq_down(sim, hh, pv, pd, where, i, size):
    sim.read(hh, i)
    v = pv[i]
    d = pd[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        sim.read(hh, c)
        if c + 1 < size:
            sim.read(hh, c + 1)
            if pd[c + 1] < pd[c]:
                c += 1
        if pd[c] >= d:
            break
        _pq_place(sim, hh, pv, pd, where, i, pv[c], pd[c])
        i = c
    _pq_place(sim, hh, pv, pd, where, i, v, d)


@njit(cache=True)
def _pin_map(sim, vm, pinned):
    """Under StaticPin keep the vertex map pinned, level by level, while it fits."""
    if sim.policy != 2:
        return
    for i in range(vm.k):
        h = vm.handles[i]
        if h != pinned[i] and sim.can_pin(h, 0, vm.level_cap(i)):
            sim.pin(h, 0, vm.level_cap(i))
            pinned[i] = h


@njit(cache=True)
def _truncate(sim, hh, pv, pd, where, vm, size, keep):
    """Keep the `keep` smallest entries, rebuild the heap; returns the new d_max."""
    for i in range(size):
        sim.read(hh, i)
    kth = np.partition(pd[:size].copy(), keep - 1)[keep - 1]
    below = 0
    for i in range(size):
        if pd[i] < kth:
            below += 1
    ties = keep - below
    j = 0
    for i in range(size):
        d = pd[i]
        v = pv[i]
        if d < kth or (d == kth and ties > 0):
            if d == kth:
                ties -= 1
            _pq_place(sim, hh, pv, pd, where, j, v, d)
            j += 1
        else:
            vm.delete(v)
            where[v] = -1
    for i in range(keep // 2 - 1, -1, -1):
        _pq_down(sim, hh, pv, pd, where, i, keep)
    return kth


@njit(cache=True)
def _relax(sim, hh, pv, pd, where, vm, pinned, size, v, nd, cap, mp):
    """Insert or decrease v; returns (new size, truncated d_max or -1)."""
    if vm.lookup(v) >= 0:
        i = where[v]
        sim.read(hh, i)
        if nd < pd[i]:
            pd[i] = nd
            _pq_up(sim, hh, pv, pd, where, i)
        return size, -1
    vm.insert(v)
    _pin_map(sim, vm, pinned)
    _pq_place(sim, hh, pv, pd, where, size, v, nd)
    _pq_up(sim, hh, pv, pd, where, size)
    size += 1
    if size >= cap:
        dmax = _truncate(sim, hh, pv, pd, where, vm, size, mp)
        return mp, dmax
    return size, -1


@njit(cache=True)
def _dijkstra_phased(sim, ho, off, ht, tgt, hw, wts, s, hd, dist, hh, pv, pd, where, vm,
                     pinned, mp, cap, info):
    n = off.shape[0] - 1
    for v in range(n):
        sim.write(hd, v)
        dist[v] = INF
    sim.write(hd, s)
    dist[s] = 0
    finished = 1
    phases = 0
    truncations = 0
    retired = 0
    max_q = 0
    while finished < n:
        # seed the queue from the edges of active vertices (dist >= 0, not INF)
        size = 0
        dmax = INF
        for u in range(n):
            sim.read(hd, u)
            du = dist[u]
            if du == INF or du < 0:
                continue
            sim.read(ho, u)
            sim.read(ho, u + 1)
            open_edges = 0
            for e in range(off[u], off[u + 1]):
                sim.read(ht, e)
                v = tgt[e]
                sim.read(hd, v)
                if dist[v] != INF:
                    continue
                open_edges += 1
                sim.read(hw, e)
                nd = du + wts[e]
                if nd < dmax:
                    size, cut = _relax(sim, hh, pv, pd, where, vm, pinned, size, v, nd, cap, mp)
                    if cut >= 0:
                        dmax = cut
                        truncations += 1
            if open_edges == 0:
                sim.write(hd, u)
                dist[u] = -1 - du  # sign bit: every neighbor is finished
                retired += 1
            max_q = max(max_q, size)
        if size == 0:
            break  # only unreachable vertices remain
        phases += 1
        if dmax != INF:
            # tighten the bound to what the truncated queue actually holds
            dmax = pd[0]
            for i in range(1, size):
                dmax = max(dmax, pd[i])
        while size > 0:
            sim.read(hh, 0)
            u = pv[0]
            du = pd[0]
            vm.delete(u)
            where[u] = -1
            size -= 1
            if size > 0:
                sim.read(hh, size)
                _pq_place(sim, hh, pv, pd, where, 0, pv[size], pd[size])
                _pq_down(sim, hh, pv, pd, where, 0, size)
            sim.write(hd, u)
            dist[u] = du
            finished += 1
            sim.read(ho, u)
            sim.read(ho, u + 1)
            for e in range(off[u], off[u + 1]):
                sim.read(ht, e)
                v = tgt[e]
                sim.read(hd, v)
                if dist[v] != INF:
                    continue
                sim.read(hw, e)
                nd = du + wts[e]
                if nd < dmax:
                    size, cut = _relax(sim, hh, pv, pd, where, vm, pinned, size, v, nd, cap, mp)
                    if cut >= 0:
                        dmax = cut
                        truncations += 1
                    max_q = max(max_q, size)
    info[0] = phases
    info[1] = truncations
    info[2] = max_q
    info[3] = retired


def phased_capacity(params: PhasedParams, cache_bytes: int) -> tuple[int, int]:
    """(M', queue capacity (1 + epsilon) M')."""
    mp = params.resolve(cache_bytes)
    return mp, max(mp + 1, int(math.floor((1 + params.epsilon) * mp)))


def dijkstra_phased(sim: Simulator, g: Graph, s: int, params: PhasedParams | None = None,
                    stats: PhasedStats | None = None) -> np.ndarray:
    """Dijkstra with a bounded in-cache queue, run in phases.

    Each phase seeds the queue from the edges of visited vertices, keeping at
    most M' of the closest candidates, then runs Dijkstra until the queue
    drains.  The only large-memory writes are the final distances and the
    sign-bit flips that retire vertices whose neighbors are all finished.
    """
    params = params or PhasedParams()
    _check_vertex(g, s)
    _check_weights(g)
    mp, cap = phased_capacity(params, sim.config.cache_bytes)
    bg = g.bind(sim)
    hd = sim.alloc_array(g.n, DIST_BYTES)
    hh = sim.alloc_array(cap + 1, PQ_ENTRY_BYTES)
    # a cache too small for the queue leaves it to LRU
    if sim.config.policy == Policy.STATIC_PIN and sim.core.can_pin(hh.handle, 0, cap + 1):
        sim.pin_lines(hh, 0, cap + 1)
    vm = new_core(sim, HashParams(k=2))
    pinned = np.full(2, -1, np.int64)
    dist = np.empty(g.n, np.int64)
    info = np.zeros(4, np.int64)
    _dijkstra_phased(sim.core, bg.ho, g.offsets, bg.ht, g.targets, bg.hw, g.weights, s,
                     hd.handle, dist, hh.handle, np.empty(cap + 1, np.int64),
                     np.empty(cap + 1, np.int64), np.full(g.n, -1, np.int64), vm, pinned,
                     mp, cap, info)
    vm.free_all()
    sim.free_array(hh)
    sim.free_array(hd)
    bg.release()
    if stats is not None:
        stats.phases, stats.truncations, stats.max_queue, stats.retired = (int(x) for x in info)
    out = dist.copy()
    neg = out < 0
    out[neg] = -1 - out[neg]
    return out
