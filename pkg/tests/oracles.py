"""Independent reference implementations used as test oracles.

Nothing here shares code with the package under test.  The cache reference
is deliberately naive: it keeps a last-access stamp per line and scans every
resident line to find a victim.
"""
from __future__ import annotations

import heapq
from collections import deque

import numpy as np
from numba import njit

# trace opcodes
OP_READ, OP_WRITE, OP_PIN, OP_UNPIN, OP_FREE, OP_FLUSH, OP_RESET = range(7)


@njit(cache=True)
def reference_cache(ops, bases, ebs, lens, line_bytes, capacity, policy, read_cap):
    """Replay `ops` (rows of op, handle, index, count); return (rt, wt).

    policy 0 = classic, 1 = split pool, 2 = static pin.  Line ids are
    recomputed from byte addresses for every access.
    """
    nlines = 0
    for h in range(bases.shape[0]):
        end = (bases[h] + lens[h] * ebs[h] + line_bytes - 1) // line_bytes
        if end > nlines:
            nlines = end
    resident = np.zeros(nlines + 1, np.bool_)
    dirty = np.zeros(nlines + 1, np.bool_)
    pool = np.zeros(nlines + 1, np.int64)
    stamp = np.zeros(nlines + 1, np.int64)
    pinned = np.zeros(nlines + 1, np.bool_)
    clock = 0
    rt = 0
    wt = 0
    for row in range(ops.shape[0]):
        op = ops[row, 0]
        h = ops[row, 1]
        i = ops[row, 2]
        cnt = ops[row, 3]
        if op == 0 or op == 1:
            w = op == 1
            a = bases[h] + i * ebs[h]
            for line in range(a // line_bytes, (a + ebs[h] - 1) // line_bytes + 1):
                clock += 1
                if resident[line]:
                    stamp[line] = clock
                    if w:
                        dirty[line] = True
                    continue
                if policy == 2 and pinned[line]:
                    p = 2
                elif policy == 1 and w:
                    p = 1
                else:
                    p = 0
                if p != 2:
                    if policy == 1:
                        cap = read_cap if p == 0 else capacity - read_cap
                    else:
                        cap = capacity - pinned.sum() if policy == 2 else capacity
                    while True:
                        size = 0
                        victim = -1
                        best = 1 << 62
                        for x in range(nlines):
                            if resident[x] and pool[x] == p:
                                size += 1
                                if stamp[x] < best:
                                    best = stamp[x]
                                    victim = x
                        if size < cap:
                            break
                        resident[victim] = False
                        if dirty[victim]:
                            wt += 1
                        dirty[victim] = False
                rt += 1
                resident[line] = True
                dirty[line] = w
                pool[line] = p
                stamp[line] = clock
        elif op == 2 or op == 3:
            a0 = bases[h] + i * ebs[h]
            a1 = bases[h] + (i + cnt) * ebs[h] - 1
            for line in range(a0 // line_bytes, a1 // line_bytes + 1):
                if op == 2 and not pinned[line]:
                    pinned[line] = True
                    if resident[line]:
                        pool[line] = 2
                elif op == 3 and pinned[line]:
                    pinned[line] = False
                    if resident[line]:
                        pool[line] = 0
                        clock += 1
                        stamp[line] = clock
            if op == 2:
                cap = capacity - pinned.sum()
                while True:
                    size = 0
                    victim = -1
                    best = 1 << 62
                    for x in range(nlines):
                        if resident[x] and pool[x] == 0:
                            size += 1
                            if stamp[x] < best:
                                best = stamp[x]
                                victim = x
                    if size <= cap:
                        break
                    resident[victim] = False
                    if dirty[victim]:
                        wt += 1
                    dirty[victim] = False
        elif op == 4:
            a0 = bases[h]
            a1 = bases[h] + lens[h] * ebs[h] - 1
            for line in range(a0 // line_bytes, a1 // line_bytes + 1):
                resident[line] = False
                dirty[line] = False
                pinned[line] = False
        elif op == 5:
            for x in range(nlines):
                if resident[x] and dirty[x]:
                    wt += 1
                resident[x] = False
                dirty[x] = False
        else:
            resident[:] = False
            dirty[:] = False
            rt = 0
            wt = 0
    for x in range(nlines):
        if resident[x] and dirty[x]:
            wt += 1
    return rt, wt


def bfs_reference(n, edges, s):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    dist = [-1] * n
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def bellman_ford(n, wedges, s):
    inf = float("inf")
    dist = [inf] * n
    dist[s] = 0
    for _ in range(n):
        changed = False
        for u, v, w in wedges:
            for a, b in ((u, v), (v, u)):
                if dist[a] + w < dist[b]:
                    dist[b] = dist[a] + w
                    changed = True
        if not changed:
            break
    return dist


def brute_treap(pairs):
    """Unique treap for (key, priority) pairs, built top-down by priority.

    Returns nested tuples (key, left, right).  Ties on priority break by key,
    larger key wins, matching a total order on (priority, key).
    """
    items = sorted(pairs)

    def build(lo, hi):
        if lo >= hi:
            return None
        j = max(range(lo, hi), key=lambda t: (items[t][1], items[t][0]))
        return (items[j][0], build(lo, j), build(j + 1, hi))

    return build(0, len(items))


def heap_dijkstra_reference(n, wedges, s):
    adj = [[] for _ in range(n)]
    for u, v, w in wedges:
        adj[u].append((v, w))
        adj[v].append((u, w))
    dist = [float("inf")] * n
    dist[s] = 0
    pq = [(0, s)]
    while pq:
        d, u = heapq.heappop(pq)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            if d + w < dist[v]:
                dist[v] = d + w
                heapq.heappush(pq, (d + w, v))
    return dist


M64 = (1 << 64) - 1


def splitmix(x):
    z = (x + 0x9E3779B97F4A7C15) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


class RefKLevel:
    """Plain-list k-level table: linear probing, backward-shift delete.

    Written from the algorithm description with its own copy of the hash so
    slot layouts, level counts and reinsertion totals can be compared exactly.
    """

    def __init__(self, k, l=0.2, r=0.8, c_prime=5, seed=0, salted=False):
        self.l, self.r, self.seed, self.salted = l, r, seed, salted
        self.floor = c_prime + 1
        self.exps = list(range(c_prime + 1, c_prime + 1 + k))
        self.slots = [[None] * (1 << e) for e in self.exps]
        self.reinserts = 0

    def home(self, x, e):
        if self.salted:
            z = splitmix(x ^ splitmix((self.seed + e) & M64))
        else:
            z = splitmix(x ^ self.seed)
        return z & ((1 << e) - 1)

    @property
    def sets(self):
        return [{v for v in lv if v is not None} for lv in self.slots]

    def total(self):
        return sum(1 << e for e in self.exps)

    def count(self):
        return sum(len(lv) - lv.count(None) for lv in self.slots)

    def _place(self, x):
        for e, lv in zip(self.exps, self.slots):
            if len(lv) - lv.count(None) + 1 <= self.r * (1 << e):
                p = self.home(x, e)
                while lv[p] is not None:
                    p = (p + 1) % len(lv)
                lv[p] = x
                return True
        return False

    def insert(self, x):
        if self._place(x):
            return
        old = self.slots.pop(0)
        self.exps = self.exps[1:] + [self.exps[-1] + 1]
        self.slots.append([None] * (1 << self.exps[-1]))
        self._drain(old)
        assert self._place(x)

    def _drain(self, old):
        for y in old:
            if y is not None:
                assert self._place(y)
                self.reinserts += 1

    def delete(self, x):
        for e, lv in zip(self.exps, self.slots):
            if x in lv:
                break
        else:
            raise KeyError(x)
        n = len(lv)
        hole = lv.index(x)
        lv[hole] = None
        j = hole
        while True:
            j = (j + 1) % n
            if lv[j] is None:
                break
            # distance from home decides whether the entry may fill the hole
            if (j - self.home(lv[j], e)) % n >= (j - hole) % n:
                lv[hole], lv[j] = lv[j], None
                hole = j
        if self.count() < self.l * self.total() and self.exps[0] > self.floor:
            old = self.slots.pop()
            self.exps = [self.exps[0] - 1] + self.exps[:-1]
            self.slots.insert(0, [None] * (1 << self.exps[0]))
            self._drain(old)

    def keys(self):
        return set().union(*self.sets)


def audit_tree(key, left, right, bal, root, scheme):
    """Check BST order and the scheme invariant; return the in-order keys.

    scheme 0 = AVL (bal is height), 1 = red-black (bal is bh << 1 | red),
    2 = treap (bal is priority, ties broken by key).
    """
    out = []

    def walk(x, lo, hi):
        if x < 0:
            return 0, 0
        k = key[x]
        assert (lo is None or k > lo) and (hi is None or k < hi), "order"
        l, r = left[x], right[x]
        hl, bl = walk(l, lo, k)
        out.append(k)
        hr, br = walk(r, k, hi)
        h = max(hl, hr) + 1
        if scheme == 0:
            assert abs(hl - hr) <= 1, "avl balance"
            assert bal[x] == h, "avl height"
        elif scheme == 1:
            red = bal[x] & 1
            assert bl == br, "black height"
            if red:
                for c in (l, r):
                    assert c < 0 or not bal[c] & 1, "red-red"
            b = bl + (0 if red else 1)
            assert bal[x] >> 1 == b, "stored black height"
            return h, b
        else:
            for c in (l, r):
                if c >= 0:
                    assert (bal[c], key[c]) < (bal[x], k), "heap order"
        return h, 0

    walk(root, None, None)
    return out
