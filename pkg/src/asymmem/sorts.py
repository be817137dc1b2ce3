"""Comparison sorts instrumented for read and write transfers.

Four schemes are provided: quicksort, mergesort over two rotating arrays,
two-phase unbalanced BST sort and cache-aware samplesort.  Each sorts either
the records themselves (``Mode.DIRECT``) or an array of 8-byte references to
variable-length records held in a separate payload region
(``Mode.INDIRECT``).  In indirect mode every comparison touches the leading
key bytes of both records.

Working state that a real implementation would keep in cache (recursion
stacks, samples, pivots, bucket counters, the scratch buffer of an in-cache
base case) is held in untracked numpy arrays.  Everything proportional to the
input lives in tracked arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import float64, int64, njit, uint64
from numba.experimental import jitclass

from .khash import mix64
from .memsim import CacheCoreType, IoStats, Simulator, TrackedArray

INSERTION_CUTOFF = 16
SHRINK = 2  # c': samplesort plans with M/c' so its working set stays resident
REF_BYTES = 8


class Mode(IntEnum):
    DIRECT = 0
    INDIRECT = 1


class Algorithm(IntEnum):
    QUICKSORT = 0
    MERGESORT = 1
    BST_SORT = 2
    SAMPLESORT = 3


# -- comparison contexts -------------------------------------------------------

_common = [
    ("sim", CacheCoreType),
    ("comps", int64),
    ("moves", int64),
    ("seed", uint64),
    ("ctr", uint64),
    ("footprint", int64),
]


@jitclass(_common)
class DirectKeys:
    """Values are the keys; records are ``footprint`` bytes wide."""

    def __init__(self, sim, seed, footprint):
        self.sim = sim
        self.comps = 0
        self.moves = 0
        self.seed = uint64(seed)
        self.ctr = uint64(0)
        self.footprint = footprint

    def key(self, x):
        return x

    def less(self, x, y):
        self.comps += 1
        return x < y

    def rand(self, n):
        self.ctr += uint64(1)
        return int64(mix64(self.seed * uint64(0x9E3779B97F4A7C15) + self.ctr) % uint64(n))

    def rd(self, h, a, i):
        self.sim.read(h, i)
        return a[i]

    def wr(self, h, a, i, x):
        self.sim.write(h, i)
        self.moves += 1
        a[i] = x


@jitclass(_common + [("ph", int64), ("poff", int64[:]), ("pkey", float64[:])])
class IndirectKeys:
    """Values are record ids; the key is the first 8 bytes of the record."""

    def __init__(self, sim, seed, footprint, ph, poff, pkey):
        self.sim = sim
        self.comps = 0
        self.moves = 0
        self.seed = uint64(seed)
        self.ctr = uint64(0)
        self.footprint = footprint
        self.ph = ph
        self.poff = poff
        self.pkey = pkey

    def key(self, r):
        if r < 0 or r >= self.pkey.shape[0]:
            raise IndexError("dangling record reference")
        self.sim.touch_bytes(self.ph, self.poff[r], 0, 8, False)
        return self.pkey[r]

    def less(self, x, y):
        self.comps += 1
        return self.key(x) < self.key(y)

    def rand(self, n):
        self.ctr += uint64(1)
        return int64(mix64(self.seed * uint64(0x9E3779B97F4A7C15) + self.ctr) % uint64(n))

    def rd(self, h, a, i):
        self.sim.read(h, i)
        return a[i]

    def wr(self, h, a, i, x):
        self.sim.write(h, i)
        self.moves += 1
        a[i] = x


# -- quicksort -------------------------------------------------------------------


@njit(cache=True)
def _insertion(c, h, a, lo, hi):
    for i in range(lo + 1, hi):
        x = c.rd(h, a, i)
        j = i
        while j > lo:
            y = c.rd(h, a, j - 1)
            if not c.less(x, y):
                break
            c.wr(h, a, j, y)
            j -= 1
        if j != i:
            c.wr(h, a, j, x)


@njit(cache=True)
def _median3(c, h, a, lo, hi):
    x = c.rd(h, a, lo + c.rand(hi - lo))
    y = c.rd(h, a, lo + c.rand(hi - lo))
    z = c.rd(h, a, lo + c.rand(hi - lo))
    if c.less(y, x):
        x, y = y, x
    if c.less(z, y):
        y = z
        if c.less(y, x):
            y = x
    return y


@njit(cache=True)
def _partition(c, h, a, lo, hi, p):
    # three-way scan: [lo,lt) < p, [lt,i) == p, [gt,hi) > p
    lt = lo
    i = lo
    gt = hi
    while i < gt:
        x = c.rd(h, a, i)
        if c.less(x, p):
            if lt != i:
                y = c.rd(h, a, lt)
                c.wr(h, a, lt, x)
                c.wr(h, a, i, y)
            lt += 1
            i += 1
        elif c.less(p, x):
            gt -= 1
            y = c.rd(h, a, gt)
            c.wr(h, a, gt, x)
            c.wr(h, a, i, y)
        else:
            i += 1
    return lt, gt


@njit(cache=True)
def quicksort_range(c, h, a, lo, hi):
    stack = np.empty(256, np.int64)
    top = 0
    stack[0] = lo
    stack[1] = hi
    top = 2
    while top > 0:
        hi = stack[top - 1]
        lo = stack[top - 2]
        top -= 2
        if hi - lo <= INSERTION_CUTOFF:
            _insertion(c, h, a, lo, hi)
            continue
        p = _median3(c, h, a, lo, hi)
        lt, gt = _partition(c, h, a, lo, hi, p)
        if top + 4 > stack.shape[0]:
            grown = np.empty(2 * stack.shape[0], np.int64)
            grown[:top] = stack[:top]
            stack = grown
        # smaller side on top keeps the stack logarithmic
        if lt - lo > hi - gt:
            stack[top], stack[top + 1], stack[top + 2], stack[top + 3] = lo, lt, gt, hi
        else:
            stack[top], stack[top + 1], stack[top + 2], stack[top + 3] = gt, hi, lo, lt
        top += 4


# -- mergesort -------------------------------------------------------------------


@njit(cache=True)
def _merge_into(c, s, lo, mid, hi, d):
    """Untracked merge; one comparison per output element, as with sentinels."""
    i = lo
    j = mid
    for k in range(lo, hi):
        if j >= hi or i >= mid:
            c.comps += 1
            take_left = j >= hi
        else:
            take_left = not c.less(s[j], s[i])
        if take_left:
            d[k] = s[i]
            i += 1
        else:
            d[k] = s[j]
            j += 1


@njit(cache=True)
def _scratch_sort(c, s):
    """Top-down mergesort of an untracked buffer, result left in ``s``."""
    n = s.shape[0]
    if n < 2:
        return
    t = s.copy()
    stack = np.empty((128, 4), np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, 0, 0
    top = 1
    while top > 0:
        top -= 1
        lo, hi, into_t, stage = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        if hi - lo < 2:
            if into_t == 1 and hi > lo:
                t[lo] = s[lo]
            continue
        mid = (lo + hi) // 2
        if stage == 0:
            stack[top, 3] = 1
            stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2], stack[top + 1, 3] = mid, hi, 1 - into_t, 0
            stack[top + 2, 0], stack[top + 2, 1], stack[top + 2, 2], stack[top + 2, 3] = lo, mid, 1 - into_t, 0
            top += 3
        elif into_t == 1:
            _merge_into(c, s, lo, mid, hi, t)
        else:
            _merge_into(c, t, lo, mid, hi, s)


@njit(cache=True)
def _merge_tracked(c, hs, s, hd, d, lo, mid, hi):
    i = lo
    j = mid
    x = c.rd(hs, s, i)
    y = c.rd(hs, s, j)
    for k in range(lo, hi):
        if j >= hi:
            take_left = True
            c.comps += 1
        elif i >= mid:
            take_left = False
            c.comps += 1
        else:
            take_left = not c.less(y, x)
        if take_left:
            c.wr(hd, d, k, x)
            i += 1
            if i < mid:
                x = c.rd(hs, s, i)
        else:
            c.wr(hd, d, k, y)
            j += 1
            if j < hi:
                y = c.rd(hs, s, j)


@njit(cache=True)
def _merge_base(c, ha, a, hd, d, lo, hi):
    """Load a cache-sized run, sort it in cache, store it in the target array."""
    s = np.empty(hi - lo, a.dtype)
    for i in range(lo, hi):
        s[i - lo] = c.rd(ha, a, i)
    _scratch_sort(c, s)
    for i in range(lo, hi):
        c.wr(hd, d, i, s[i - lo])


@njit(cache=True)
def mergesort_kernel(c, h, a, cutoff):
    n = a.shape[0]
    if n <= cutoff:
        _merge_base(c, h, a, h, a, 0, n)
        return
    hb = c.sim.alloc(n, c.sim.arr_eb[h])
    b = np.empty_like(a)
    # frames (lo, hi, result in b?, stage); data never leaves `a` before its
    # base case, so each base reads `a` and writes whichever array its parent
    # merges from
    stack = np.empty((256, 4), np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, 0, 0
    top = 1
    while top > 0:
        top -= 1
        lo, hi, in_b, stage = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        if stage == 0 and hi - lo <= cutoff:
            if in_b == 1:
                _merge_base(c, h, a, hb, b, lo, hi)
            else:
                _merge_base(c, h, a, h, a, lo, hi)
            continue
        mid = (lo + hi) // 2
        if stage == 0:
            stack[top, 3] = 1
            stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2], stack[top + 1, 3] = mid, hi, 1 - in_b, 0
            stack[top + 2, 0], stack[top + 2, 1], stack[top + 2, 2], stack[top + 2, 3] = lo, mid, 1 - in_b, 0
            top += 3
        elif in_b == 1:
            _merge_tracked(c, h, a, hb, b, lo, mid, hi)
        else:
            _merge_tracked(c, hb, b, h, a, lo, mid, hi)
    c.sim.free(hb)


# -- BST sort --------------------------------------------------------------------


@njit(cache=True)
def bst_kernel(c, h, a, vb):
    """Unrotated BST sort; returns (max depth, total depth) with the root at 1.

    A node is the value (``vb`` bytes) followed by two int32 child links.
    """
    n = a.shape[0]
    if n == 0:
        return 0, 0
    sim = c.sim
    hn = sim.alloc(n, vb + 8)
    hf = sim.alloc(n, 1)
    val = np.empty_like(a)
    left = np.full(n, -1, np.int32)
    right = np.full(n, -1, np.int32)
    flag = np.zeros(n, np.uint8)
    for i in range(n):
        val[i] = c.rd(h, a, i)
        sim.write(hn, i)
    root = -1
    max_depth = 0
    total = 0
    for phase in range(2):
        for t in range(n):
            j = c.rand(n) if phase == 0 else t
            sim.read(hf, j)
            if flag[j]:
                continue
            flag[j] = 1
            sim.write(hf, j)
            sim.read(hn, j)
            x = val[j]
            depth = 1
            if root < 0:
                root = j
            else:
                u = root
                while True:
                    sim.read(hn, u)
                    depth += 1
                    if c.less(x, val[u]):
                        if left[u] < 0:
                            left[u] = j
                            sim.touch_bytes(hn, u, vb, 4, True)
                            break
                        u = left[u]
                    else:
                        c.less(val[u], x)  # ties fall to the right
                        if right[u] < 0:
                            right[u] = j
                            sim.touch_bytes(hn, u, vb + 4, 4, True)
                            break
                        u = right[u]
            total += depth
            if depth > max_depth:
                max_depth = depth
    # in-order traversal writes the output over the input
    stack = np.empty(max_depth + 1, np.int64)
    top = 0
    u = root
    pos = 0
    while top > 0 or u >= 0:
        while u >= 0:
            stack[top] = u
            top += 1
            sim.read(hn, u)
            u = left[u]
        top -= 1
        u = stack[top]
        c.wr(h, a, pos, val[u])
        pos += 1
        u = right[u]
    sim.free(hf)
    sim.free(hn)
    return max_depth, total


# -- samplesort ------------------------------------------------------------------


@njit(cache=True)
def _bucket_of(c, piv, x):
    """First pivot index p with x <= piv[p]; len(piv) if none."""
    lo = 0
    hi = piv.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if c.less(piv[mid], x):
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _dedup(c, s):
    keep = np.ones(s.shape[0], np.bool_)
    for i in range(1, s.shape[0]):
        keep[i] = c.key(s[i]) != c.key(s[i - 1])
    return s[keep]


@njit(cache=True)
def _base(c, h, a, hb, b, lo, hi, in_b):
    """Sort a cache-sized bucket into the input array, moving it there first."""
    if in_b == 1:
        for i in range(lo, hi):
            c.wr(h, a, i, c.rd(hb, b, i))
    quicksort_range(c, h, a, lo, hi)


@njit(cache=True)
def samplesort_kernel(c, h, a, cache_bytes, line_bytes, store_labels, probe):
    """Returns the number of distribution rounds.

    ``probe`` receives the (RT, WT) of the top-level round, counting lines it
    left dirty as written.
    """
    n = a.shape[0]
    fp = c.footprint
    if n * fp <= cache_bytes:
        quicksort_range(c, h, a, 0, n)
        return 0
    sim = c.sim
    if store_labels:
        # indirect keys cost about a line each, so every sample is a pivot
        per_line = 1
        budget = max(2, cache_bytes // SHRINK // line_bytes)
    else:
        per_line = max(1, line_bytes // sim.arr_eb[h])
        budget = max(2, cache_bytes // SHRINK // fp)
    hb = sim.alloc(n, sim.arr_eb[h])
    b = np.empty_like(a)
    hl = sim.alloc(n, 4) if store_labels else -1
    label = np.empty(n if store_labels else 0, np.int32)
    rounds = 0
    # frames (lo, hi, data in b?, depth)
    stack = np.empty((1024, 4), np.int64)
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, 0, 0
    top = 1
    while top > 0:
        top -= 1
        lo, hi, in_b, depth = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        m = hi - lo
        if in_b == 1:
            hs, s, hd, d = hb, b, h, a
        else:
            hs, s, hd, d = h, a, hb, b
        piv = np.empty(0, a.dtype)
        if m * fp > cache_bytes:
            ns = min(budget, m // per_line)
            smp = np.empty(ns, a.dtype)
            for t in range(ns):
                smp[t] = c.rd(hs, s, lo + c.rand(m))
            _scratch_sort(c, smp)
            piv = _dedup(c, smp[per_line - 1::per_line].copy())
        if piv.shape[0] == 0:
            _base(c, h, a, hb, b, lo, hi, in_b)
            continue
        if depth + 1 > rounds:
            rounds = depth + 1
        if depth == 0:
            probe[0] = -sim.total_rt()
            probe[1] = -sim.total_wt() - sim.dirty_count()
        nb = piv.shape[0] + 1
        cnt = np.zeros(nb + 1, np.int64)
        for i in range(lo, hi):
            q = _bucket_of(c, piv, c.rd(hs, s, i))
            cnt[q + 1] += 1
            if store_labels:
                label[i] = q
                sim.write(hl, i)
        for q in range(nb):
            cnt[q + 1] += cnt[q]
        if cnt[nb] - cnt[nb - 1] == m or cnt[1] == m:
            # one bucket caught everything: the pivots cannot split this range
            _base(c, h, a, hb, b, lo, hi, in_b)
            continue
        off = cnt[:nb].copy()
        for i in range(lo, hi):
            x = c.rd(hs, s, i)
            if store_labels:
                sim.read(hl, i)
                q = label[i]
            else:
                q = _bucket_of(c, piv, x)
            c.wr(hd, d, lo + off[q], x)
            off[q] += 1
        if depth == 0:
            probe[0] += sim.total_rt()
            probe[1] += sim.total_wt() + sim.dirty_count()
        if top + nb > stack.shape[0]:
            grown = np.empty((2 * (top + nb), 4), np.int64)
            grown[:top] = stack[:top]
            stack = grown
        for q in range(nb):
            if cnt[q + 1] > cnt[q]:
                stack[top, 0] = lo + cnt[q]
                stack[top, 1] = lo + cnt[q + 1]
                stack[top, 2] = 1 - in_b
                stack[top, 3] = depth + 1
                top += 1
    if store_labels:
        sim.free(hl)
    sim.free(hb)
    return rounds


# -- Python facade ---------------------------------------------------------------


@dataclass
class SortStats:
    io: IoStats
    comparisons: int
    moves: int = 0
    depth: int | None = None  # BST sort: deepest node, root at 1
    avg_depth: float | None = None
    rounds: int | None = None  # samplesort distribution rounds
    first_round: IoStats | None = None  # samplesort top-level round alone

    def per(self, n: int) -> tuple[float, float, float]:
        """(RT, WT, comparisons) per element."""
        return self.io.read_transfers / n, self.io.write_transfers / n, self.comparisons / n


@dataclass
class SortInput:
    sim: Simulator
    elements: TrackedArray
    values: np.ndarray
    mode: Mode = Mode.DIRECT
    payload: TrackedArray | None = None
    payload_offsets: np.ndarray | None = None
    payload_keys: np.ndarray | None = None

    @classmethod
    def direct(cls, sim: Simulator, keys, elem_bytes: int = 8) -> "SortInput":
        if elem_bytes not in (8, 16, 32, 64):
            raise ValueError("elem_bytes must be 8, 16, 32 or 64")
        keys = np.ascontiguousarray(keys, dtype=np.float64).copy()
        return cls(sim, sim.alloc_array(len(keys), elem_bytes), keys)

    @classmethod
    def indirect(cls, sim: Simulator, keys, seed: int = 0) -> "SortInput":
        """References to records of 32..96 bytes (mean 64), packed back to back."""
        keys = np.ascontiguousarray(keys, dtype=np.float64).copy()
        n = len(keys)
        rng = np.random.default_rng(seed)
        sizes = 8 * rng.integers(4, 13, n)
        offs = np.zeros(n, np.int64)
        np.cumsum(sizes[:-1], out=offs[1:])
        payload = sim.alloc_array(int(sizes.sum()), 1)
        refs = sim.alloc_array(n, REF_BYTES)
        return cls(sim, refs, np.arange(n, dtype=np.int64), Mode.INDIRECT, payload, offs, keys)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def elem_bytes(self) -> int:
        return self.elements.elem_bytes

    def footprint(self) -> int:
        """Bytes of memory one element occupies, references plus records."""
        if self.mode == Mode.DIRECT:
            return self.elem_bytes
        return REF_BYTES + -(-self.payload.length // max(1, len(self)))

    def sorted_keys(self) -> np.ndarray:
        if self.mode == Mode.DIRECT:
            return self.values
        return self.payload_keys[self.values]

    def context(self, seed: int = 0):
        core = self.sim.core
        if self.mode == Mode.DIRECT:
            return DirectKeys(core, seed, self.footprint())
        return IndirectKeys(core, seed, self.footprint(), self.payload.handle,
                            self.payload_offsets, self.payload_keys)


def _finish(inp: SortInput, ctx, before: IoStats, **extra) -> SortStats:
    io = inp.sim.flush() - before
    return SortStats(io, int(ctx.comps), int(ctx.moves), **extra)


def quicksort(inp: SortInput, seed: int = 0) -> SortStats:
    ctx = inp.context(seed)
    before = inp.sim.stats()
    quicksort_range(ctx, inp.elements.handle, inp.values, 0, len(inp))
    return _finish(inp, ctx, before)


def mergesort(inp: SortInput, seed: int = 0) -> SortStats:
    """Top-down mergesort; runs of at most half the cache are sorted in cache.

    The half-cache cutoff leaves room for the run and its destination.  Base
    cases read the input and write the array their parent merges from, so the
    final merge always lands in the original array.
    """
    ctx = inp.context(seed)
    before = inp.sim.stats()
    cutoff = max(1, inp.sim.config.cache_bytes // 2 // inp.footprint())
    mergesort_kernel(ctx, inp.elements.handle, inp.values, cutoff)
    return _finish(inp, ctx, before)


def bst_sort(inp: SortInput, seed: int = 0) -> SortStats:
    ctx = inp.context(seed)
    before = inp.sim.stats()
    vb = inp.elem_bytes
    dmax, dsum = bst_kernel(ctx, inp.elements.handle, inp.values, vb)
    n = len(inp)
    return _finish(inp, ctx, before, depth=int(dmax), avg_depth=dsum / n if n else None)


def samplesort(inp: SortInput, seed: int = 0) -> SortStats:
    ctx = inp.context(seed)
    before = inp.sim.stats()
    cfg = inp.sim.config
    probe = np.zeros(2, np.int64)
    rounds = samplesort_kernel(ctx, inp.elements.handle, inp.values, cfg.cache_bytes,
                               cfg.line_bytes, inp.mode == Mode.INDIRECT, probe)
    first = IoStats(int(probe[0]), int(probe[1])) if rounds else None
    return _finish(inp, ctx, before, rounds=int(rounds), first_round=first)


SORTS = {
    Algorithm.QUICKSORT: quicksort,
    Algorithm.MERGESORT: mergesort,
    Algorithm.BST_SORT: bst_sort,
    Algorithm.SAMPLESORT: samplesort,
}


def sort(algorithm: Algorithm, inp: SortInput, seed: int = 0) -> SortStats:
    return SORTS[Algorithm(algorithm)](inp, seed)


def sort_indirect(algorithm: Algorithm, inp: SortInput, seed: int = 0) -> SortStats:
    if inp.mode != Mode.INDIRECT:
        raise ValueError("sort_indirect needs an input built with SortInput.indirect")
    return sort(algorithm, inp, seed)
