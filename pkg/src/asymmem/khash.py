"""k-level open-addressing hash table.

The table keeps k linear-probing arrays whose capacities are consecutive
powers of two.  Inserts go to the smallest level whose occupancy stays within
r; when every level is full a level twice the largest is added and only the
smallest one is rehashed.  Deletes that push overall occupancy below l add a
level half the smallest and rehash only the largest one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import boolean, float64, int64, njit, uint32, uint64
from numba.experimental import jitclass

from .memsim import CacheCoreType, Simulator

EMPTY = 0xFFFFFFFF
_EMPTY = np.uint32(EMPTY)
SLOT_BYTES = 4


@njit(cache=True, inline="always")
def mix64(x):
    z = np.uint64(x) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class HashParams:
    k: int = 2
    l: float = 0.2
    r: float = 0.8
    c_prime: int = 5
    seed: int = 0
    # False: one mix per key, reduced by each level's mask, so a key's slot in a
    # level of twice the size is p or p + cap.  True: every level gets its own salt.
    salted: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.l < self.r < 1:
            raise ValueError("need 0 < l < r < 1")
        if 4 * self.l > self.r:
            raise ValueError("occupancy bounds must satisfy 4l <= r")
        if self.c_prime < 0:
            raise ValueError("c_prime must be nonnegative")


@dataclass(frozen=True)
class Location:
    level: int  # 1-based, smallest level first
    slot: int


_spec = [
    ("sim", CacheCoreType),
    ("k", int64),
    ("l", float64),
    ("r", float64),
    ("min_exp", int64),
    ("seed", uint64),
    ("salted", boolean),
    ("key_mask", uint32),
    ("exps", int64[:]),
    ("handles", int64[:]),
    ("counts", int64[:]),
    ("offs", int64[:]),
    ("data", uint32[:]),
    ("count", int64),
    ("reinserts", int64),
    ("grows", int64),
    ("shrinks", int64),
    ("last_word", uint32),
]


@jitclass(_spec)
class KHashCore:
    def __init__(self, sim, k, l, r, c_prime, seed, salted, key_mask):
        self.sim = sim
        self.k = k
        self.l = l
        self.r = r
        self.min_exp = c_prime + 1
        self.seed = np.uint64(seed)
        self.salted = salted
        self.key_mask = np.uint32(key_mask)
        self.exps = np.arange(c_prime + 1, c_prime + 1 + k).astype(np.int64)
        self.handles = np.zeros(k, np.int64)
        self.counts = np.zeros(k, np.int64)
        self.offs = np.zeros(k + 1, np.int64)
        for i in range(k):
            self.offs[i + 1] = self.offs[i] + (1 << self.exps[i])
            self.handles[i] = sim.alloc(1 << self.exps[i], 4)
            self._init_level(self.handles[i], self.exps[i])
        self.data = np.full(self.offs[k], _EMPTY, np.uint32)
        self.count = 0
        self.reinserts = 0
        self.grows = 0
        self.shrinks = 0
        self.last_word = _EMPTY

    # -- hashing --------------------------------------------------------------

    def home(self, x, e):
        key = np.uint64(x & self.key_mask)
        if self.salted:
            z = mix64(key ^ mix64(self.seed + np.uint64(e)))
        else:
            z = mix64(key ^ self.seed)
        return int64(z & np.uint64((1 << e) - 1))

    def capacity(self):
        return self.offs[self.k]

    def occupancy(self):
        return self.count / self.offs[self.k]

    # -- probing within one level -------------------------------------------

    def find_in(self, i, x):
        mask = (1 << self.exps[i]) - 1
        base = self.offs[i]
        h = self.handles[i]
        want = x & self.key_mask
        p = self.home(x, self.exps[i])
        while True:
            self.sim.read(h, p)
            w = self.data[base + p]
            if w == _EMPTY:
                return -1
            if (w & self.key_mask) == want:
                self.last_word = w
                return p
            p = (p + 1) & mask

    def place(self, i, x):
        mask = (1 << self.exps[i]) - 1
        base = self.offs[i]
        h = self.handles[i]
        p = self.home(x, self.exps[i])
        while True:
            self.sim.read(h, p)
            if self.data[base + p] == _EMPTY:
                break
            p = (p + 1) & mask
        self.sim.write(h, p)
        self.data[base + p] = x
        self.counts[i] += 1
        self.count += 1

    def remove_at(self, i, p):
        """Vacate slot p of level i, repairing the probe chain by backward shift."""
        mask = (1 << self.exps[i]) - 1
        base = self.offs[i]
        h = self.handles[i]
        e = self.exps[i]
        j = p
        while True:
            j = (j + 1) & mask
            self.sim.read(h, j)
            w = self.data[base + j]
            if w == _EMPTY:
                break
            t = self.home(w, e)
            # entry at j may move to the hole unless its home lies in (p, j]
            if p <= j:
                stays = p < t <= j
            else:
                stays = t > p or t <= j
            if not stays:
                self.sim.write(h, p)
                self.data[base + p] = w
                p = j
        self.sim.write(h, p)
        self.data[base + p] = _EMPTY
        self.counts[i] -= 1
        self.count -= 1

    # -- public operations --------------------------------------------------

    def lookup(self, x):
        """Return level * 2^32 + slot for a hit, or -1."""
        for i in range(self.k):
            p = self.find_in(i, x)
            if p >= 0:
                return (i << 32) | p
        return -1

    def contains(self, x):
        return self.lookup(x) >= 0

    def _try_insert(self, x):
        for i in range(self.k):
            if (self.counts[i] + 1) <= self.r * (1 << self.exps[i]):
                self.place(i, x)
                return True
        return False

    def insert(self, x):
        if not self._try_insert(x):
            self.grow()
            if not self._try_insert(x):
                raise RuntimeError("insert found no room right after growing")

    def grow(self):
        k = self.k
        old_h = self.handles[0]
        old_e = self.exps[0]
        old = self.data[self.offs[0]:self.offs[1]].copy()
        new_e = self.exps[k - 1] + 1
        new_h = self.sim.alloc(1 << new_e, 4)
        self._init_level(new_h, new_e)
        self._relabel(1, k, new_e, new_h, False)
        moved = self._drain(old, old_h)
        self.count -= moved
        self.sim.free(old_h)
        self.grows += 1
        return old_e

    def shrink(self):
        k = self.k
        old_h = self.handles[k - 1]
        old = self.data[self.offs[k - 1]:self.offs[k]].copy()
        new_e = self.exps[0] - 1
        new_h = self.sim.alloc(1 << new_e, 4)
        self._init_level(new_h, new_e)
        self._relabel(0, k - 1, new_e, new_h, True)
        moved = self._drain(old, old_h)
        self.count -= moved
        self.sim.free(old_h)
        self.shrinks += 1

    def _init_level(self, h, e):
        # a fresh level is filled with EMPTY, one write per line
        step = max(1, self.sim.line_bytes // 4)
        for p in range(0, 1 << e, step):
            self.sim.write(h, p)

    def _relabel(self, lo, hi, new_e, new_h, front):
        """Keep levels lo..hi-1 and add a fresh level at the front or back."""
        k = self.k
        keep_e = self.exps[lo:hi].copy()
        keep_h = self.handles[lo:hi].copy()
        keep_c = self.counts[lo:hi].copy()
        keep_d = self.data[self.offs[lo]:self.offs[hi]].copy()
        j = 0
        if front:
            self.exps[0] = new_e
            self.handles[0] = new_h
            self.counts[0] = 0
            j = 1
        for t in range(k - 1):
            self.exps[j + t] = keep_e[t]
            self.handles[j + t] = keep_h[t]
            self.counts[j + t] = keep_c[t]
        if not front:
            self.exps[k - 1] = new_e
            self.handles[k - 1] = new_h
            self.counts[k - 1] = 0
        for i in range(k):
            self.offs[i + 1] = self.offs[i] + (1 << self.exps[i])
        data = np.full(self.offs[k], _EMPTY, np.uint32)
        start = self.offs[1] if front else 0
        data[start:start + keep_d.shape[0]] = keep_d
        self.data = data

    def _drain(self, old, old_h):
        """Reinsert every entry of a discarded level in slot order; return how many."""
        moved = 0
        for p in range(old.shape[0]):
            self.sim.read(old_h, p)
            w = old[p]
            if w == _EMPTY:
                continue
            if not self._try_insert(w):
                raise RuntimeError("nested resize during reinsertion")
            moved += 1
        self.reinserts += moved
        return moved

    def delete_at(self, x, i, p):
        if i < 0 or i >= self.k or p < 0 or p >= (1 << self.exps[i]):
            raise RuntimeError("stale location")
        self.sim.read(self.handles[i], p)
        w = self.data[self.offs[i] + p]
        if w == _EMPTY or (w & self.key_mask) != (x & self.key_mask):
            raise RuntimeError("stale location")
        self.remove_at(i, p)
        if self.count < self.l * self.offs[self.k] and self.exps[0] > self.min_exp:
            self.shrink()

    def delete(self, x):
        loc = self.lookup(x)
        if loc < 0:
            return False
        self.delete_at(x, loc >> 32, loc & 0xFFFFFFFF)
        return True

    # -- bulk helpers used by the frontier sets ----------------------------------

    def level_cap(self, i):
        return 1 << self.exps[i]

    def read_slot(self, i, p):
        self.sim.read(self.handles[i], p)
        return self.data[self.offs[i] + p]

    def clear(self):
        """Empty every level in place; capacities are kept."""
        for i in range(self.k):
            base = self.offs[i]
            h = self.handles[i]
            for p in range(1 << self.exps[i]):
                self.sim.read(h, p)
                if self.data[base + p] != _EMPTY:
                    self.sim.write(h, p)
                    self.data[base + p] = _EMPTY
            self.counts[i] = 0
        self.count = 0

    def purge(self, tag_mask, tag):
        """Remove every entry whose bits under tag_mask equal tag; no resizing."""
        tm = np.uint32(tag_mask)
        tv = np.uint32(tag)
        for i in range(self.k):
            if self.counts[i] == 0:
                continue
            cap = 1 << self.exps[i]
            mask = cap - 1
            base = self.offs[i]
            h = self.handles[i]
            # start right after an empty slot so no probe chain wraps past the scan start
            e = 0
            while True:
                self.sim.read(h, e)
                if self.data[base + e] == _EMPTY:
                    break
                e += 1
            j = (e + 1) & mask
            for _ in range(cap - 1):
                while True:
                    self.sim.read(h, j)
                    w = self.data[base + j]
                    if w == _EMPTY or (w & tm) != tv:
                        break
                    self.remove_at(i, j)
                j = (j + 1) & mask

    def free_all(self):
        for i in range(self.k):
            self.sim.free(self.handles[i])

    def keys(self):
        out = np.empty(self.count, np.uint32)
        j = 0
        for q in range(self.data.shape[0]):
            if self.data[q] != _EMPTY:
                out[j] = self.data[q]
                j += 1
        return out


KHashCoreType = KHashCore.class_type.instance_type


def new_core(sim: Simulator, params: HashParams, key_mask: int = EMPTY) -> KHashCore:
    return KHashCore(sim.core, params.k, params.l, params.r, params.c_prime,
                     params.seed & 0xFFFFFFFFFFFFFFFF, params.salted, key_mask)


class KLevelHashTable:
    """Set of 4-byte keys backed by tracked arrays of 4-byte slots."""

    def __init__(self, sim: Simulator, params: HashParams | None = None):
        self.params = params or HashParams()
        self.sim = sim
        self.core = new_core(sim, self.params)

    def __len__(self) -> int:
        return int(self.core.count)

    def __contains__(self, x: int) -> bool:
        return self.lookup(x) is not None

    @staticmethod
    def _check_key(x: int) -> None:
        if not 0 <= x < EMPTY:
            raise ValueError("keys must be 32-bit values other than the EMPTY sentinel")

    def lookup(self, x: int) -> Location | None:
        self._check_key(x)
        loc = self.core.lookup(x)
        if loc < 0:
            return None
        return Location(int(loc >> 32) + 1, int(loc & 0xFFFFFFFF))

    def insert(self, x: int) -> None:
        self._check_key(x)
        self.core.insert(x)

    def delete(self, x: int, loc: Location) -> None:
        self._check_key(x)
        self.core.delete_at(x, loc.level - 1, loc.slot)

    def occupancy(self) -> float:
        return float(self.core.occupancy())

    def capacities(self) -> list[int]:
        return [1 << int(e) for e in self.core.exps]

    def level_counts(self) -> list[int]:
        return [int(c) for c in self.core.counts]

    def keys(self) -> set[int]:
        return set(int(v) for v in self.core.keys())

    @property
    def reinserts(self) -> int:
        return int(self.core.reinserts)
