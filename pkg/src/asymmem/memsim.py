"""Single-level cache simulator that counts read and write transfers.

Every tracked allocation lives in a flat simulated address space.  An access
maps to a line id; a miss loads the line (one read transfer) and may evict the
least recently used line of its pool, which costs a write transfer when dirty.
The cache is write-allocate and write-back.

The engine is a numba jitclass so that the algorithm kernels in the sibling
modules can drive it from compiled code.  `Simulator` is the Python facade.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import boolean, int32, int64, njit, uint8
from numba.experimental import jitclass


class Policy(IntEnum):
    CLASSIC = 0
    SPLIT_POOL = 1
    STATIC_PIN = 2


class Kind(IntEnum):
    READ = 0
    WRITE = 1


READ = Kind.READ
WRITE = Kind.WRITE

# pool indices inside the core; pool 2 holds pinned lines and never evicts
_PINNED = 2


@dataclass(frozen=True)
class SimConfig:
    line_bytes: int = 64
    capacity_lines: int = 1000
    policy: Policy = Policy.CLASSIC
    split_fraction: float = 0.5

    def __post_init__(self):
        lb = self.line_bytes
        if lb <= 0 or lb & (lb - 1):
            raise ValueError(f"line_bytes must be a power of two, got {lb}")
        if self.capacity_lines < 2:
            raise ValueError("capacity_lines must be at least 2")
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.policy == Policy.SPLIT_POOL:
            if not 0.0 < self.split_fraction < 1.0:
                raise ValueError("split_fraction must lie in (0, 1)")
            r, w = self.pool_sizes()
            if r < 1 or w < 1:
                raise ValueError("both pools need at least one line")

    def pool_sizes(self) -> tuple[int, int]:
        """Line budgets of the (read, write) pools under SplitPool."""
        r = int(self.capacity_lines * self.split_fraction)
        return r, self.capacity_lines - r

    @property
    def cache_bytes(self) -> int:
        return self.line_bytes * self.capacity_lines


@dataclass(frozen=True)
class IoStats:
    read_transfers: int = 0
    write_transfers: int = 0

    def __add__(self, other: "IoStats") -> "IoStats":
        return IoStats(self.read_transfers + other.read_transfers,
                       self.write_transfers + other.write_transfers)

    def __sub__(self, other: "IoStats") -> "IoStats":
        return IoStats(self.read_transfers - other.read_transfers,
                       self.write_transfers - other.write_transfers)

    def per(self, n: float) -> tuple[float, float]:
        return self.read_transfers / n, self.write_transfers / n


def io_cost(stats: IoStats, omega: float) -> float:
    """Asymmetric I/O cost: reads plus omega times writes."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return stats.read_transfers + omega * stats.write_transfers


@dataclass(frozen=True)
class TrackedArray:
    handle: int
    base_address: int
    length: int
    elem_bytes: int

    @property
    def nbytes(self) -> int:
        return self.length * self.elem_bytes


@njit(cache=True)
def _grow_i64(a, m):
    out = np.zeros(m, np.int64)
    out[: a.shape[0]] = a
    return out


_core_spec = [
    ("line_shift", int64),
    ("line_bytes", int64),
    ("capacity", int64),
    ("policy", int64),
    ("pool_cap", int64[:]),
    ("pool_size", int64[:]),
    ("head", int64[:]),
    ("tail", int64[:]),
    ("slot_line", int64[:]),
    ("slot_dirty", uint8[:]),
    ("slot_pool", int64[:]),
    ("prv", int64[:]),
    ("nxt", int64[:]),
    ("free_slots", int64[:]),
    ("n_free", int64),
    ("line_slot", int32[:]),
    ("line_pin", uint8[:]),
    ("n_pinned", int64),
    ("rt", int64[:]),
    ("wt", int64[:]),
    ("last_line", int64),
    ("last_slot", int64),
    ("arr_base", int64[:]),
    ("arr_len", int64[:]),
    ("arr_eb", int64[:]),
    ("arr_live", uint8[:]),
    ("n_arrays", int64),
    ("next_line", int64),
    ("trace_on", boolean),
    ("trace", int64[:]),
    ("n_trace", int64),
]


@jitclass(_core_spec)
class CacheCore:
    def __init__(self, line_bytes, capacity, policy, read_pool):
        shift = 0
        while (1 << shift) < line_bytes:
            shift += 1
        self.line_shift = shift
        self.line_bytes = line_bytes
        self.capacity = capacity
        self.policy = policy
        self.pool_cap = np.zeros(3, np.int64)
        self.pool_size = np.zeros(3, np.int64)
        self.head = np.full(3, -1, np.int64)
        self.tail = np.full(3, -1, np.int64)
        if policy == 1:
            self.pool_cap[0] = read_pool
            self.pool_cap[1] = capacity - read_pool
        else:
            self.pool_cap[0] = capacity
        self.slot_line = np.full(capacity, -1, np.int64)
        self.slot_dirty = np.zeros(capacity, np.uint8)
        self.slot_pool = np.zeros(capacity, np.int64)
        self.prv = np.full(capacity, -1, np.int64)
        self.nxt = np.full(capacity, -1, np.int64)
        self.free_slots = np.arange(capacity)[::-1].copy()
        self.n_free = capacity
        self.line_slot = np.full(1024, -1, np.int32)
        self.line_pin = np.zeros(1024, np.uint8)
        self.n_pinned = 0
        self.rt = np.zeros(3, np.int64)
        self.wt = np.zeros(3, np.int64)
        self.last_line = -1
        self.last_slot = -1
        self.arr_base = np.zeros(64, np.int64)
        self.arr_len = np.zeros(64, np.int64)
        self.arr_eb = np.zeros(64, np.int64)
        self.arr_live = np.zeros(64, np.uint8)
        self.n_arrays = 0
        self.next_line = 0
        self.trace_on = False
        self.trace = np.zeros(16, np.int64)
        self.n_trace = 0

    # -- allocation -------------------------------------------------------

    def alloc(self, length, elem_bytes):
        if length < 0 or elem_bytes < 1:
            raise ValueError("bad allocation request")
        h = self.n_arrays
        if h == self.arr_base.shape[0]:
            m = 2 * h
            self.arr_base = _grow_i64(self.arr_base, m)
            self.arr_len = _grow_i64(self.arr_len, m)
            self.arr_eb = _grow_i64(self.arr_eb, m)
            live = np.zeros(m, np.uint8)
            live[:h] = self.arr_live
            self.arr_live = live
        nbytes = length * elem_bytes
        nlines = (nbytes + self.line_bytes - 1) >> self.line_shift
        self.arr_base[h] = self.next_line << self.line_shift
        self.arr_len[h] = length
        self.arr_eb[h] = elem_bytes
        self.arr_live[h] = 1
        self.n_arrays = h + 1
        self.next_line += nlines
        if self.next_line > self.line_slot.shape[0]:
            m = max(2 * self.line_slot.shape[0], self.next_line)
            ls = np.full(m, -1, np.int32)
            ls[: self.line_slot.shape[0]] = self.line_slot
            self.line_slot = ls
            lp = np.zeros(m, np.uint8)
            lp[: self.line_pin.shape[0]] = self.line_pin
            self.line_pin = lp
        return h

    def line_range(self, h):
        first = self.arr_base[h] >> self.line_shift
        nbytes = self.arr_len[h] * self.arr_eb[h]
        return first, (nbytes + self.line_bytes - 1) >> self.line_shift

    def free(self, h):
        if h < 0 or h >= self.n_arrays or self.arr_live[h] == 0:
            raise RuntimeError("double free or unknown array")
        self.arr_live[h] = 0
        first, n = self.line_range(h)
        for line in range(first, first + n):
            s = self.line_slot[line]
            if s >= 0:
                p = self.slot_pool[s]
                if p != _PINNED:
                    self._unlink(p, s)
                self.pool_size[p] -= 1
                self._release(line, s)
            if self.line_pin[line]:
                self.line_pin[line] = 0
                self.n_pinned -= 1
                if self.policy == 2:
                    self.pool_cap[0] += 1

    # -- element access -----------------------------------------------------

    def _check(self, h, i):
        if i < 0 or i >= self.arr_len[h]:
            raise IndexError("tracked array index out of range")
        if self.arr_live[h] == 0:
            raise RuntimeError("access to a freed array")

    def read(self, h, i):
        self._check(h, i)
        eb = self.arr_eb[h]
        a = self.arr_base[h] + i * eb
        first = a >> self.line_shift
        last = (a + eb - 1) >> self.line_shift
        for line in range(first, last + 1):
            self.touch(line, False)

    def write(self, h, i):
        self._check(h, i)
        eb = self.arr_eb[h]
        a = self.arr_base[h] + i * eb
        first = a >> self.line_shift
        last = (a + eb - 1) >> self.line_shift
        for line in range(first, last + 1):
            self.touch(line, True)

    def access(self, h, i, w):
        if w:
            self.write(h, i)
        else:
            self.read(h, i)

    def touch_bytes(self, h, i, offset, nbytes, w):
        """Access `nbytes` starting `offset` bytes into element i."""
        self._check(h, i)
        a = self.arr_base[h] + i * self.arr_eb[h] + offset
        first = a >> self.line_shift
        last = (a + nbytes - 1) >> self.line_shift
        for line in range(first, last + 1):
            self.touch(line, w)

    # -- the cache proper -------------------------------------------------

    def touch(self, line, w):
        if line == self.last_line:
            if w:
                self.slot_dirty[self.last_slot] = 1
            return
        s = self.line_slot[line]
        if s >= 0:
            if w:
                self.slot_dirty[s] = 1
            p = self.slot_pool[s]
            if p != _PINNED and self.head[p] != s:
                self._unlink(p, s)
                self._push_front(p, s)
        else:
            s = self._miss(line, w)
        self.last_line = line
        self.last_slot = s

    def _miss(self, line, w):
        if self.policy == 2 and self.line_pin[line]:
            p = _PINNED
        elif self.policy == 1 and w:
            p = 1
        else:
            p = 0
        if p != _PINNED:
            while self.pool_size[p] >= self.pool_cap[p]:
                self._evict(p)
        self.n_free -= 1
        s = self.free_slots[self.n_free]
        self.slot_line[s] = line
        self.slot_dirty[s] = 1 if w else 0
        self.slot_pool[s] = p
        self.line_slot[line] = s
        self.pool_size[p] += 1
        if p != _PINNED:
            self._push_front(p, s)
        self.rt[p] += 1
        if self.trace_on:
            self._log(line << 1)
        return s

    def _evict(self, p):
        s = self.tail[p]
        line = self.slot_line[s]
        self._unlink(p, s)
        self.pool_size[p] -= 1
        if self.slot_dirty[s]:
            self.wt[p] += 1
            if self.trace_on:
                self._log((line << 1) | 1)
        self._release(line, s)

    def _release(self, line, s):
        self.line_slot[line] = -1
        self.slot_line[s] = -1
        self.slot_dirty[s] = 0
        self.free_slots[self.n_free] = s
        self.n_free += 1
        if line == self.last_line:
            self.last_line = -1

    def _unlink(self, p, s):
        a = self.prv[s]
        b = self.nxt[s]
        if a >= 0:
            self.nxt[a] = b
        else:
            self.head[p] = b
        if b >= 0:
            self.prv[b] = a
        else:
            self.tail[p] = a
        self.prv[s] = -1
        self.nxt[s] = -1

    def _push_front(self, p, s):
        h = self.head[p]
        self.prv[s] = -1
        self.nxt[s] = h
        if h >= 0:
            self.prv[h] = s
        else:
            self.tail[p] = s
        self.head[p] = s

    def _log(self, code):
        if self.n_trace == self.trace.shape[0]:
            self.trace = _grow_i64(self.trace, 2 * self.n_trace)
        self.trace[self.n_trace] = code
        self.n_trace += 1

    # -- pinning ------------------------------------------------------------

    def _fresh_pins(self, h, first, count):
        eb = self.arr_eb[h]
        a = self.arr_base[h] + first * eb
        fresh = 0
        for line in range(a >> self.line_shift, ((a + count * eb - 1) >> self.line_shift) + 1):
            if self.line_pin[line] == 0:
                fresh += 1
        return fresh

    def can_pin(self, h, first, count):
        """Whether pin(h, first, count) would leave at least one unpinned line."""
        if count <= 0:
            return True
        self._check(h, first)
        self._check(h, first + count - 1)
        return self.n_pinned + self._fresh_pins(h, first, count) <= self.capacity - 1

    def pin(self, h, first, count):
        if count <= 0:
            return
        if self.policy != 2:
            raise RuntimeError("pinning requires the StaticPin policy")
        if not self.can_pin(h, first, count):
            raise RuntimeError("cannot pin more than capacity - 1 lines")
        eb = self.arr_eb[h]
        a = self.arr_base[h] + first * eb
        l0 = a >> self.line_shift
        l1 = (a + count * eb - 1) >> self.line_shift
        # pin and unpin reorder pools, so the MRU shortcut in touch() is void
        self.last_line = -1
        for line in range(l0, l1 + 1):
            if self.line_pin[line]:
                continue
            self.line_pin[line] = 1
            self.n_pinned += 1
            self.pool_cap[0] -= 1
            s = self.line_slot[line]
            if s >= 0:
                self._unlink(0, s)
                self.pool_size[0] -= 1
                self.slot_pool[s] = _PINNED
                self.pool_size[_PINNED] += 1
        while self.pool_size[0] > self.pool_cap[0]:
            self._evict(0)

    def unpin(self, h, first, count):
        if count <= 0:
            return
        self._check(h, first)
        self._check(h, first + count - 1)
        eb = self.arr_eb[h]
        a = self.arr_base[h] + first * eb
        l0 = a >> self.line_shift
        l1 = (a + count * eb - 1) >> self.line_shift
        self.last_line = -1
        for line in range(l0, l1 + 1):
            if self.line_pin[line] == 0:
                continue
            self.line_pin[line] = 0
            self.n_pinned -= 1
            self.pool_cap[0] += 1
            s = self.line_slot[line]
            if s >= 0:
                self.pool_size[_PINNED] -= 1
                self.slot_pool[s] = 0
                self.pool_size[0] += 1
                self._push_front(0, s)

    # -- whole-cache operations ---------------------------------------------

    def flush(self):
        for s in range(self.capacity):
            line = self.slot_line[s]
            if line < 0:
                continue
            p = self.slot_pool[s]
            if self.slot_dirty[s]:
                self.wt[p] += 1
                if self.trace_on:
                    self._log((line << 1) | 1)
            self.line_slot[line] = -1
            self.slot_line[s] = -1
            self.slot_dirty[s] = 0
        self._empty()

    def reset(self):
        for s in range(self.capacity):
            line = self.slot_line[s]
            if line >= 0:
                self.line_slot[line] = -1
                self.slot_line[s] = -1
                self.slot_dirty[s] = 0
        self._empty()
        self.rt[:] = 0
        self.wt[:] = 0
        self.n_trace = 0

    def _empty(self):
        self.head[:] = -1
        self.tail[:] = -1
        self.pool_size[:] = 0
        self.prv[:] = -1
        self.nxt[:] = -1
        for s in range(self.capacity):
            self.free_slots[s] = self.capacity - 1 - s
        self.n_free = self.capacity
        self.last_line = -1
        self.last_slot = -1

    def resident_count(self):
        return self.capacity - self.n_free

    def dirty_count(self):
        c = 0
        for s in range(self.capacity):
            if self.slot_line[s] >= 0 and self.slot_dirty[s]:
                c += 1
        return c

    def total_rt(self):
        return self.rt[0] + self.rt[1] + self.rt[2]

    def total_wt(self):
        return self.wt[0] + self.wt[1] + self.wt[2]


CacheCoreType = CacheCore.class_type.instance_type


class Simulator:
    """Python facade over `CacheCore`.

    >>> sim = Simulator(SimConfig(capacity_lines=4))
    >>> a = sim.alloc_array(16, 4)
    >>> sim.access(a, 0, WRITE); sim.flush()
    IoStats(read_transfers=1, write_transfers=1)
    """

    def __init__(self, config: SimConfig | None = None, trace: bool = False):
        self.config = config or SimConfig()
        read_pool = self.config.pool_sizes()[0] if self.config.policy == Policy.SPLIT_POOL else 0
        self.core = CacheCore(self.config.line_bytes, self.config.capacity_lines,
                              int(self.config.policy), read_pool)
        self.core.trace_on = trace

    @property
    def tracing(self) -> bool:
        return self.core.trace_on

    def alloc_array(self, length: int, elem_bytes: int) -> TrackedArray:
        h = self.core.alloc(length, elem_bytes)
        return TrackedArray(h, int(self.core.arr_base[h]), length, elem_bytes)

    def free_array(self, arr: TrackedArray) -> None:
        self.core.free(arr.handle)

    def access(self, arr: TrackedArray, index: int, kind: Kind) -> None:
        self.core.access(arr.handle, index, bool(kind))

    def read(self, arr: TrackedArray, index: int) -> None:
        self.core.read(arr.handle, index)

    def write(self, arr: TrackedArray, index: int) -> None:
        self.core.write(arr.handle, index)

    def pin_lines(self, arr: TrackedArray, first: int, count: int) -> None:
        self.core.pin(arr.handle, first, count)

    def unpin_lines(self, arr: TrackedArray, first: int, count: int) -> None:
        self.core.unpin(arr.handle, first, count)

    def stats(self) -> IoStats:
        return IoStats(int(self.core.total_rt()), int(self.core.total_wt()))

    def pool_stats(self) -> list[IoStats]:
        """Counters of (pool 0, pool 1, pinned pool)."""
        return [IoStats(int(self.core.rt[p]), int(self.core.wt[p])) for p in range(3)]

    def flush(self) -> IoStats:
        self.core.flush()
        return self.stats()

    def reset(self) -> None:
        self.core.reset()

    def resident(self) -> int:
        return int(self.core.resident_count())

    def trace_lines(self) -> list[str]:
        codes = self.core.trace[: self.core.n_trace]
        return [f"{'W' if c & 1 else 'R'} {c >> 1}" for c in codes.tolist()]

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.trace_lines():
                fh.write(line + "\n")
