"""Join-based balanced search trees: AVL, red-black and treap.

Every node lives in a pooled arena of 16-byte records (key, left, right,
balance).  Each tree operation is written once in terms of join; join is the
only code that assigns node fields, and it skips writes whose value would not
change.  Trees are destructive: an operation consumes the trees passed in.

The balance field holds the subtree height (AVL), black height and color
packed as ``bh << 1 | red`` (red-black), or the high 32 bits of a seeded key
hash (treap).
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np
from numba import boolean, int64, njit
from numba.experimental import jitclass

from .khash import mix64
from .memsim import CacheCoreType, Simulator

NIL = -1
NODE_BYTES = 16
_CHUNK_BITS = 16
_CHUNK = 1 << _CHUNK_BITS
_STACK = 4096  # far above the height of any balanced tree that fits in memory


class Scheme(IntEnum):
    AVL = 0
    RED_BLACK = 1
    TREAP = 2


@njit(cache=True)
def _doubled(a):
    b = np.zeros(2 * a.shape[0], np.int64)
    b[:a.shape[0]] = a
    return b


_spec = [
    ("sim", CacheCoreType),
    ("scheme", int64),
    ("seed", int64),
    ("key", int64[:]),
    ("left", int64[:]),
    ("right", int64[:]),
    ("bal", int64[:]),
    ("handles", int64[:]),
    ("n", int64),
    ("join_depth", int64),
    ("stray_writes", int64),
    ("node_writes", int64),
    ("rotations", int64),
    ("visits", int64),
    ("rb_keep_color", boolean),
]


@jitclass(_spec)
class Forest:
    def __init__(self, sim, scheme, seed, rb_keep_color):
        self.sim = sim
        self.rb_keep_color = rb_keep_color
        self.scheme = scheme
        self.seed = seed
        self.key = np.zeros(_CHUNK, np.int64)
        self.left = np.zeros(_CHUNK, np.int64)
        self.right = np.zeros(_CHUNK, np.int64)
        self.bal = np.zeros(_CHUNK, np.int64)
        self.handles = np.zeros(0, np.int64)
        self.n = 0
        self.join_depth = 0
        self.stray_writes = 0
        self.node_writes = 0
        self.rotations = 0
        self.visits = 0

    def new_node(self, k):
        """Reserve a record for key k; its fields are first written by join."""
        x = self.n
        if x >> _CHUNK_BITS >= self.handles.shape[0]:
            hs = np.empty(self.handles.shape[0] + 1, np.int64)
            hs[:-1] = self.handles
            hs[-1] = self.sim.alloc(_CHUNK, NODE_BYTES)
            self.handles = hs
        if x >= self.key.shape[0]:
            self.key = _doubled(self.key)
            self.left = _doubled(self.left)
            self.right = _doubled(self.right)
            self.bal = _doubled(self.bal)
        self.key[x] = k
        # unset links guarantee the first join writes the record
        self.left[x] = -2
        self.right[x] = -2
        self.bal[x] = self.priority(k) if self.scheme == 2 else -1
        self.n = x + 1
        return x

    def priority(self, k):
        return int64(mix64(np.uint64(k) ^ np.uint64(self.seed)) >> np.uint64(32))

    def rd(self, x):
        self.visits += 1
        self.sim.read(self.handles[x >> _CHUNK_BITS], x & (_CHUNK - 1))

    def set_node(self, x, l, r, b):
        if self.left[x] != l or self.right[x] != r or self.bal[x] != b:
            if self.join_depth == 0:
                self.stray_writes += 1
            self.sim.write(self.handles[x >> _CHUNK_BITS], x & (_CHUNK - 1))
            self.node_writes += 1
            self.left[x] = l
            self.right[x] = r
            self.bal[x] = b

    def release(self):
        for h in self.handles:
            self.sim.free(h)
        self.handles = np.zeros(0, np.int64)
        self.n = 0


ForestType = Forest.class_type.instance_type


# -- AVL ----------------------------------------------------------------------

@njit(cache=True)
def _h(f, t):
    if t < 0:
        return 0
    f.rd(t)
    return f.bal[t]


@njit(cache=True)
def _avl_node(f, x, l, r):
    f.set_node(x, l, r, max(_h(f, l), _h(f, r)) + 1)
    return x


@njit(cache=True)
def _avl_join_right(f, tl, k, tr):
    f.rd(tl)
    l = f.left[tl]
    c = f.right[tl]
    if _h(f, c) <= _h(f, tr) + 1:
        _avl_node(f, k, c, tr)
        if _h(f, k) <= _h(f, l) + 1:
            return _avl_node(f, tl, l, k)
        # double rotation around c
        f.rd(c)
        cl = f.left[c]
        cr = f.right[c]
        _avl_node(f, tl, l, cl)
        _avl_node(f, k, cr, tr)
        f.rotations += 2
        return _avl_node(f, c, tl, k)
    t1 = _avl_join_right(f, c, k, tr)
    if _h(f, t1) <= _h(f, l) + 1:
        return _avl_node(f, tl, l, t1)
    f.rd(t1)
    _avl_node(f, tl, l, f.left[t1])
    f.rotations += 1
    return _avl_node(f, t1, tl, f.right[t1])


@njit(cache=True)
def _avl_join_left(f, tl, k, tr):
    f.rd(tr)
    r = f.right[tr]
    c = f.left[tr]
    if _h(f, c) <= _h(f, tl) + 1:
        _avl_node(f, k, tl, c)
        if _h(f, k) <= _h(f, r) + 1:
            return _avl_node(f, tr, k, r)
        f.rd(c)
        cl = f.left[c]
        cr = f.right[c]
        _avl_node(f, tr, cr, r)
        _avl_node(f, k, tl, cl)
        f.rotations += 2
        return _avl_node(f, c, k, tr)
    t1 = _avl_join_left(f, tl, k, c)
    if _h(f, t1) <= _h(f, r) + 1:
        return _avl_node(f, tr, t1, r)
    f.rd(t1)
    _avl_node(f, tr, f.right[t1], r)
    f.rotations += 1
    return _avl_node(f, t1, f.left[t1], tr)


@njit(cache=True)
def _avl_join(f, tl, k, tr):
    hl = _h(f, tl)
    hr = _h(f, tr)
    if hl > hr + 1:
        return _avl_join_right(f, tl, k, tr)
    if hr > hl + 1:
        return _avl_join_left(f, tl, k, tr)
    return _avl_node(f, k, tl, tr)


# -- red-black ----------------------------------------------------------------
# nil is black with black height 0; roots may be red

@njit(cache=True)
def _bh(f, t):
    if t < 0:
        return 0
    f.rd(t)
    return f.bal[t] >> 1


@njit(cache=True)
def _red(f, t):
    if t < 0:
        return False
    f.rd(t)
    return (f.bal[t] & 1) == 1


@njit(cache=True)
def _rb_node(f, x, l, r, red):
    b = _bh(f, l) + (0 if red else 1)
    f.set_node(x, l, r, (b << 1) | (1 if red else 0))
    return x


@njit(cache=True)
def _rb_blacken(f, x):
    f.rd(x)
    return _rb_node(f, x, f.left[x], f.right[x], False)


@njit(cache=True)
def _rb_join_right(f, tl, k, tr):
    if not _red(f, tl) and _bh(f, tl) == _bh(f, tr):
        return _rb_node(f, k, tl, tr, True)
    f.rd(tl)
    l = f.left[tl]
    red = (f.bal[tl] & 1) == 1
    t1 = _rb_join_right(f, f.right[tl], k, tr)
    f.rd(t1)
    if not red and _red(f, t1) and _red(f, f.right[t1]):
        _rb_blacken(f, f.right[t1])
        _rb_node(f, tl, l, f.left[t1], False)
        f.rotations += 1
        return _rb_node(f, t1, tl, f.right[t1], True)
    return _rb_node(f, tl, l, t1, red)


@njit(cache=True)
def _rb_join_left(f, tl, k, tr):
    if not _red(f, tr) and _bh(f, tr) == _bh(f, tl):
        return _rb_node(f, k, tl, tr, True)
    f.rd(tr)
    r = f.right[tr]
    red = (f.bal[tr] & 1) == 1
    t1 = _rb_join_left(f, tl, k, f.left[tr])
    f.rd(t1)
    if not red and _red(f, t1) and _red(f, f.left[t1]):
        _rb_blacken(f, f.left[t1])
        _rb_node(f, tr, f.right[t1], r, False)
        f.rotations += 1
        return _rb_node(f, t1, f.left[t1], tr, True)
    return _rb_node(f, tr, t1, r, red)


@njit(cache=True)
def _rb_join(f, tl, k, tr):
    bl = _bh(f, tl)
    br = _bh(f, tr)
    if bl > br:
        t = _rb_join_right(f, tl, k, tr)
        f.rd(t)
        if _red(f, t) and _red(f, f.right[t]):
            return _rb_blacken(f, t)
        return t
    if br > bl:
        t = _rb_join_left(f, tl, k, tr)
        f.rd(t)
        if _red(f, t) and _red(f, f.left[t]):
            return _rb_blacken(f, t)
        return t
    if _red(f, tl) or _red(f, tr):
        return _rb_node(f, k, tl, tr, False)
    if f.rb_keep_color and f.bal[k] >= 0 and f.left[k] == tl and f.right[k] == tr:
        # unchanged children: the old color is still valid and costs no write
        return _rb_node(f, k, tl, tr, (f.bal[k] & 1) == 1)
    return _rb_node(f, k, tl, tr, True)


# -- treap ----------------------------------------------------------------------

@njit(cache=True)
def _above(f, a, b):
    """True when node a outranks node b by (priority, key); nil ranks lowest."""
    if b < 0:
        return True
    f.rd(a)
    f.rd(b)
    if f.bal[a] != f.bal[b]:
        return f.bal[a] > f.bal[b]
    return f.key[a] > f.key[b]


@njit(cache=True)
def _treap_join(f, tl, k, tr):
    if _above(f, k, tl) and _above(f, k, tr):
        f.set_node(k, tl, tr, f.bal[k])
        return k
    if tl >= 0 and _above(f, tl, tr):
        f.rd(tl)
        t = _treap_join(f, f.right[tl], k, tr)
        f.set_node(tl, f.left[tl], t, f.bal[tl])
        return tl
    f.rd(tr)
    t = _treap_join(f, tl, k, f.left[tr])
    f.set_node(tr, t, f.right[tr], f.bal[tr])
    return tr


# -- generic operations -------------------------------------------------------------

@njit(cache=True)
def join(f, tl, k, tr):
    f.join_depth += 1
    if f.scheme == 0:
        t = _avl_join(f, tl, k, tr)
    elif f.scheme == 1:
        t = _rb_join(f, tl, k, tr)
    else:
        t = _treap_join(f, tl, k, tr)
    f.join_depth -= 1
    return t


@njit(cache=True)
def split(f, t, k):
    if t < 0:
        return NIL, False, NIL
    f.rd(t)
    tk = f.key[t]
    l = f.left[t]
    r = f.right[t]
    if k == tk:
        return l, True, r
    if k < tk:
        a, found, b = split(f, l, k)
        return a, found, join(f, b, t, r)
    a, found, b = split(f, r, k)
    return join(f, l, t, a), found, b


@njit(cache=True)
def split_last(f, t):
    f.rd(t)
    if f.right[t] < 0:
        return f.left[t], t
    rest, m = split_last(f, f.right[t])
    return join(f, f.left[t], t, rest), m


@njit(cache=True)
def join2(f, tl, tr):
    if tl < 0:
        return tr
    rest, m = split_last(f, tl)
    return join(f, rest, m, tr)


@njit(cache=True)
def union(f, t1, t2):
    if t1 < 0:
        return t2
    if t2 < 0:
        return t1
    f.rd(t1)
    l1 = f.left[t1]
    r1 = f.right[t1]
    l2, _, r2 = split(f, t2, f.key[t1])
    return join(f, union(f, l1, l2), t1, union(f, r1, r2))


@njit(cache=True)
def difference(f, t1, t2):
    if t1 < 0:
        return NIL
    if t2 < 0:
        return t1
    f.rd(t1)
    l1 = f.left[t1]
    r1 = f.right[t1]
    l2, found, r2 = split(f, t2, f.key[t1])
    l = difference(f, l1, l2)
    r = difference(f, r1, r2)
    if found:
        return join2(f, l, r)
    return join(f, l, t1, r)


@njit(cache=True)
def singleton(f, k):
    return join(f, NIL, f.new_node(k), NIL)


@njit(cache=True)
def build_sorted(f, keys, lo, hi):
    """Balanced tree over sorted distinct keys[lo:hi], assembled by joins."""
    if lo >= hi:
        return NIL
    mid = (lo + hi) // 2
    x = f.new_node(keys[mid])
    l = build_sorted(f, keys, lo, mid)
    r = build_sorted(f, keys, mid + 1, hi)
    return join(f, l, x, r)


@njit(cache=True)
def depth_sum(f, t):
    """(node count, sum of depths with the root at depth 1); no memory traffic."""
    if t < 0:
        return 0, 0
    stack = np.empty(_STACK, np.int64)
    depth = np.empty(_STACK, np.int64)
    stack[0] = t
    depth[0] = 1
    top = 1
    n = 0
    total = 0
    while top > 0:
        top -= 1
        x = stack[top]
        d = depth[top]
        n += 1
        total += d
        for c in (f.left[x], f.right[x]):
            if c >= 0:
                stack[top] = c
                depth[top] = d + 1
                top += 1
    return n, total


@njit(cache=True)
def inorder(f, t, out):
    """Write keys of t into out in order; return the count.  No memory traffic."""
    stack = np.empty(_STACK, np.int64)
    top = 0
    n = 0
    x = t
    while x >= 0 or top > 0:
        while x >= 0:
            stack[top] = x
            top += 1
            x = f.left[x]
        top -= 1
        x = stack[top]
        out[n] = f.key[x]
        n += 1
        x = f.right[x]
    return n


@njit(cache=True)
def count_nodes(f, t):
    return depth_sum(f, t)[0]


@njit(cache=True)
def batch_updates(f, root, keys, batch, insert):
    """Apply keys in consecutive batches by union (insert) or difference.

    Each batch becomes a balanced tree built by joins over its sorted keys.
    """
    n = keys.shape[0]
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        chunk = np.unique(keys[lo:hi])
        b = build_sorted(f, chunk, 0, chunk.shape[0])
        if insert:
            root = union(f, root, b)
        else:
            root = difference(f, root, b)
    return root


# -- Python facade --------------------------------------------------------------------

class BalancedTree:
    """Handle on one tree of a shared node pool.

    Operations consume their tree arguments; keep the returned tree.
    """

    __slots__ = ("pool", "root")

    def __init__(self, pool: "NodePool", root: int = NIL):
        self.pool = pool
        self.root = root

    @property
    def scheme(self) -> Scheme:
        return self.pool.scheme

    def __len__(self) -> int:
        return int(count_nodes(self.pool.core, self.root))

    def keys(self) -> list[int]:
        out = np.empty(len(self), np.int64)
        if self.root >= 0:
            inorder(self.pool.core, self.root, out)
        return out.tolist()

    def avg_depth(self) -> float | None:
        n, total = depth_sum(self.pool.core, self.root)
        return None if n == 0 else total / n

    def __contains__(self, k: int) -> bool:
        f = self.pool.core
        x = self.root
        while x >= 0:
            f.rd(x)
            if k == f.key[x]:
                return True
            x = f.left[x] if k < f.key[x] else f.right[x]
        return False


class NodePool:
    """Arena of 16-byte tree nodes for one balancing scheme."""

    def __init__(self, sim: Simulator, scheme: Scheme, seed: int = 0,
                 rb_keep_color: bool = False):
        self.sim = sim
        self.scheme = Scheme(scheme)
        self.core = Forest(sim.core, int(self.scheme), seed & 0x7FFFFFFFFFFFFFFF, rb_keep_color)

    def empty(self) -> BalancedTree:
        return BalancedTree(self)

    def from_keys(self, keys) -> BalancedTree:
        arr = np.unique(np.fromiter(keys, dtype=np.int64))
        return BalancedTree(self, int(build_sorted(self.core, arr, 0, arr.shape[0])))

    def _own(self, *trees: BalancedTree) -> None:
        for t in trees:
            if t.pool is not self:
                raise ValueError("trees belong to different pools")


def _check_key(k: int) -> None:
    if not 0 <= k < 1 << 32:
        raise ValueError("keys are 32-bit unsigned integers")


def _extreme(pool: NodePool, t: int, right: bool) -> int | None:
    f = pool.core
    if t < 0:
        return None
    while True:
        c = f.right[t] if right else f.left[t]
        if c < 0:
            return int(f.key[t])
        t = c


def join_trees(tl: BalancedTree, k: int, tr: BalancedTree) -> BalancedTree:
    pool = tl.pool
    pool._own(tr)
    _check_key(k)
    lo = _extreme(pool, tl.root, True)
    hi = _extreme(pool, tr.root, False)
    if (lo is not None and lo >= k) or (hi is not None and hi <= k):
        raise ValueError("join needs max(TL) < k < min(TR)")
    f = pool.core
    return BalancedTree(pool, int(join(f, tl.root, f.new_node(k), tr.root)))


def split_tree(t: BalancedTree, k: int) -> tuple[BalancedTree, bool, BalancedTree]:
    l, found, r = split(t.pool.core, t.root, k)
    return BalancedTree(t.pool, int(l)), bool(found), BalancedTree(t.pool, int(r))


def union_trees(t1: BalancedTree, t2: BalancedTree) -> BalancedTree:
    t1.pool._own(t2)
    return BalancedTree(t1.pool, int(union(t1.pool.core, t1.root, t2.root)))


def difference_trees(t1: BalancedTree, t2: BalancedTree) -> BalancedTree:
    t1.pool._own(t2)
    return BalancedTree(t1.pool, int(difference(t1.pool.core, t1.root, t2.root)))


def insert_one(t: BalancedTree, k: int) -> BalancedTree:
    _check_key(k)
    f = t.pool.core
    return BalancedTree(t.pool, int(union(f, t.root, singleton(f, k))))


def delete_one(t: BalancedTree, k: int) -> BalancedTree:
    _check_key(k)
    f = t.pool.core
    return BalancedTree(t.pool, int(difference(f, t.root, singleton(f, k))))
