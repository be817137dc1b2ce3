"""Experiment harness: parameter grids in, per-element transfer counts out.

Every combination runs on a fresh simulator, so rows are independent and a
given (spec, seed) always produces the same output.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

from . import graphs, sorts
from .khash import HashParams, new_core
from .memsim import SimConfig, Simulator
from .ordered import NodePool, Scheme, batch_updates, depth_sum


class ConfigError(ValueError):
    pass


class Experiment(str, Enum):
    HASH = "hash"
    HASH_DELETE = "hash_delete"
    BST = "bst"
    SORT = "sort"
    SORT_INDIRECT = "sort_indirect"
    BFS = "bfs"
    DIJKSTRA = "dijkstra"


# default input sizes and cache grids of the reference tables
BASE_N = {
    Experiment.HASH: 10**6,
    Experiment.HASH_DELETE: 10**6,
    Experiment.BST: 10**6,
    Experiment.SORT: 10**7,
    Experiment.SORT_INDIRECT: 2 * 10**6,
}
DEFAULT_LINES = {
    Experiment.HASH: (10_000,),
    Experiment.HASH_DELETE: (10_000,),
    Experiment.BST: (10_000,),
    Experiment.SORT: (100, 1000, 10_000),
    Experiment.SORT_INDIRECT: (100, 1000, 10_000),
    Experiment.BFS: (500, 2000, 10_000),
    Experiment.DIJKSTRA: (2000, 10_000, 50_000),
}
DEFAULT_ALPHAS = {
    Experiment.HASH: tuple(Fraction(a) for a in ("0", "1/8", "1/4", "1/2", "1", "2", "4", "8")),
    Experiment.HASH_DELETE: tuple(Fraction(a) for a in ("0", "1/4", "1", "4")),
}
DEFAULT_GRAPH = {Experiment.BFS: "grid2d", Experiment.DIJKSTRA: "grid2d+relabel"}
BFS_VARIANTS = ("classic", "rotating", "bi-classic", "bi-rotating")
DIJKSTRA_VARIANTS = ("heap", "phased")
GENERATORS = ("grid2d", "grid3d", "powerlaw")


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"not a rational number: {text!r}") from e


def fmt_fraction(x: Fraction) -> str:
    return str(Fraction(x))


@dataclass(frozen=True)
class BenchSpec:
    experiment: Experiment
    sim: SimConfig = field(default_factory=SimConfig)
    omegas: tuple[Fraction, ...] = (Fraction(10), Fraction(100))
    scale: float = 1.0
    seed: int = 0
    cache_lines: tuple[int, ...] | None = None  # None: the table's own cache sizes
    ks: tuple[int, ...] = (1, 2, 3, 4)
    alphas: tuple[Fraction, ...] | None = None
    l: float = 0.2
    r: float = 0.8
    batch_sizes: tuple[int, ...] = (1, 1000, 10_000, 100_000)
    schemes: tuple[Scheme, ...] = (Scheme.AVL, Scheme.RED_BLACK, Scheme.TREAP)
    algorithms: tuple[sorts.Algorithm, ...] = tuple(sorts.Algorithm)
    elem_bytes: tuple[int, ...] = (8,)
    variants: tuple[str, ...] | None = None
    graph: str | None = None
    queries: int = 10
    epsilon: float = 0.25
    pq_fraction: float = 0.4
    trace: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "experiment", Experiment(self.experiment))
        object.__setattr__(self, "omegas", tuple(Fraction(w) for w in self.omegas))
        if self.alphas is not None:
            object.__setattr__(self, "alphas", tuple(Fraction(a) for a in self.alphas))
        self.validate()

    def validate(self) -> None:
        if not 0 < self.scale <= 1:
            raise ConfigError(f"scale must lie in (0, 1], got {self.scale}")
        if any(w <= 0 for w in self.omegas):
            raise ConfigError("omega values must be positive")
        if self.cache_lines is not None and any(c < 2 for c in self.cache_lines):
            raise ConfigError("cache sizes need at least 2 lines")
        if any(k < 1 for k in self.ks):
            raise ConfigError("k must be at least 1")
        if self.alphas is not None and any(a < 0 for a in self.alphas):
            raise ConfigError("alpha must be nonnegative")
        if any(b < 1 for b in self.batch_sizes):
            raise ConfigError("batch sizes must be positive")
        if any(e not in (8, 16, 32, 64) for e in self.elem_bytes):
            raise ConfigError("elem_bytes must be 8, 16, 32 or 64")
        if self.queries < 1:
            raise ConfigError("need at least one query")
        known = {Experiment.BFS: BFS_VARIANTS, Experiment.DIJKSTRA: DIJKSTRA_VARIANTS}.get(self.experiment)
        if self.variants is not None:
            if known is None or any(v not in known for v in self.variants):
                raise ConfigError(f"unknown variants {self.variants} for {self.experiment.value}")
        if self.experiment == Experiment.SORT_INDIRECT and self.elem_bytes != (8,):
            raise ConfigError("indirect sorts move 8-byte references; elem_bytes does not apply")
        try:
            HashParams(k=1, l=self.l, r=self.r)
            graphs.PhasedParams(epsilon=self.epsilon, pq_cache_fraction=self.pq_fraction)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.graph is not None:
            name = self.graph.split("+")[0]
            if name not in GENERATORS and not Path(name).is_file():
                raise ConfigError(f"graph must be one of {GENERATORS} or an edge-list file, got {self.graph!r}")

    def lines(self) -> tuple[int, ...]:
        """Cache sizes after scaling; the scale shrinks inputs and caches alike."""
        base = self.cache_lines if self.cache_lines is not None else DEFAULT_LINES[self.experiment]
        return tuple(dict.fromkeys(max(2, round(c * self.scale)) for c in base))

    def n(self) -> int:
        return max(1, round(BASE_N[self.experiment] * self.scale))


@dataclass
class ResultRow:
    experiment: str
    params: dict[str, object]
    rt: float
    wt: float
    omegas: tuple[Fraction, ...] = ()
    aux: dict[str, float] = field(default_factory=dict)

    @property
    def io_cost(self) -> dict[Fraction, float]:
        # computed from the printed rates so the columns agree to the last digit
        rt, wt = round(self.rt, 2), round(self.wt, 2)
        return {w: rt + float(w) * wt for w in self.omegas}


# -- experiments ----------------------------------------------------------------------


@njit(cache=True)
def _hash_run(core, keys, qafter, qkeys, deletes):
    """Insert keys[t] (then delete deletes[t - n]); after step t run its queries."""
    n = keys.shape[0]
    qi = 0
    nq = qkeys.shape[0]
    for t in range(n + deletes.shape[0]):
        if t < n:
            core.insert(keys[t])
        else:
            core.delete(deletes[t - n])
        while qi < nq and qafter[qi] == t:
            core.lookup(qkeys[qi])
            qi += 1


def query_schedule(alpha: Fraction, steps: int) -> np.ndarray:
    """Step index after which each query runs: alpha per step, spread evenly."""
    q = math.floor(alpha * steps)
    j = np.arange(q, dtype=np.int64)
    num, den = alpha.numerator, alpha.denominator
    # query j follows the first step t with floor((t + 1) * alpha) > j
    return -(-((j + 1) * den) // num) - 1 if q else j


def _hash_queries(rng, alpha, keys, dels, pool):
    n = len(keys)
    steps = n + (0 if dels is None else len(dels))
    qafter = query_schedule(alpha, steps)
    q = len(qafter)
    hit = rng.random(q) < 0.5
    qkeys = pool[:q].copy()  # misses come from a key range disjoint from the inserts
    u = rng.random(q)
    ins = qafter < n
    # hits: a key inserted so far, or during deletions one not yet deleted
    idx = np.minimum((u * (qafter + 1)).astype(np.int64), n - 1)
    sel = hit & ins
    qkeys[sel] = keys[idx[sel]]
    if dels is not None:
        done = qafter - n + 1  # deletions already applied
        live = n - done
        sel = hit & ~ins & (live > 0)
        pick = done[sel] + (u[sel] * live[sel]).astype(np.int64)
        qkeys[sel] = dels[pick]
    return qafter, qkeys


def _hash_rows(spec: BenchSpec, with_delete: bool) -> list[ResultRow]:
    n = spec.n()
    alphas = spec.alphas if spec.alphas is not None else DEFAULT_ALPHAS[spec.experiment]
    rng = np.random.default_rng(spec.seed)
    steps = 2 * n if with_delete else n
    qmax = max((math.floor(a * steps) for a in alphas), default=0)
    pool = rng.choice(2**31, n + qmax, replace=False).astype(np.uint32)
    keys, miss = pool[:n], pool[n:]
    dels = keys if with_delete else None  # deleted in insertion order
    rows = []
    for lines, k, alpha in itertools.product(spec.lines(), spec.ks, alphas):
        qrng = np.random.default_rng([spec.seed, alpha.numerator, alpha.denominator])
        qafter, qkeys = _hash_queries(qrng, alpha, keys, dels, miss)
        sim = _sim(spec, lines)
        core = new_core(sim, HashParams(k=k, l=spec.l, r=spec.r, seed=spec.seed))
        _hash_run(core, keys, qafter, qkeys, dels if dels is not None else keys[:0])
        io = sim.flush()
        _trace(spec, sim, dict(k=k, alpha=alpha))
        rows.append(_row(spec, dict(cache_lines=lines, k=k, alpha=fmt_fraction(alpha)), io, n,
                         dict(queries=len(qkeys) / n, grows=core.grows, shrinks=core.shrinks)))
    return rows


def _bst_rows(spec: BenchSpec) -> list[ResultRow]:
    n = spec.n()
    rng = np.random.default_rng(spec.seed)
    keys = rng.choice(2**32, n, replace=False).astype(np.int64)
    order = rng.permutation(keys)
    rows = []
    for lines, b, scheme in itertools.product(spec.lines(), spec.batch_sizes, spec.schemes):
        sim = _sim(spec, lines)
        pool = NodePool(sim, scheme, seed=spec.seed)
        root = batch_updates(pool.core, -1, keys, b, True)
        ins = sim.flush()
        _, total = depth_sum(pool.core, root)
        depth = total / n
        sim.reset()
        batch_updates(pool.core, root, order, b, False)
        dl = sim.flush()
        _trace(spec, sim, dict(batch=b, scheme=scheme.name))
        base = dict(cache_lines=lines, batch=b, scheme=scheme.name.lower())
        rows.append(_row(spec, dict(base, op="insert"), ins, n, dict(avg_depth=depth)))
        rows.append(_row(spec, dict(base, op="delete"), dl, n, dict(avg_depth=depth)))
    return rows


def _sort_rows(spec: BenchSpec, indirect: bool) -> list[ResultRow]:
    n = spec.n()
    data = np.random.default_rng(spec.seed).random(n)
    rows = []
    for lines, eb, alg in itertools.product(spec.lines(), spec.elem_bytes, spec.algorithms):
        sim = _sim(spec, lines)
        if indirect:
            inp = sorts.SortInput.indirect(sim, data, spec.seed)
        else:
            inp = sorts.SortInput.direct(sim, data, eb)
        st = sorts.sort(alg, inp, spec.seed)
        _trace(spec, sim, dict(alg=alg.name, elem_bytes=eb))
        aux = dict(comparisons=st.comparisons / n)
        if st.avg_depth is not None:
            aux["avg_depth"] = st.avg_depth
        if st.rounds is not None:
            aux["rounds"] = st.rounds
        params = dict(cache_lines=lines, algorithm=alg.name.lower())
        if not indirect:
            params["elem_bytes"] = eb
        rows.append(_row(spec, params, st.io, n, aux))
    return rows


def build_graph(gen: str, scale: float = 1.0, seed: int = 0, weighted: bool = False) -> graphs.Graph:
    """`grid2d`, `grid3d`, `powerlaw` or an edge-list path, optionally `+relabel`.

    Generators are sized to 10^6 vertices times `scale`; files load unscaled.
    """
    name, *mods = gen.split("+")
    if name == "grid2d":
        side = max(1, round(1000 * math.sqrt(scale)))
        g = graphs.gen_grid(side, side)
    elif name == "grid3d":
        side = max(1, round(100 * scale ** (1 / 3)))
        g = graphs.gen_grid(side, side, side)
    elif name == "powerlaw":
        g = graphs.gen_powerlaw(max(2, round(10**6 * scale)), seed=seed)
    else:
        g = graphs.load_snap(name)
    for m in mods:
        if m != "relabel":
            raise ConfigError(f"unknown graph modifier {m!r}")
        g = graphs.relabel(g, seed)
    if weighted and g.weights is None:
        graphs.assign_weights(g, seed)
    return g


def _graph_label(gen: str) -> str:
    name, *mods = gen.split("+")
    if name not in GENERATORS:
        name = Path(name).stem
    return "+".join([name, *mods])


def _graph_rows(spec: BenchSpec) -> list[ResultRow]:
    dijkstra = spec.experiment == Experiment.DIJKSTRA
    gen = spec.graph or DEFAULT_GRAPH[spec.experiment]
    g = build_graph(gen, spec.scale, spec.seed, weighted=dijkstra)
    rng = np.random.default_rng(spec.seed)
    src = rng.integers(0, g.n, spec.queries)
    dst = rng.integers(0, g.n, spec.queries)
    variants = spec.variants or (DIJKSTRA_VARIANTS if dijkstra else BFS_VARIANTS)
    params = graphs.PhasedParams(epsilon=spec.epsilon, pq_cache_fraction=spec.pq_fraction)
    # BFS tables report transfers per vertex per 10 queries, Dijkstra per vertex per query
    denom = g.n * spec.queries / (1 if dijkstra else 10)
    rows = []
    for lines, variant in itertools.product(spec.lines(), variants):
        sim = _sim(spec, lines)
        aux: dict[str, float] = {}
        if dijkstra:
            phases = 0
            for s in src:
                if variant == "heap":
                    graphs.dijkstra_heap(sim, g, int(s))
                else:
                    st = graphs.PhasedStats()
                    graphs.dijkstra_phased(sim, g, int(s), params, st)
                    phases += st.phases
            if variant == "phased":
                aux["phases"] = phases / spec.queries
        else:
            levels = widest = 0
            for s, t in zip(src, dst):
                s, t = int(s), int(t)
                if variant == "classic":
                    graphs.bfs_classic(sim, g, s)
                elif variant == "rotating":
                    st = graphs.BfsStats()
                    graphs.bfs_rotating(sim, g, s, st)
                    levels += st.levels
                    widest = max(widest, st.max_frontier)
                else:
                    flavor = graphs.Flavor.CLASSIC if variant == "bi-classic" else graphs.Flavor.ROTATING
                    graphs.bfs_bidirectional(sim, g, s, t, flavor)
            if variant == "rotating":
                aux.update(levels=levels / spec.queries, max_frontier=widest)
        io = sim.flush()
        _trace(spec, sim, dict(variant=variant))
        rows.append(_row(spec, dict(graph=_graph_label(gen), cache_lines=lines, variant=variant),
                         io, denom, aux))
    return rows


def _sim(spec: BenchSpec, lines: int) -> Simulator:
    return Simulator(replace(spec.sim, capacity_lines=lines), trace=spec.trace is not None)


def _row(spec, params, io, denom, aux) -> ResultRow:
    return ResultRow(spec.experiment.value, params, io.read_transfers / denom,
                     io.write_transfers / denom, spec.omegas, aux)


def _trace(spec: BenchSpec, sim: Simulator, params: dict) -> None:
    if spec.trace is None:
        return
    with open(spec.trace, "a") as fh:
        fh.write(f"# {spec.experiment.value} {params}\n")
        for line in sim.trace_lines():
            fh.write(line + "\n")


def run(spec: BenchSpec) -> list[ResultRow]:
    spec.validate()
    if spec.trace is not None:
        Path(spec.trace).write_text("")
    e = spec.experiment
    if e in (Experiment.HASH, Experiment.HASH_DELETE):
        return _hash_rows(spec, e == Experiment.HASH_DELETE)
    if e == Experiment.BST:
        return _bst_rows(spec)
    if e in (Experiment.SORT, Experiment.SORT_INDIRECT):
        return _sort_rows(spec, e == Experiment.SORT_INDIRECT)
    return _graph_rows(spec)


# -- output ---------------------------------------------------------------------------


def omega_column(w: Fraction) -> str:
    return "io_w" + fmt_fraction(w).replace("/", "_")


def columns(rows: list[ResultRow]) -> list[str]:
    params, aux, omegas = {}, {}, {}
    for r in rows:
        params.update(dict.fromkeys(r.params))
        aux.update(dict.fromkeys(r.aux))
        omegas.update(dict.fromkeys(r.omegas))
    return (["experiment", *params, "rt", "wt"] + [omega_column(w) for w in omegas] + list(aux))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def records(rows: list[ResultRow]) -> tuple[list[str], list[list[str]]]:
    cols = columns(rows)
    out = []
    for r in rows:
        d = {"experiment": r.experiment, **r.params, "rt": r.rt, "wt": r.wt, **r.aux}
        d.update({omega_column(w): c for w, c in r.io_cost.items()})
        out.append([_cell(d.get(c)) for c in cols])
    return cols, out


def emit(rows: list[ResultRow], fmt: str = "csv") -> str:
    cols, recs = records(rows)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows(recs)
        return buf.getvalue()
    if fmt != "table":
        raise ConfigError(f"unknown format {fmt!r}")
    widths = [max(len(c), *(len(r[i]) for r in recs)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in [cols, *recs]]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"


# -- comparison against reference values -----------------------------------------------


@dataclass
class Cell:
    key: tuple
    column: str
    got: float | None
    want: float | None
    tol: float

    @property
    def deviation(self) -> float | None:
        if self.got is None or self.want is None:
            return None
        if self.want == 0:
            return 0.0 if self.got == 0 else math.inf
        return (self.got - self.want) / abs(self.want)

    @property
    def ok(self) -> bool | None:
        """None when either side is missing."""
        if self.deviation is None:
            return None
        # half a unit in the last printed digit always passes
        return abs(self.deviation) <= self.tol or abs(self.got - self.want) <= 0.005 + 1e-9


@dataclass
class Report:
    cells: list[Cell]

    @property
    def failures(self) -> list[Cell]:
        return [c for c in self.cells if c.ok is False]

    @property
    def missing(self) -> list[Cell]:
        return [c for c in self.cells if c.ok is None]

    @property
    def ok(self) -> bool:
        return not self.failures

    def exit_status(self) -> int:
        return 0 if self.ok else 1

    def format(self) -> str:
        out = []
        for c in self.cells:
            tag = {True: "ok", False: "FAIL", None: "missing"}[c.ok]
            key = " ".join(f"{k}={v}" for k, v in c.key)
            got = "-" if c.got is None else f"{c.got:.2f}"
            want = "-" if c.want is None else f"{c.want:.2f}"
            dev = "" if c.deviation is None else f" dev={c.deviation:+.1%} tol={c.tol:.0%}"
            out.append(f"{tag:7} {key} {c.column}: got {got} want {want}{dev}")
        n_ok = sum(c.ok is True for c in self.cells)
        out.append(f"{n_ok} ok, {len(self.failures)} failed, {len(self.missing)} missing")
        return "\n".join(out) + "\n"


def read_reference(source) -> list[dict[str, str]]:
    """Rows of a reference CSV; lines starting with '#' are provenance comments."""
    text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def bundled_reference(name: str) -> Path:
    return Path(str(resources.files("asymmem") / "data" / f"{name}.csv"))


METRICS = {"rt", "wt", "comparisons", "avg_depth", "rounds", "phases", "levels",
           "max_frontier", "queries", "grows", "shrinks"}


def _is_metric(col: str) -> bool:
    return col in METRICS or col.startswith("io_w")


def compare(rows: list[ResultRow], reference, tolerances: dict[str, float] | None = None) -> Report:
    """Match reference rows to results on their parameter columns, cell by cell.

    Tolerances are relative.  Precedence: a `tol_<column>` field of the
    reference row, its `tol` field, `tolerances[column]`, `tolerances["*"]`,
    then 10%.
    """
    tolerances = tolerances or {}
    ref = reference if isinstance(reference, list) else read_reference(reference)
    cols, recs = records(rows)
    got = [dict(zip(cols, r)) for r in recs]
    cells = []
    for want in ref:
        key = tuple((c, v) for c, v in want.items()
                    if not _is_metric(c) and not c.startswith("tol"))
        match = next((g for g in got if all(g.get(c) == v for c, v in key)), None)
        for c, v in want.items():
            if not _is_metric(c) or not v:
                continue
            tol = want.get(f"tol_{c}") or want.get("tol") or tolerances.get(c, tolerances.get("*", 0.10))
            g = match.get(c) if match is not None else None
            cells.append(Cell(key, c, float(g) if g else None, float(v), float(tol)))
    return Report(cells)
