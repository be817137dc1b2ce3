import csv
import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asymmem import bench
from asymmem.__main__ import main
from asymmem.bench import BenchSpec, ConfigError, Experiment, ResultRow
from asymmem.memsim import SimConfig

TINY = dict(scale=0.001, ks=(1, 2), alphas=(Fraction(0), Fraction(1, 2)))


def tiny_hash(**kw):
    return BenchSpec(Experiment.HASH, **{**TINY, **kw})


@pytest.mark.parametrize("kw", [dict(scale=0), dict(scale=1.5), dict(omegas=(0,)),
                                dict(omegas=(-1,)), dict(ks=(0,)), dict(variants=("classic",)),
                                dict(graph="no-such-file.txt"), dict(elem_bytes=(12,)),
                                dict(l=0.5, r=0.4)])
def test_spec_rejects_bad_config(kw):
    with pytest.raises(ConfigError):
        BenchSpec(Experiment.HASH, **kw)


def test_unknown_variant_for_graph_experiment():
    with pytest.raises(ConfigError):
        BenchSpec(Experiment.BFS, variants=("phased",))
    with pytest.raises(ConfigError):
        BenchSpec(Experiment.SORT_INDIRECT, elem_bytes=(16,))


def test_scaled_cache_sizes():
    spec = BenchSpec(Experiment.SORT, scale=0.01)
    assert spec.lines() == (2, 10, 100) and spec.n() == 10**5
    assert BenchSpec(Experiment.SORT, scale=0.001).lines() == (2, 10)


def test_query_schedule_examples():
    assert bench.query_schedule(Fraction(0), 10).tolist() == []
    assert bench.query_schedule(Fraction(1, 8), 16).tolist() == [7, 15]
    assert bench.query_schedule(Fraction(2), 3).tolist() == [0, 0, 1, 1, 2, 2]


@given(st.fractions(min_value=0, max_value=8, max_denominator=16), st.integers(1, 300))
def test_query_schedule_spreads_evenly(alpha, steps):
    q = bench.query_schedule(alpha, steps)
    assert len(q) == int(alpha * steps)
    assert (np.diff(q) >= 0).all()
    done = np.searchsorted(q, np.arange(steps), side="right")  # queries after step t
    want = [int((t + 1) * alpha) for t in range(steps)]
    assert done.tolist() == want


def test_empty_grid_gives_no_rows():
    rows = bench.run(tiny_hash(ks=()))
    assert rows == []
    assert bench.emit(rows) == "experiment,rt,wt\n"


def test_run_is_deterministic():
    a, b = bench.emit(bench.run(tiny_hash())), bench.emit(bench.run(tiny_hash()))
    assert a == b and len(a.splitlines()) == 5


def test_hash_query_mix():
    rows = bench.run(tiny_hash(ks=(2,), alphas=(Fraction(1, 4),)))
    assert rows[0].aux["queries"] == pytest.approx(0.25, abs=1e-3)


def test_emit_one_row():
    row = ResultRow("sort", {"cache_lines": 100, "algorithm": "quicksort"}, 2.0612, 2.0449,
                    (Fraction(10), Fraction(1, 2)), {"comparisons": 39.49})
    text = bench.emit([row])
    header, rec = list(csv.reader(io.StringIO(text)))
    assert header == ["experiment", "cache_lines", "algorithm", "rt", "wt", "io_w10",
                      "io_w1_2", "comparisons"]
    assert rec == ["sort", "100", "quicksort", "2.06", "2.04", "22.46", "3.08", "39.49"]


@given(st.floats(0, 500), st.floats(0, 50), st.lists(st.fractions(min_value=Fraction(1, 8),
       max_value=1000, max_denominator=8), min_size=1, max_size=4, unique=True))
def test_io_cost_recomputable_from_printed_columns(rt, wt, omegas):
    rec = dict(zip(*[list(r) for r in csv.reader(io.StringIO(
        bench.emit([ResultRow("x", {}, rt, wt, tuple(omegas))])))]))
    for w in omegas:
        got = float(rec[bench.omega_column(w)])
        assert got == pytest.approx(float(rec["rt"]) + float(w) * float(rec["wt"]), abs=0.006)


def test_table_format_aligns():
    text = bench.emit(bench.run(tiny_hash()), "table")
    lines = text.splitlines()
    assert len({len(ln) for ln in lines}) == 1 and set(lines[1]) <= {"-", " "}
    with pytest.raises(ConfigError):
        bench.emit([], "json")


def _rows():
    return [ResultRow("hash", {"cache_lines": 10, "k": k, "alpha": "0"}, rt, wt, (Fraction(10),))
            for k, rt, wt in ((1, 1.35, 1.17), (2, 0.85, 0.79))]


def _ref(text):
    return bench.read_reference(io.StringIO(text))


def test_compare_identical_passes():
    rows = _rows()
    report = bench.compare(rows, _ref(bench.emit(rows)))
    assert report.ok and report.exit_status() == 0
    assert len(report.cells) == 6 and not report.missing


def test_compare_flags_a_cell_off_by_twice_the_tolerance():
    ref = _ref("# provenance\nexperiment,cache_lines,k,alpha,rt,wt\nhash,10,1,0,1.35,1.17\n"
               "hash,10,2,0,0.85,0.658\n")
    report = bench.compare(_rows(), ref, {"*": 0.10})
    assert [c.column for c in report.failures] == ["wt"]
    assert report.failures[0].deviation == pytest.approx(0.2, abs=0.01)
    assert report.exit_status() == 1 and "FAIL" in report.format()


def test_compare_reports_missing_cells():
    ref = _ref("experiment,cache_lines,k,alpha,rt,wt\nhash,10,3,0,0.76,0.72\nhash,10,1,0,1.35,\n")
    report = bench.compare(_rows(), ref)
    assert report.ok
    assert len(report.missing) == 2 and len(report.cells) == 3
    assert "missing" in report.format()


def test_compare_tolerance_precedence():
    ref = _ref("experiment,cache_lines,k,alpha,rt,wt,tol,tol_wt\nhash,10,1,0,1.5,1.5,0.2,0.1\n")
    report = bench.compare(_rows(), ref, {"*": 0.0})
    assert [(c.column, c.tol, c.ok) for c in report.cells] == [("rt", 0.2, True), ("wt", 0.1, False)]


def test_compare_half_unit_slack():
    ref = _ref("experiment,cache_lines,k,alpha,wt\nhash,10,1,0,1.175\n")
    assert bench.compare(_rows(), ref, {"*": 0.0}).ok


KEYS = {
    "hashtable-raw": {"cache_lines", "k", "alpha"},
    "hashtable-delete-raw": {"cache_lines", "k", "alpha"},
    "bst-table": {"cache_lines", "batch", "scheme", "op"},
    "sort": {"cache_lines", "algorithm", "elem_bytes"},
    "sort-ind": {"cache_lines", "algorithm"},
    "bfs-raw": {"graph", "cache_lines", "variant"},
    "dijk-raw": {"graph", "cache_lines", "variant"},
}


@pytest.mark.parametrize("name", sorted(KEYS))
def test_bundled_references_parse(name):
    path = bench.bundled_reference(name)
    assert path.read_text().startswith("#")
    rows = bench.read_reference(path)
    assert rows
    for r in rows:
        keys = {c for c in r if not bench._is_metric(c) and not c.startswith("tol")}
        assert keys - {"experiment"} == KEYS[name]
        assert all(float(r[c]) > 0 for c in r if bench._is_metric(c) and r[c])
        assert 0 < float(r["tol"]) <= 0.2
    assert {r["experiment"] for r in rows} <= {e.value for e in Experiment}


def test_build_graph(tmp_path):
    g = bench.build_graph("grid2d", scale=0.0001)
    assert g.n == 100
    h = bench.build_graph("grid2d+relabel", scale=0.0001, seed=1, weighted=True)
    assert h.m == g.m and h.weights is not None
    p = tmp_path / "tiny.txt"
    p.write_text("0 1\n1 2\n")
    assert bench.build_graph(str(p)).n == 3
    with pytest.raises(ConfigError):
        bench.build_graph("grid2d+shuffle")


def test_graph_rows_per_variant():
    spec = BenchSpec(Experiment.DIJKSTRA, scale=0.0001, cache_lines=(100_000,), queries=2)
    rows = bench.run(spec)
    assert [r.params["variant"] for r in rows] == ["heap", "phased"]
    assert rows[1].aux["phases"] >= 1
    spec = BenchSpec(Experiment.BFS, sim=SimConfig(), scale=0.0001, cache_lines=(10**5,),
                     variants=("rotating",))
    (row,) = bench.run(spec)
    assert row.params == {"graph": "grid2d", "cache_lines": 10, "variant": "rotating"}


def test_cli_runs_and_compares(tmp_path, capsys):
    argv = ["hash", "--scale", "0.001", "--k", "1", "--alpha", "0", "--omega", "10"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "experiment,cache_lines,k,alpha,rt,wt,io_w10,queries,grows,shrinks"
    ref = tmp_path / "ref.csv"
    ref.write_text(out)
    assert main(argv + ["--compare", str(ref)]) == 0
    rec = out.splitlines()[1].split(",")
    rec[5] = f"{2 * float(rec[5]):.2f}"
    ref.write_text(out.splitlines()[0] + "\n" + ",".join(rec) + "\n")
    assert main(argv + ["--compare", str(ref)]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_cli_configuration_errors(tmp_path, capsys):
    assert main(["hash", "--scale", "2"]) == 2
    assert main(["sort", "--algorithm", "bogosort"]) == 2
    assert main(["hash", "--compare", str(tmp_path / "nope.csv")]) == 2
    assert "configuration error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["hash", "--omega", "ten"])


def test_cli_trace(tmp_path, capsys):
    path = tmp_path / "t.txt"
    assert main(["sort", "--scale", "0.00001", "--cache-lines", "1000", "--algorithm", "quicksort",
                 "--trace", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# sort") and lines[1][0] in "RW"
