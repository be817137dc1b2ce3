"""python -m asymmem <experiment> [flags]: run a table's protocol and print rows."""
import argparse
import sys
from pathlib import Path

from . import bench
from .memsim import Policy, SimConfig
from .ordered import Scheme
from .sorts import Algorithm


def _policy(text: str) -> Policy:
    try:
        return Policy[text.upper().replace("-", "_")]
    except KeyError:
        raise argparse.ArgumentTypeError(f"policy must be one of {[p.name.lower() for p in Policy]}")


def _fraction(text: str):
    try:
        return bench.parse_fraction(text)
    except bench.ConfigError as e:
        raise argparse.ArgumentTypeError(str(e))


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asymmem", description=__doc__)
    sub = p.add_subparsers(dest="experiment", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cache-lines", type=int, action="append", help="repeatable; default: the table's sizes")
    common.add_argument("--line-bytes", type=int, default=64)
    common.add_argument("--policy", type=_policy, help="classic, split_pool or static_pin")
    common.add_argument("--omega", type=_fraction, action="append", help="repeatable; default 10 and 100")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--scale", type=float, default=1.0, help="input and cache size multiplier in (0, 1]")
    common.add_argument("--k", type=int, action="append", help="hash levels (repeatable)")
    common.add_argument("--alpha", type=_fraction, action="append", help="queries per update (repeatable)")
    common.add_argument("--batch-size", type=int, action="append", help="BST batch sizes (repeatable)")
    common.add_argument("--elem-bytes", type=int, action="append", help="sort entry sizes (repeatable)")
    common.add_argument("--algorithm", action="append", help="sort algorithm or graph variant (repeatable)")
    common.add_argument("--graph", help="grid2d, grid3d, powerlaw or an edge-list path; '+relabel' shuffles ids")
    common.add_argument("--queries", type=int, default=10)
    common.add_argument("--epsilon", type=float, default=0.25)
    common.add_argument("--pq-fraction", type=float, default=0.4)
    common.add_argument("--format", choices=("csv", "table"), default="csv")
    common.add_argument("--compare", type=Path, help="reference CSV; exit status reports the comparison")
    common.add_argument("--trace", type=Path, help="write every simulated access here (large)")
    for e in bench.Experiment:
        sub.add_parser(e.value, parents=[common])
    return p


def spec_from_args(a: argparse.Namespace) -> bench.BenchSpec:
    exp = bench.Experiment(a.experiment)
    # the Dijkstra tables were measured with the queue pinned in cache
    policy = a.policy if a.policy is not None else (
        Policy.STATIC_PIN if exp == bench.Experiment.DIJKSTRA else Policy.CLASSIC)
    kw = dict(experiment=exp, sim=SimConfig(line_bytes=a.line_bytes, policy=policy), seed=a.seed,
              scale=a.scale, graph=a.graph, queries=a.queries, epsilon=a.epsilon,
              pq_fraction=a.pq_fraction, trace=a.trace)
    if a.cache_lines:
        kw["cache_lines"] = tuple(a.cache_lines)
    if a.omega:
        kw["omegas"] = tuple(a.omega)
    if a.k:
        kw["ks"] = tuple(a.k)
    if a.alpha:
        kw["alphas"] = tuple(a.alpha)
    if a.batch_size:
        kw["batch_sizes"] = tuple(a.batch_size)
    if a.elem_bytes:
        kw["elem_bytes"] = tuple(a.elem_bytes)
    if a.algorithm:
        if exp in (bench.Experiment.SORT, bench.Experiment.SORT_INDIRECT):
            try:
                kw["algorithms"] = tuple(Algorithm[x.upper()] for x in a.algorithm)
            except KeyError as e:
                raise bench.ConfigError(f"unknown sort algorithm {e}") from None
        elif exp == bench.Experiment.BST:
            try:
                kw["schemes"] = tuple(Scheme[x.upper()] for x in a.algorithm)
            except KeyError as e:
                raise bench.ConfigError(f"unknown balancing scheme {e}") from None
        else:
            kw["variants"] = tuple(a.algorithm)
    return bench.BenchSpec(**kw)


def main(argv=None) -> int:
    a = parser().parse_args(argv)
    try:
        spec = spec_from_args(a)
        if a.compare is not None and not a.compare.is_file():
            raise bench.ConfigError(f"no such reference file: {a.compare}")
    except (bench.ConfigError, ValueError) as e:
        print(f"asymmem: configuration error: {e}", file=sys.stderr)
        return 2
    rows = bench.run(spec)
    sys.stdout.write(bench.emit(rows, a.format))
    if a.compare is None:
        return 0
    report = bench.compare(rows, a.compare)
    sys.stderr.write(report.format())
    return report.exit_status()


if __name__ == "__main__":
    sys.exit(main())
