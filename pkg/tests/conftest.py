import random

import numpy as np
import pytest
from numba import njit

from asymmem.memsim import Policy, SimConfig, Simulator
from oracles import OP_FLUSH, OP_FREE, OP_PIN, OP_RESET, OP_UNPIN

EBS = (1, 2, 4, 8, 16, 24, 64)
VERDICTS: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    verdict = "PASS" if rep.passed else "FAIL"
    VERDICTS.append(f"{verdict} criterion {m.args[0]}: {m.args[1]}" + (f" | {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@njit
def replay(core, ops, handles):
    for row in range(ops.shape[0]):
        op = ops[row, 0]
        h = handles[ops[row, 1]]
        i = ops[row, 2]
        c = ops[row, 3]
        if op == 0:
            core.read(h, i)
        elif op == 1:
            core.write(h, i)
        elif op == 2:
            core.pin(h, i, c)
        elif op == 3:
            core.unpin(h, i, c)
        elif op == 4:
            core.free(h)
        elif op == 5:
            core.flush()
        else:
            core.reset()
    core.flush()
    return core.total_rt(), core.total_wt()


def random_trace(rng: random.Random, policy: Policy, max_ops: int = 10_000, max_lines: int = 64):
    """Random trace over at most `max_lines` lines; returns (config, layout, ops)."""
    capacity = rng.randint(2, 16)
    cfg = SimConfig(capacity_lines=capacity, policy=policy,
                    split_fraction=rng.choice([0.25, 0.5, 0.75]) if capacity >= 4 else 0.5)
    layout = []
    lines = 0
    while True:
        eb = rng.choice(EBS)
        length = rng.randint(1, 48)
        need = -(-length * eb // 64)
        if lines + need > max_lines:
            break
        layout.append((length, eb))
        lines += need
        if len(layout) >= 6:
            break
    if not layout:
        layout.append((1, 8))
    live = set(range(len(layout)))
    pinned: set[tuple[int, int]] = set()
    ops = []
    for _ in range(rng.randint(1, max_ops)):
        x = rng.random()
        h = rng.choice(sorted(live)) if live else None
        if h is None:
            break
        length, eb = layout[h]
        if x < 0.004 and len(live) > 1:
            ops.append((OP_FREE, h, 0, 0))
            live.discard(h)
            pinned = {p for p in pinned if p[0] != h}
        elif x < 0.006:
            ops.append((OP_FLUSH, 0, 0, 0))
        elif x < 0.007:
            ops.append((OP_RESET, 0, 0, 0))
        elif policy == Policy.STATIC_PIN and x < 0.03:
            first = rng.randrange(length)
            count = rng.randint(1, min(4, length - first))
            span = {(h, ln) for ln in range(first * eb // 64, ((first + count) * eb - 1) // 64 + 1)}
            if rng.random() < 0.6:
                if len(pinned | span) <= capacity - 1:
                    ops.append((OP_PIN, h, first, count))
                    pinned |= span
            else:
                ops.append((OP_UNPIN, h, first, count))
                pinned -= span
        else:
            ops.append((int(rng.random() < 0.45), h, rng.randrange(length), 0))
    return cfg, layout, np.array(ops, dtype=np.int64).reshape(-1, 4)


def run_pair(cfg, layout, ops):
    """Run a trace through the simulator and the reference; return both results."""
    from oracles import reference_cache

    sim = Simulator(cfg)
    arrs = [sim.alloc_array(n, eb) for n, eb in layout]
    handles = np.array([a.handle for a in arrs], np.int64)
    got = replay(sim.core, ops, handles)
    bases = np.array([a.base_address for a in arrs], np.int64)
    ebs = np.array([eb for _, eb in layout], np.int64)
    lens = np.array([n for n, _ in layout], np.int64)
    read_cap = cfg.pool_sizes()[0]
    want = reference_cache(ops, bases, ebs, lens, cfg.line_bytes, cfg.capacity_lines,
                           int(cfg.policy), read_cap)
    return tuple(int(v) for v in got), tuple(int(v) for v in want)


@pytest.fixture
def sim():
    return Simulator(SimConfig(capacity_lines=8))
