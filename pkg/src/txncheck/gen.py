"""Workload generation and a simulated in-memory list-append database.

The simulator interleaves logical clients deterministically from a seed.  In
its serializable mode every transaction executes atomically at the moment it
completes, so histories are strict serializable and the simulator can record
the true version order and dependency graph alongside them.  Injectors
perturb individual transactions to produce specific anomalies.
"""

from __future__ import annotations

import json
import random
from bisect import bisect_left, bisect_right
from collections import defaultdict, deque
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path
from typing import Optional, Union

from .histio import (
    ABORTED,
    APPEND,
    COMMITTED,
    INDETERMINATE,
    LIST_APPEND,
    READ,
    MicroOp,
    Observation,
    ObservedTransaction,
    write_history,
)

SERIALIZABLE = "serializable"
SNAPSHOT_ISOLATION = "snapshot-isolation"
BASES = (SERIALIZABLE, SNAPSHOT_ISOLATION)

INJECT_G0 = "g0"
INJECT_G_SINGLE = "g-single"
INJECT_WRITE_SKEW = "g2-write-skew"
INJECT_ABORTED_READ = "aborted-read"
INJECT_INTERMEDIATE_READ = "intermediate-read"
INJECT_DIRTY_UPDATE = "dirty-update"
INJECT_LOST_UPDATE = "lost-update"
INJECTORS = (
    INJECT_G0,
    INJECT_G_SINGLE,
    INJECT_WRITE_SKEW,
    INJECT_ABORTED_READ,
    INJECT_INTERMEDIATE_READ,
    INJECT_DIRTY_UPDATE,
    INJECT_LOST_UPDATE,
)


@dataclass
class GenConfig:
    key_count: int = 100
    max_writes_per_key: int = 100
    min_ops: int = 1
    max_ops: int = 5
    txn_count: int = 1000
    process_count: int = 10
    read_fraction: float = 0.5
    seed: int = 0
    # Active keys are chosen with weight key_skew ** slot; 1.0 is uniform.
    key_skew: float = 0.8

    def __post_init__(self):
        for name in ("key_count", "max_writes_per_key", "min_ops", "max_ops", "process_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.txn_count < 0:
            raise ValueError("txn_count must not be negative")
        if self.min_ops > self.max_ops:
            raise ValueError("min_ops exceeds max_ops")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must lie in [0, 1]")
        if not 0.0 < self.key_skew <= 1.0:
            raise ValueError("key_skew must lie in (0, 1]")


@dataclass
class SimMode:
    base: str = SERIALIZABLE
    injectors: dict = field(default_factory=dict)  # name -> probability
    info_rate: float = 0.01
    abort_rate: float = 0.01

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}")
        for name, p in self.injectors.items():
            if name not in INJECTORS:
                raise ValueError(f"unknown injector {name!r}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for {name} must lie in [0, 1]")

    @property
    def clean(self) -> bool:
        return self.base == SERIALIZABLE and not any(self.injectors.values())


def generate_workload(cfg: GenConfig) -> list[tuple[MicroOp, ...]]:
    """Random list-append transactions.

    Keys come from a window of ``key_count`` active keys; a key retires once
    it has received ``max_writes_per_key`` appends and a fresh key takes its
    slot.  Append arguments count up per key, so they are unique.
    """
    rng = random.Random(cfg.seed)
    active = list(range(cfg.key_count))
    next_key = cfg.key_count
    writes: dict[int, int] = defaultdict(int)
    cum = list(accumulate(cfg.key_skew**i for i in range(cfg.key_count)))
    slots = range(cfg.key_count)
    requests = []
    for _ in range(cfg.txn_count):
        ops = []
        for _ in range(rng.randint(cfg.min_ops, cfg.max_ops)):
            slot = rng.choices(slots, cum_weights=cum)[0]
            k = active[slot]
            if rng.random() < cfg.read_fraction:
                ops.append(MicroOp(READ, k, None))
                continue
            writes[k] += 1
            ops.append(MicroOp(APPEND, k, writes[k]))
            if writes[k] >= cfg.max_writes_per_key:
                active[slot] = next_key
                next_key += 1
        requests.append(tuple(ops))
    return requests


@dataclass
class SimResult:
    obs: Observation
    truth: Optional[dict] = None
    injected: dict = field(default_factory=dict)  # injector -> count of firings


class _Txn:
    __slots__ = ("id", "thread", "ops", "snapshot", "invoke_index")

    def __init__(self, id, thread, ops, snapshot, invoke_index):
        self.id = id
        self.thread = thread
        self.ops = ops
        self.snapshot = snapshot
        self.invoke_index = invoke_index


class _Store:
    """Per-key element lists with the commit sequence of every element."""

    def __init__(self):
        self.elems: dict = defaultdict(list)
        self.seqs: dict = defaultdict(list)
        self.writer: dict = {}  # commit seq -> txn id
        self.seq = 0

    def read(self, k, snapshot=None) -> list:
        if snapshot is None:
            return list(self.elems[k])
        return self.elems[k][: bisect_right(self.seqs[k], snapshot)]

    def last_seq(self, k) -> int:
        s = self.seqs[k]
        return s[-1] if s else 0

    def commit(self, txn_id, appends: dict) -> int:
        self.seq += 1
        self.writer[self.seq] = txn_id
        for k, xs in appends.items():
            self.elems[k].extend(xs)
            self.seqs[k].extend([self.seq] * len(xs))
        return self.seq


class _Truth:
    """Installed versions and dependency edges of a serializable execution."""

    def __init__(self):
        self.versions: dict = defaultdict(list)  # key -> [(element, writer)]
        self.readers: dict = defaultdict(list)  # key -> readers of the latest version
        self.edges: set = set()

    def read(self, txn, k):
        vs = self.versions[k]
        if vs and vs[-1][1] != txn:
            self.edges.add((vs[-1][1], txn, "wr"))
        self.readers[k].append(txn)

    def install(self, txn, k, element):
        vs = self.versions[k]
        if vs and vs[-1][1] != txn:
            self.edges.add((vs[-1][1], txn, "ww"))
        for r in self.readers[k]:
            if r != txn:
                self.edges.add((r, txn, "rw"))
        self.readers[k] = []
        vs.append((element, txn))

    def to_json(self) -> dict:
        return {
            "edges": [{"from": a, "to": b, "label": l} for a, b, l in sorted(self.edges)],
            "versions": [{"key": k, "versions": [e for e, _ in vs]} for k, vs in sorted(self.versions.items())],
            "writers": [{"key": k, "writers": [w for _, w in vs]} for k, vs in sorted(self.versions.items())],
        }


def run_simdb(requests, mode: Optional[SimMode] = None, seed: int = 0, process_count: int = 10) -> SimResult:
    """Execute ``requests`` against the simulated database.

    Returns the observed history and, for clean serializable runs, the ground
    truth: installed version order per key and the true dependency edges.
    """
    return _Sim(requests, mode or SimMode(), seed, process_count).run()


class _Sim:
    def __init__(self, requests, mode: SimMode, seed: int, process_count: int):
        self.requests = list(requests)
        self.mode = mode
        self.rng = random.Random(seed)
        self.threads = process_count
        self.store = _Store()
        self.truth = _Truth() if mode.clean else None
        self.injected: dict = defaultdict(int)
        self.process = list(range(process_count))
        self.index = 0
        self.txns: list[ObservedTransaction] = []
        # Injector state, per key.
        self.phantom: dict = {}  # key -> ("tail" | "replace", elements), shown to the next reader
        self.doomed: dict = {}  # key -> elements dropped at the next write to the key
        self.writers_of: dict = defaultdict(list)  # key -> committed (txn, seq), for g0
        self.recent: deque = deque(maxlen=64)  # (seq, keys read, keys appended)
        self.read_keys: set = set()
        self.dirty: set = set()  # keys whose newest element came from an aborted writer

    def p(self, name) -> float:
        return self.mode.injectors.get(name, 0.0)

    def fire(self, name) -> bool:
        p = self.p(name)
        if p > 0 and self.rng.random() < p:
            self.injected[name] += 1
            return True
        return False

    def run(self) -> SimResult:
        rng = self.rng
        open_txns: dict[int, _Txn] = {}
        nxt = 0
        n = len(self.requests)
        idle = list(range(self.threads))
        while nxt < n or open_txns:
            busy = sorted(open_txns)
            candidates = busy + (idle if nxt < n else [])
            thread = candidates[rng.randrange(len(candidates))]
            if thread in open_txns:
                self.complete(open_txns.pop(thread))
                idle.append(thread)
                idle.sort()
            else:
                ops = self.requests[nxt]
                t = _Txn(nxt, thread, ops, self.store.seq, self.index)
                self.txns.append(
                    ObservedTransaction(nxt, self.process[thread], INDETERMINATE, tuple(ops), self.index)
                )
                self.index += 1
                nxt += 1
                open_txns[thread] = t
                idle.remove(thread)
        obs = Observation(self.txns, LIST_APPEND, self.index - 1)
        truth = self.truth.to_json() if self.truth is not None else None
        return SimResult(obs, truth, dict(self.injected))

    def finish(self, t: _Txn, status: str, ops) -> None:
        ot = self.txns[t.id]
        ot.complete_index = self.index
        self.index += 1
        if status == COMMITTED and self.mode.info_rate and self.rng.random() < self.mode.info_rate:
            status = INDETERMINATE
        ot.status = status
        if status == COMMITTED:
            ot.ops = tuple(ops)
        elif status == INDETERMINATE:
            # The client lost track of this transaction and reconnects as a new process.
            self.process[t.thread] += self.threads

    def complete(self, t: _Txn) -> None:
        mode = self.mode
        rng = self.rng
        if mode.abort_rate and rng.random() < mode.abort_rate:
            self.finish(t, ABORTED, t.ops)
            return
        appends: dict = {}
        for op in t.ops:
            if op.f == APPEND:
                appends.setdefault(op.key, []).append(op.value)
        snapshot_reads = mode.base == SNAPSHOT_ISOLATION
        if not snapshot_reads and self.p(INJECT_WRITE_SKEW):
            snap = self.skew_snapshot(t, appends)
            if snap is not None and self.fire(INJECT_WRITE_SKEW):
                snapshot_reads = True
                t.snapshot = snap
        if snapshot_reads:
            for k in appends:
                if self.store.last_seq(k) > t.snapshot:
                    self.finish(t, ABORTED, t.ops)
                    return
        if appends:
            if self.p(INJECT_ABORTED_READ) and self.fire(INJECT_ABORTED_READ):
                for k, xs in appends.items():
                    self.phantom[k] = ("tail", list(xs))
                self.finish(t, ABORTED, t.ops)
                return
            # A key already ending in a dirty element is left for a committed
            # writer to build on.
            if (
                self.p(INJECT_DIRTY_UPDATE)
                and self.dirty.isdisjoint(appends)
                and self.fire(INJECT_DIRTY_UPDATE)
            ):
                self.apply(t, appends)
                self.dirty.update(appends)
                self.finish(t, ABORTED, t.ops)
                return
        stale_key = None
        if self.p(INJECT_G_SINGLE):
            stale_key = self.g_single_candidate(t, appends)
            if stale_key is not None and not self.fire(INJECT_G_SINGLE):
                stale_key = None

        ops = []
        own: dict = {}
        bases: dict = {}  # later reads of a key repeat the first one
        pure: set = set()
        truth = self.truth
        for op in t.ops:
            k = op.key
            if op.f == APPEND:
                own.setdefault(k, []).append(op.value)
                ops.append(op)
                continue
            base = bases.get(k)
            if base is not None:
                pass
            elif k == stale_key and k not in own:
                base = self.stale(k)
            elif snapshot_reads:
                base = self.store.read(k, t.snapshot)
            else:
                base = self.visible(k)
            bases[k] = base
            if k not in own:
                pure.add(k)
                if truth is not None:
                    truth.read(t.id, k)
            ops.append(MicroOp(READ, k, tuple(base) + tuple(own.get(k, ()))))

        self.read_keys = pure
        if appends:
            if (
                self.p(INJECT_INTERMEDIATE_READ)
                and any(len(xs) > 1 for xs in appends.values())
                and self.fire(INJECT_INTERMEDIATE_READ)
            ):
                for k, xs in appends.items():
                    if len(xs) > 1:
                        self.phantom[k] = ("replace", self.store.read(k) + xs[:-1])
            swap = self.g0_candidate(t, appends) if self.p(INJECT_G0) else None
            if swap is not None and self.fire(INJECT_G0):
                self.apply(t, appends, before=swap)
            else:
                self.apply(t, appends)
            self.dirty.difference_update(appends)
            if self.p(INJECT_LOST_UPDATE) and self.fire(INJECT_LOST_UPDATE):
                for k, xs in appends.items():
                    self.doomed[k] = list(xs)
        self.finish(t, COMMITTED, ops)

    def visible(self, k) -> list:
        base = self.store.read(k)
        ph = self.phantom.pop(k, None)
        if ph is None:
            return base
        kind, xs = ph
        return base + xs if kind == "tail" else xs

    def apply(self, t: _Txn, appends: dict, before=None) -> None:
        store = self.store
        for k in appends:
            dropped = self.doomed.pop(k, None)
            if dropped:
                gone = set(dropped)
                keep = [i for i, e in enumerate(store.elems[k]) if e not in gone]
                store.elems[k] = [store.elems[k][i] for i in keep]
                store.seqs[k] = [store.seqs[k][i] for i in keep]
        if before is None:
            seq = store.commit(t.id, appends)
        else:
            # Slip this transaction's append to one key in front of an earlier
            # transaction's, while its other appends land at the end.
            key, other_seq = before
            rest = {k: xs for k, xs in appends.items() if k != key}
            seq = store.commit(t.id, rest)
            at = bisect_left(store.seqs[key], other_seq)
            store.elems[key][at:at] = appends[key]
            store.seqs[key][at:at] = [other_seq] * len(appends[key])
        for k in appends:
            self.writers_of[k].append((t.id, seq))
        self.recent.append((seq, self.read_keys, set(appends)))
        if self.truth is not None:
            for k, xs in appends.items():
                self.truth.install(t.id, k, xs[-1])

    def skew_snapshot(self, t: _Txn, appends: dict):
        """An older snapshot that turns this transaction into one half of a write skew.

        Looks for a recent committer that appended a key we read and read a
        key we append.  Reading everything from just before its commit misses
        its append, while our own appends still pass first-committer-wins.
        """
        if not appends:
            return None
        reads = {op.key for op in t.ops if op.f == READ}
        if not reads:
            return None
        store = self.store
        newest = max(store.last_seq(k) for k in appends)
        for seq, r, a in reversed(self.recent):
            if seq <= newest:
                break
            if not a.isdisjoint(reads) and not r.isdisjoint(appends):
                return seq - 1
        return None

    def g_single_candidate(self, t: _Txn, appends: dict):
        """A key this transaction reads before appending to it, with a prior committed write."""
        seen = set()
        for op in t.ops:
            if op.f == APPEND:
                seen.add(op.key)
            elif op.key in appends and op.key not in seen and self.store.elems[op.key]:
                return op.key
        return None

    def stale(self, k) -> list:
        """The key's state before its most recent committed write."""
        seqs = self.store.seqs[k]
        return self.store.elems[k][: bisect_left(seqs, seqs[-1])]

    def g0_candidate(self, t: _Txn, appends: dict):
        """(key, seq) of an earlier writer that also wrote another of this transaction's keys."""
        if len(appends) < 2:
            return None
        keys = sorted(appends)
        best = None
        for k2 in keys:
            for u, useq in reversed(self.writers_of[k2][-20:]):
                for k1 in keys:
                    if k1 != k2 and any(w == u for w, _ in self.writers_of[k1][-20:]):
                        if best is None or useq > best[1]:
                            best = (k2, useq)
                        break
        return best


def write_truth(truth: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(truth, sort_keys=True) + "\n")


def generate(cfg: GenConfig, mode: Optional[SimMode] = None) -> SimResult:
    """Workload plus simulation, both driven by ``cfg.seed``."""
    return run_simdb(generate_workload(cfg), mode, seed=cfg.seed + 1, process_count=cfg.process_count)


def save(result: SimResult, path: Union[str, Path]) -> Optional[Path]:
    """Write the history, and the truth sidecar when there is one."""
    path = Path(path)
    path.write_bytes(write_history(result.obs))
    if result.truth is None:
        return None
    side = path.with_name(path.name + ".truth.json")
    write_truth(result.truth, side)
    return side
