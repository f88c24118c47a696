"""The checking pipeline and consistency-model table."""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from . import anomaly as A
from .anomaly import Anomaly
from .graph import DATA_LABELS, Dsg, build_idsg, cyclic_core, explain, find_anomaly_cycles, merge_txn_orders
from .histio import LIST_APPEND, Observation
from .nca import find_aborted_reads, find_dirty_updates, find_intermediate_reads, find_internal_inconsistencies
from .order import (
    PROCESS,
    REALTIME,
    infer_list_append_chains,
    infer_register_order,
    process_order,
    realtime_order,
)
from .trace import (
    build_write_index,
    check_observation_consistency,
    committed_reads,
    detect_garbage_and_duplicates,
    unrecoverable_keys,
)

READ_UNCOMMITTED = "read-uncommitted"
READ_COMMITTED = "read-committed"
SNAPSHOT_ISOLATION = "snapshot-isolation"
SERIALIZABLE = "serializable"
STRICT_SERIALIZABLE = "strict-serializable"

_RU = frozenset({A.G0, A.GARBAGE_READ, A.DUPLICATE_WRITE})
_RC = _RU | {A.G1A, A.G1B, A.G1C, A.DIRTY_UPDATE, A.INTERNAL, A.INCONSISTENT_OBSERVATION}
_SI = _RC | {A.G_SINGLE, A.CYCLIC_VERSION_ORDER}
_SER = _SI | {A.G2}

# Anomaly classes each model forbids, weakest model first.
VIOLATIONS: dict[str, frozenset] = {
    READ_UNCOMMITTED: _RU,
    READ_COMMITTED: _RC,
    SNAPSHOT_ISOLATION: _SI,
    SERIALIZABLE: _SER,
    STRICT_SERIALIZABLE: _SER,
}
CONSISTENCY_MODELS = tuple(VIOLATIONS)

_LIST_ONLY = (A.G1A, A.G1B, A.DIRTY_UPDATE)


@dataclass
class Report:
    valid: bool
    consistency: str
    model: str
    anomalies: list[Anomaly] = field(default_factory=list)
    permitted: list[Anomaly] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)
    stats: dict[str, int] = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)
    checked: list[str] = field(default_factory=list)
    graph: Optional[Dsg] = field(default=None, repr=False)
    orders: dict = field(default_factory=dict, repr=False)

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for a in self.anomalies:
            out[a.name] = out.get(a.name, 0) + 1
        return dict(sorted(out.items()))

    def by_class(self) -> dict[str, list[Anomaly]]:
        out: dict[str, list[Anomaly]] = {}
        for a in self.anomalies:
            out.setdefault(a.name, []).append(a)
        return dict(sorted(out.items()))

    def classes(self) -> set[str]:
        return {a.cls for a in self.anomalies}

    def to_json(self) -> dict[str, Any]:
        permitted: dict[str, int] = {}
        for a in self.permitted:
            permitted[a.name] = permitted.get(a.name, 0) + 1
        return {
            "valid": self.valid,
            "consistency": self.consistency,
            "model": self.model,
            "counts": self.counts,
            "anomalies": {k: [a.to_json() for a in v] for k, v in self.by_class().items()},
            "permitted": dict(sorted(permitted.items())),
            "checked": self.checked,
            "notices": self.notices,
            "stats": self.stats,
            "timing": {k: round(v, 6) for k, v in self.timing.items()},
        }


class _Timer:
    def __init__(self, timing):
        self.timing = timing
        self.last = time.perf_counter()

    def lap(self, stage):
        now = time.perf_counter()
        self.timing[stage] = self.timing.get(stage, 0.0) + now - self.last
        self.last = now


def check(
    obs: Observation,
    consistency: str = SERIALIZABLE,
    anomalies: Optional[Iterable[str]] = None,
    linearizable_keys: bool = False,
    process_edges: bool = False,
) -> Report:
    """Run every detector relevant to ``consistency`` over ``obs``.

    ``anomalies`` narrows the forbidden set.  Non-cycle detectors always run;
    anything they find outside the forbidden set is kept in
    ``Report.permitted``.  Cycle searches only run for forbidden classes.
    """
    if consistency not in VIOLATIONS:
        raise ValueError(f"unknown consistency model {consistency!r}")
    # The pipeline allocates millions of small acyclic objects on big
    # histories; generational collection passes over them are pure overhead.
    paused = gc.isenabled()
    gc.disable()
    try:
        return _check(obs, consistency, anomalies, linearizable_keys, process_edges)
    finally:
        if paused:
            gc.enable()


def _check(obs, consistency, anomalies, linearizable_keys, process_edges) -> Report:
    forbidden = set(VIOLATIONS[consistency])
    if anomalies is not None:
        forbidden &= set(anomalies)
    timing: dict[str, float] = {}
    clock = _Timer(timing)
    notices = []
    found: list[Anomaly] = []

    found += find_internal_inconsistencies(obs)
    clock.lap("internal")
    if obs.model == LIST_APPEND:
        reads = committed_reads(obs)
        idx = build_write_index(obs)
        clock.lap("index")
        found += check_observation_consistency(obs, reads)
        bad = detect_garbage_and_duplicates(obs, idx, reads)
        found += bad
        clock.lap("traces")
        found += find_aborted_reads(obs, idx, reads)
        found += find_intermediate_reads(obs, idx, reads)
        found += find_dirty_updates(obs, idx, reads)
        clock.lap("non-cycle")
        orders = infer_list_append_chains(obs, idx, reads, exclude=unrecoverable_keys(bad))
        clock.lap("version-order")
        g = build_idsg(obs, orders, reads)
    else:
        reads = None
        hidden = sorted(set(_LIST_ONLY) & forbidden)
        if hidden:
            notices.append(f"register model: {', '.join(hidden)} detection needs list traces and is skipped")
        forbidden -= set(_LIST_ONLY)
        orders, order_anomalies = infer_register_order(obs, linearizable=linearizable_keys)
        found += order_anomalies
        clock.lap("version-order")
        g = build_idsg(obs, orders)
    clock.lap("idsg")

    labels = []
    if consistency == STRICT_SERIALIZABLE:
        labels = [PROCESS, REALTIME]
    elif process_edges:
        labels = [PROCESS]
    txn_orders = []
    if PROCESS in labels:
        txn_orders.append(process_order(obs))
    if REALTIME in labels:
        txn_orders.append(realtime_order(obs))
    merge_txn_orders(g, txn_orders, labels)
    clock.lap("txn-order")

    core = cyclic_core(g, DATA_LABELS + tuple(labels))
    witnesses: dict[str, list] = {}
    for cls in A.CYCLE_CLASSES:
        if cls not in forbidden:
            continue
        exclude = []
        if cls == A.G1C:
            exclude = witnesses.get(A.G0, [])
        elif cls == A.G2:
            exclude = witnesses.get(A.G_SINGLE, [])
        ws = find_anomaly_cycles(core, cls, labels, exclude)
        witnesses[cls] = ws
        for w in ws:
            found.append(
                Anomaly(
                    cls,
                    [(t, None) for t in w.txns],
                    explain(w, obs, g),
                    flags=w.flags,
                    data={"cycle": list(w.txns), "labels": list(w.labels), "component_size": len(w.component)},
                )
            )
    clock.lap("cycles")

    bad_found = [a for a in found if a.cls in forbidden]
    permitted = [a for a in found if a.cls not in forbidden]
    keys = obs.keys()
    return Report(
        valid=not bad_found,
        consistency=consistency,
        model=obs.model,
        anomalies=bad_found,
        permitted=permitted,
        timing=timing,
        stats={
            "txns": len(obs.txns),
            "committed": sum(1 for t in obs.txns if t.committed),
            "keys": len(keys),
            "edges": sum(len(s) for s in g.out.values()),
        },
        notices=notices,
        checked=sorted(forbidden),
        graph=g,
        orders=orders,
    )
