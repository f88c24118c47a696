"""Inferred dependency graphs and cycle search.

Edges carry one or more labels: ``ww``, ``wr`` and ``rw`` for data
dependencies, ``process`` and ``realtime`` for transaction orders.  Each label
keeps the first piece of evidence that produced it, so a cycle can be
explained edge by edge.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .anomaly import G0, G1C, G2, G_SINGLE, USES_PROCESS, USES_REALTIME
from .histio import LIST_APPEND, READ, Observation
from .order import INIT, PROCESS, REALTIME, PartialVersionOrder, TxnOrder, VersionChain
from .scc import tarjan
from .trace import committed_reads

WW = "ww"
WR = "wr"
RW = "rw"
DATA_LABELS = (WW, WR, RW)
ORDER_LABELS = (PROCESS, REALTIME)
# Preference when a witness edge carries several usable labels.
_PREFERENCE = (WW, WR, PROCESS, REALTIME, RW)


@dataclass
class Dsg:
    out: dict = field(default_factory=dict)  # from -> {to -> {label: evidence}}

    def add(self, a: int, b: int, label: str, evidence=None) -> None:
        if a == b:
            return
        labels = self.out.setdefault(a, {}).setdefault(b, {})
        if label not in labels:
            labels[label] = evidence

    def labels(self, a: int, b: int) -> dict:
        return self.out.get(a, {}).get(b, {})

    def edges(self) -> Iterable[tuple[int, int, dict]]:
        for a, succ in self.out.items():
            for b, labels in succ.items():
                yield a, b, labels

    def edge_set(self, labels: Iterable[str] = DATA_LABELS) -> set[tuple[int, int, str]]:
        wanted = set(labels)
        return {(a, b, l) for a, b, ls in self.edges() for l in ls if l in wanted}

    def nodes(self) -> list[int]:
        ns = set(self.out)
        for succ in self.out.values():
            ns.update(succ)
        return sorted(ns)

    def adjacency(self, labels: Iterable[str]) -> dict[int, list[int]]:
        wanted = set(labels)
        adj: dict[int, list[int]] = {}
        for a in sorted(self.out):
            succ = [b for b, ls in sorted(self.out[a].items()) if not wanted.isdisjoint(ls)]
            if succ:
                adj[a] = succ
        return adj

    def copy(self) -> "Dsg":
        return Dsg({a: {b: dict(ls) for b, ls in succ.items()} for a, succ in self.out.items()})


@dataclass
class CycleWitness:
    txns: list[int]
    labels: list[str]  # labels[i] justifies txns[i] -> txns[i + 1] (wrapping)
    cls: str
    flags: frozenset = frozenset()
    component: tuple = ()  # the strongly connected component it was found in

    def steps(self) -> list[tuple[int, int, str]]:
        n = len(self.txns)
        return [(self.txns[i], self.txns[(i + 1) % n], self.labels[i]) for i in range(n)]


def build_idsg(obs: Observation, orders: dict, reads=None) -> Dsg:
    """Dependency graph from inferred version orders.

    ``orders`` maps keys to :class:`VersionChain` (list-append) or
    :class:`PartialVersionOrder` (register).
    """
    g = Dsg()
    if obs.model == LIST_APPEND:
        _list_edges(g, obs, orders, reads)
    else:
        _register_edges(g, obs, orders)
    return g


def _list_edges(g: Dsg, obs, chains: dict[object, VersionChain], reads) -> None:
    reads = committed_reads(obs) if reads is None else reads
    for k, c in chains.items():
        vs, w = c.versions, c.writer_of
        for i in range(1, len(vs) - 1):
            g.add(w[vs[i]], w[vs[i + 1]], WW, ("append", k, vs[i], vs[i + 1]))
        src = c.source
        for r in reads.get(k, ()):
            s = r.version
            if s is None or len(s) > len(src) or (s and src[len(s) - 1] != s[-1]):
                continue
            if s:
                i = c.position.get(s[-1])
                if i is None:
                    continue
                writer = w[s[-1]]
                if r.own:
                    # The reader's own appends went on top of this version.
                    g.add(writer, r.txn, WW, ("append", k, s[-1], r.own[0]))
                else:
                    g.add(writer, r.txn, WR, ("append", k, s[-1], None))
                read_version = s[-1]
            else:
                i = 0
                read_version = INIT
            if i + 1 < len(vs):
                nxt = vs[i + 1]
                g.add(r.txn, w[nxt], RW, ("append", k, read_version, nxt))


def _register_edges(g: Dsg, obs, orders: dict[object, PartialVersionOrder]) -> None:
    succs = {}
    for k, o in orders.items():
        w = o.writer_of
        succs[k] = o.successors()
        for a, b in sorted(o.edges, key=repr):
            if a != INIT and a in w and b in w:
                g.add(w[a], w[b], WW, ("write", k, a, b))
    for t in obs.txns:
        if not t.committed:
            continue
        wrote = set()
        for op in t.ops:
            k = op.key
            if op.f != READ:
                wrote.add(k)
                continue
            if k in wrote or k not in orders:
                continue
            v = INIT if op.value is None else op.value
            w = orders[k].writer_of
            if v != INIT and v in w:
                g.add(w[v], t.id, WR, ("write", k, v, None))
            for b in succs[k].get(v, ()):
                if b in w:
                    g.add(t.id, w[b], RW, ("write", k, v, b))


def merge_txn_orders(g: Dsg, orders: Iterable[TxnOrder], enabled: Iterable[str] = ORDER_LABELS) -> Dsg:
    enabled = set(enabled)
    for o in orders:
        if o.label not in enabled:
            continue
        for a, b in o.edges:
            g.add(a, b, o.label, None)
    return g


def strongly_connected_components(g: Dsg, labels: Iterable[str] = DATA_LABELS + ORDER_LABELS) -> list[list[int]]:
    """Cyclic SCCs of the label-filtered graph, each sorted, ordered by smallest member."""
    adj = g.adjacency(labels)
    comps = tarjan(sorted(adj), lambda v: adj.get(v, ()))
    out = [sorted(c) for c in comps if len(c) > 1]
    out.sort()
    return out


def cyclic_core(g: Dsg, labels: Iterable[str] = DATA_LABELS + ORDER_LABELS) -> Dsg:
    """Subgraph of edges that lie inside some cyclic component.

    Every cycle of every class lives in here, so searches can skip the
    (usually enormous) acyclic remainder.
    """
    wanted = set(labels)
    adj: dict = {}
    for a, succ in g.out.items():
        bs = [b for b, ls in succ.items() if not wanted.isdisjoint(ls)]
        if bs:
            adj[a] = bs
    comp_of = {}
    for i, comp in enumerate(tarjan(list(adj), lambda v: adj.get(v, ()))):
        if len(comp) > 1:
            for v in comp:
                comp_of[v] = i
    core = Dsg()
    for a, succ in g.out.items():
        ca = comp_of.get(a)
        if ca is None:
            continue
        for b, ls in succ.items():
            if comp_of.get(b) == ca:
                kept = {l: e for l, e in ls.items() if l in wanted}
                if kept:
                    core.out.setdefault(a, {})[b] = kept
    return core


def _bfs_path(adj, start, goal, members) -> Optional[list[int]]:
    """Shortest path start -> goal inside ``members``; ``start == goal`` finds a cycle."""
    prev = {start: None}
    q = deque([start])
    while q:
        v = q.popleft()
        for w in adj.get(v, ()):
            if w not in members:
                continue
            if w == goal:
                path = [w, v]
                while prev[v] is not None:
                    v = prev[v]
                    path.append(v)
                path.reverse()
                return path  # start ... goal
            if w not in prev:
                prev[w] = v
                q.append(w)
    return None


def _pick(labels: dict, allowed) -> str:
    for l in _PREFERENCE:
        if l in labels and l in allowed:
            return l
    raise ValueError("no usable label")


def _witness(g: Dsg, cycle: list[int], allowed, cls, first: Optional[str] = None) -> CycleWitness:
    """Build a witness from ``cycle`` (closed: last == first)."""
    txns = cycle[:-1]
    labels = []
    for i, a in enumerate(txns):
        b = cycle[i + 1]
        if i == 0 and first is not None:
            labels.append(first)
        else:
            labels.append(_pick(g.labels(a, b), allowed))
    # Rotate so the smallest transaction leads; keeps output stable.
    r = txns.index(min(txns))
    txns = txns[r:] + txns[:r]
    labels = labels[r:] + labels[:r]
    flags = set()
    if PROCESS in labels:
        flags.add(USES_PROCESS)
    if REALTIME in labels:
        flags.add(USES_REALTIME)
    return CycleWitness(txns, labels, cls, frozenset(flags))


def classify(labels: list[str]) -> Optional[str]:
    """Most specific class of a cycle with the given edge labels."""
    rw = labels.count(RW)
    if rw == 0:
        return G0 if all(l == WW or l in ORDER_LABELS for l in labels) and WW in labels else G1C
    return G_SINGLE if rw == 1 else G2


def _simple_class_cycles(g, cls, allowed, skip) -> list[CycleWitness]:
    adj = g.adjacency(allowed)
    out = []
    for comp in strongly_connected_components(g, allowed):
        if skip(comp):
            continue
        members = set(comp)
        start = comp[0]
        path = _bfs_path(adj, start, start, members)
        w = _witness(g, path, allowed, cls)
        w.component = tuple(comp)
        out.append(w)
    return out


def _rw_edges(g, members):
    for a in sorted(members):
        for b, ls in sorted(g.out.get(a, {}).items()):
            if b in members and RW in ls:
                yield a, b


def _g_single(g, extra, skip) -> list[CycleWitness]:
    nonrw = (WW, WR) + tuple(extra)
    full = (WW, WR, RW) + tuple(extra)
    adj = g.adjacency(nonrw)
    out = []
    for comp in strongly_connected_components(g, full):
        if skip(comp):
            continue
        members = set(comp)
        best = None
        for a, b in _rw_edges(g, members):
            path = _bfs_path(adj, b, a, members)
            if path is not None and (best is None or len(path) < len(best)):
                best = [a] + path
                if len(best) == 3:  # a -> b -> a: cannot be shorter
                    break
        if best is not None:
            w = _witness(g, best, nonrw, G_SINGLE, first=RW)
            w.component = tuple(comp)
            out.append(w)
    return out


def _g2(g, extra, skip, tries: int = 32) -> list[CycleWitness]:
    full = (WW, WR, RW) + tuple(extra)
    adj = g.adjacency(full)
    out = []
    for comp in strongly_connected_components(g, full):
        if skip(comp):
            continue
        members = set(comp)
        best = None
        for n, (a, b) in enumerate(_rw_edges(g, members)):
            if n >= tries:
                break
            path = _bfs_path(adj, b, a, members)
            if path is not None and (best is None or len(path) < len(best)):
                best = [a] + path
        if best is not None:
            w = _witness(g, best, full, G2, first=RW)
            w.component = tuple(comp)
            out.append(w)
    return out


def find_anomaly_cycles(
    g: Dsg,
    cls: str,
    order_labels: Iterable[str] = (),
    exclude: Optional[list[CycleWitness]] = None,
) -> list[CycleWitness]:
    """At most one witness of ``cls`` per strongly connected component.

    Data-only cycles are searched first; with ``order_labels`` a second pass
    covers components that need process or real-time edges to close a cycle.
    ``exclude`` holds witnesses of more specific classes: components that
    contain one are skipped (G1c after G0, G2 after G-single).
    """
    order_labels = tuple(order_labels)
    found: list[CycleWitness] = []

    def contains(ws):
        sets = [set(w.txns) for w in ws]
        return lambda comp: any(s <= set(comp) for s in sets)

    passes = [()] + ([order_labels] if order_labels else [])
    for extra in passes:
        skip_found = contains(found + list(exclude or []))
        if cls == G0:
            ws = _simple_class_cycles(g, G0, (WW,) + extra, skip_found)
        elif cls == G1C:
            ws = _simple_class_cycles(g, G1C, (WW, WR) + extra, skip_found)
            ws = [w for w in ws if classify(w.labels) == G1C]
        elif cls == G_SINGLE:
            ws = _g_single(g, extra, skip_found)
        elif cls == G2:
            ws = _g2(g, extra, skip_found)
        else:
            raise ValueError(f"not a cycle class: {cls}")
        found.extend(ws)
    return found


def _render(v):
    if v == INIT:
        return "nil"
    return str(v)


def _because(g: Dsg, obs: Observation, a: int, b: int, label: str) -> str:
    ev = g.labels(a, b).get(label)
    ta, tb = f"T{a}", f"T{b}"
    if label == REALTIME:
        return f"{ta} completed before {tb} began"
    if label == PROCESS:
        return f"process {obs.txns[a].process} executed {ta} before {tb}"
    kind, k, x, y = ev
    if kind == "append":
        if label == WW:
            return f"{tb} appended {y} after {ta} appended {x} to {k}"
        if label == WR:
            return f"{tb} observed {ta}'s append of {x} to key {k}"
        return f"{ta} did not observe {tb}'s append of {y} to {k}"
    if label == WW:
        return f"{tb} wrote {y} to {k} after {ta} wrote {x}"
    if label == WR:
        return f"{tb} observed {ta}'s write of {x} to key {k}"
    return f"{ta} read {_render(x)} from {k}, which precedes {tb}'s write of {y}"


def explain(w: CycleWitness, obs: Observation, g: Dsg) -> str:
    """Human-readable argument that the cycle is impossible."""
    lines = ["Let:"]
    for t in w.txns:
        lines.append(f"  T{t} = {json.dumps(obs.txns[t].to_json())}")
    lines.append("")
    lines.append("Then:")
    steps = w.steps()
    for i, (a, b, label) in enumerate(steps):
        because = _because(g, obs, a, b, label)
        if i == len(steps) - 1:
            lines.append(f"  - However, T{a} < T{b}, because {because}: a contradiction!")
        else:
            lines.append(f"  - T{a} < T{b}, because {because}.")
    return "\n".join(lines)


def to_dot(g: Dsg, highlight: Iterable[int] = ()) -> str:
    marked = set(highlight)
    lines = ["digraph idsg {"]
    for n in g.nodes():
        style = ' style="bold"' if n in marked else ""
        lines.append(f'  T{n} [label="T{n}"{style}];')
    for a, b, ls in sorted(g.edges(), key=lambda e: (e[0], e[1])):
        label = ",".join(l for l in DATA_LABELS + ORDER_LABELS if l in ls).replace(REALTIME, "rt")
        lines.append(f'  T{a} -> T{b} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
