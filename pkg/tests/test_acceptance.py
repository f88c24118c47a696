"""Acceptance criteria, one test each; verdict lines appear in the terminal summary."""

import random
import time

import pytest

from helpers import FIXTURES, fixture
from oracles import brute_cyclic_sccs, has_single_rw_cycle, serial_order
from txncheck.anomaly import CYCLE_CLASSES, G_SINGLE
from txncheck.checker import check
from txncheck.cli import idsg_outside_truth
from txncheck.gen import INJECTORS, GenConfig, SimMode, generate
from txncheck.graph import RW, WR, WW, Dsg, find_anomaly_cycles, strongly_connected_components
from txncheck.histio import ABORTED, REGISTER, read_history
from txncheck.order import INIT
from txncheck.trace import committed_reads, is_prefix

FUZZ_ROUNDS = 1000
FUZZ_TXNS = 1000
INJECT_SEEDS = 100
INJECT_P = 0.05
TARGET = {
    "g0": "G0",
    "g-single": "G-single",
    "g2-write-skew": "G2",
    "aborted-read": "G1a",
    "intermediate-read": "G1b",
    "dirty-update": "dirty-update",
    "lost-update": "inconsistent-observation",
}


def test_1_tidb_read_skew(verdict):
    start = time.perf_counter()
    r = check(read_history(FIXTURES / "tidb_read_skew.jsonl"), "serializable")
    took = time.perf_counter() - start
    cycles = [a for a in r.anomalies if a.cls in CYCLE_CLASSES]
    ok = len(cycles) == 1 and len(r.anomalies) == 1
    if ok:
        (a,) = cycles
        steps = list(zip(a.data["cycle"], a.data["labels"]))
        keys = {k for t, _ in steps for k in _keys(r.graph, t, a.data["cycle"])}
        ok = a.cls == G_SINGLE and set(a.txns) == {1, 2} and sorted(a.data["labels"]) == [RW, WW] and keys == {34}
    verdict("1 TiDB G-single {T1,T2} rw(34)+ww(34)", ok and took < 1.0, f"{len(cycles)} cycle(s), {took * 1000:.1f} ms")


def _keys(g, t, cycle):
    nxt = cycle[(cycle.index(t) + 1) % len(cycle)]
    for ev in g.labels(t, nxt).values():
        yield ev[1]  # (kind, key, ...)


def test_2_three_way_witness_facts(verdict):
    r = check(fixture("three_way_witness"), "strict-serializable")
    facts = (
        "T1 did not observe T2's append of 8 to 255",
        "T3 observed T2's append of 8 to key 255",
        "T1 appended 3 after T3 appended 4 to 256",
    )
    singles = [a for a in r.anomalies if a.cls == G_SINGLE]
    found = [f for f in facts if singles and f in singles[0].explanation]
    verdict("2 three-transaction witness facts", len(singles) == 1 and len(found) == 3, f"{len(found)}/3 facts, {[a.name for a in r.anomalies]}")


def test_3_fauna_dgraph(verdict):
    fauna = check(fixture("fauna_internal"), "serializable").classes()
    dg = check(fixture("dgraph_internal", REGISTER), "serializable").classes()
    rt = check(fixture("dgraph_realtime", REGISTER), "serializable", linearizable_keys=True).classes()
    ok = fauna == {"internal-inconsistency"} and dg == {"internal-inconsistency"} and rt == {"cyclic-version-order"}
    verdict("3 FaunaDB/Dgraph classification", ok, f"fauna={sorted(fauna)} dgraph={sorted(dg)} realtime={sorted(rt)}")


class _FuzzSummary:
    def __init__(self):
        self.bad_rounds = []
        self.outside = []
        self.seconds = 0.0
        self.keys = 0
        self.reads = 0
        self.version_failures = []


def _check_versions(res, report, summary):
    truth = {v["key"]: v["versions"] for v in res.truth["versions"]}
    obs = res.obs
    installed = set()
    for t in obs.txns:
        if t.status == ABORTED:
            continue
        last = {}
        for op in t.ops:
            if op.f == "append":
                last[op.key] = op.value
        installed.update(last.items())
    for key, rs in committed_reads(obs).items():
        chain = report.orders.get(key)
        if chain is None:
            continue
        summary.keys += 1
        elems = tuple(chain.versions[1:])
        if chain.versions[0] != INIT or list(elems) != truth.get(key, [])[: len(elems)]:
            summary.version_failures.append((key, None, "chain is not a prefix of the true order"))
        for r in rs:
            summary.reads += 1
            if r.version is None:
                summary.version_failures.append((key, r.txn, "read does not end in own appends"))
                continue
            seen = tuple(e for e in r.version if (key, e) in installed)
            ok = is_prefix(seen, elems) if r.pure else (is_prefix(seen, elems) or is_prefix(elems, seen))
            if not ok or not is_prefix(seen, tuple(truth.get(key, ()))):
                summary.version_failures.append((key, r.txn, "read disagrees with chain"))


@pytest.fixture(scope="module")
def fuzz():
    s = _FuzzSummary()
    start = time.perf_counter()
    for seed in range(FUZZ_ROUNDS):
        res = generate(GenConfig(txn_count=FUZZ_TXNS, seed=seed))
        r = check(res.obs, "strict-serializable")
        if r.anomalies or r.permitted:
            s.bad_rounds.append(seed)
        extra = idsg_outside_truth(r.graph, res.truth)
        if extra:
            s.outside.append((seed, len(extra)))
        _check_versions(res, r, s)
    s.seconds = time.perf_counter() - start
    return s


def test_4_soundness_fuzz(verdict, fuzz):
    ok = not fuzz.bad_rounds and not fuzz.outside and fuzz.seconds < 600
    verdict(
        "4 soundness fuzz 1000x1000",
        ok,
        f"anomalous rounds={fuzz.bad_rounds[:5]} IDSG-outside-truth={fuzz.outside[:5]} in {fuzz.seconds:.0f} s",
    )


def test_5_injection_sensitivity(verdict):
    hits = {}
    for name in INJECTORS:
        n = 0
        for seed in range(INJECT_SEEDS):
            res = generate(GenConfig(txn_count=1000, seed=seed), SimMode(injectors={name: INJECT_P}))
            r = check(res.obs, "serializable")
            n += TARGET[name] in {a.cls for a in r.anomalies}
        hits[name] = n
    clean_cycles = []
    for seed in range(INJECT_SEEDS):
        r = check(generate(GenConfig(txn_count=1000, seed=seed)).obs, "serializable")
        if {a.cls for a in r.anomalies + r.permitted} & set(CYCLE_CLASSES):
            clean_cycles.append(seed)
    ok = all(n >= 95 for n in hits.values()) and not clean_cycles
    detail = " ".join(f"{k}={v}" for k, v in hits.items()) + f" clean-cycles={len(clean_cycles)}"
    verdict("5 injection sensitivity >=95/100", ok, detail)


def _time_check(n, seed, repeats):
    obs = generate(GenConfig(txn_count=n, seed=seed)).obs
    best = None
    for _ in range(repeats):
        start = time.perf_counter()
        r = check(obs, "strict-serializable")
        took = time.perf_counter() - start
        assert r.valid
        best = took if best is None else min(best, took)
    return best


def test_6_performance(verdict):
    rows = []
    for seed in range(3):
        small = _time_check(10_000, seed, 3)
        big = _time_check(100_000, seed, 1)
        rows.append((seed, small, big, big / small))
    ok = all(big <= 60 and ratio <= 15 for _, _, big, ratio in rows)
    detail = "; ".join(f"seed {s}: 10k {a:.2f}s 100k {b:.2f}s ratio {q:.1f}" for s, a, b, q in rows)
    verdict("6 performance 100k<=60s, ratio<=15", ok, detail)


def _random_labeled(rng, n):
    p = rng.uniform(0.05, 0.35)
    out = {}
    for a in range(n):
        for b in range(n):
            if a != b and rng.random() < p:
                out[(a, b)] = set(rng.sample([WW, WR, RW], rng.randint(1, 3)))
    return out


def _dsg(labeled):
    g = Dsg()
    for (a, b), ls in labeled.items():
        for l in ls:
            g.add(a, b, l)
    return g


def test_7a_scc_oracle(verdict):
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(200):
        n = rng.randint(1, 12)
        labeled = _random_labeled(rng, n)
        got = {frozenset(c) for c in strongly_connected_components(_dsg(labeled))}
        mismatches += got != brute_cyclic_sccs(range(n), labeled)
    verdict("7a Tarjan == reachability SCCs (200 graphs)", mismatches == 0, f"{mismatches} mismatches")


def test_7b_g_single_oracle(verdict):
    rng = random.Random(4048)
    mismatches = positives = 0
    for _ in range(200):
        n = rng.randint(2, 10)
        labeled = _random_labeled(rng, n)
        expect = has_single_rw_cycle(range(n), labeled)
        positives += expect
        mismatches += bool(find_anomaly_cycles(_dsg(labeled), G_SINGLE)) != expect
    verdict("7b G-single == simple-cycle enumeration (200 graphs)", mismatches == 0, f"{mismatches} mismatches, {positives} with G-single")


def _small_modes():
    yield SimMode()
    yield SimMode("snapshot-isolation")
    for name in INJECTORS:
        yield SimMode(injectors={name: 0.5})
    yield SimMode("snapshot-isolation", {n: 0.3 for n in INJECTORS})


def test_7c_permutation_oracle(verdict):
    checked = flagged = wrong = 0
    for mode in _small_modes():
        for seed in range(300):
            cfg = GenConfig(txn_count=3 + seed % 4, key_count=2, process_count=3, seed=seed, key_skew=1.0)
            obs = generate(cfg, mode).obs
            if sum(t.committed for t in obs.txns) > 6:
                continue
            checked += 1
            r = check(obs, "serializable", anomalies=CYCLE_CLASSES)
            if r.anomalies:
                flagged += 1
                wrong += serial_order(obs) is not None
    ok = wrong == 0 and flagged > 0
    verdict("7c cycles imply no serial order (<=6 txns)", ok, f"{checked} histories, {flagged} with cycles, {wrong} serializable")


def test_8_version_orders(verdict, fuzz):
    ok = not fuzz.version_failures and fuzz.keys > 0
    verdict(
        "8 reads prefix chain, chain prefix of truth",
        ok,
        f"{fuzz.keys} keys, {fuzz.reads} reads, {len(fuzz.version_failures)} failures",
    )
