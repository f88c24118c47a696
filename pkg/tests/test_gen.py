from collections import Counter

import pytest

from helpers import serial
from txncheck.checker import check
from txncheck.cli import idsg_outside_truth
from txncheck.gen import INJECTORS, GenConfig, SimMode, generate, generate_workload, run_simdb, save
from txncheck.histio import MicroOp, read_history, write_history


def A(k, v):
    return MicroOp("append", k, v)


def R(k):
    return MicroOp("r", k, None)


def test_workload_is_deterministic():
    cfg = GenConfig(txn_count=10, seed=5)
    assert generate_workload(cfg) == generate_workload(cfg)


def test_read_fraction_zero_means_no_reads():
    reqs = generate_workload(GenConfig(txn_count=200, read_fraction=0.0))
    assert all(op.f == "append" for t in reqs for op in t)


def test_appends_per_key_are_capped_and_unique():
    reqs = generate_workload(GenConfig(txn_count=10_000, seed=2))
    per_key = Counter(op.key for t in reqs for op in t if op.f == "append")
    assert max(per_key.values()) <= 100
    args = [(op.key, op.value) for t in reqs for op in t if op.f == "append"]
    assert len(args) == len(set(args))
    assert all(1 <= len(t) <= 5 for t in reqs)


@pytest.mark.parametrize("bad", [dict(key_count=0), dict(min_ops=3, max_ops=2), dict(read_fraction=1.5)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GenConfig(**bad)


def test_unknown_injector():
    with pytest.raises(ValueError):
        SimMode(injectors={"nope": 0.1})


def test_simulation_is_deterministic():
    mode = SimMode(injectors={"g-single": 0.1})
    a = generate(GenConfig(txn_count=300, seed=9), mode)
    b = generate(GenConfig(txn_count=300, seed=9), mode)
    assert write_history(a.obs) == write_history(b.obs)


@pytest.mark.parametrize("seed", range(5))
def test_clean_runs_check_clean_and_stay_inside_truth(seed):
    res = generate(GenConfig(txn_count=500, seed=seed))
    r = check(res.obs, "strict-serializable")
    assert r.valid and not r.permitted
    assert idsg_outside_truth(r.graph, res.truth) == set()


def test_snapshot_base_has_no_truth_and_is_si_clean():
    res = generate(GenConfig(txn_count=500, seed=1), SimMode("snapshot-isolation"))
    assert res.truth is None
    assert check(res.obs, "snapshot-isolation").valid


TEMPLATES = {
    "aborted-read": ([(A("x", 1),), (R("x"),), (R("x"),)], "G1a"),
    "dirty-update": ([(A("x", 1),), (A("x", 2),), (R("x"),)], "dirty-update"),
    "intermediate-read": ([(A("x", 1), A("x", 2)), (R("x"),), (R("x"),)], "G1b"),
    "lost-update": ([(A("x", 1),), (R("x"),), (A("x", 2),), (R("x"),)], "inconsistent-observation"),
    "g-single": ([(A("x", 1),), (R("x"), A("x", 2)), (R("x"),)], "G-single"),
    "g0": ([(A("x", 1), A("y", 1)), (A("x", 2), A("y", 2)), (R("x"), R("y"))], "G0"),
    "g2-write-skew": ([(R("y"), A("x", 1)), (R("x"), A("y", 1)), (R("x"), R("y"))], "G2"),
}


def test_templates_cover_every_injector():
    assert set(TEMPLATES) == set(INJECTORS)


@pytest.mark.parametrize("name", sorted(TEMPLATES))
def test_injector_template_produces_its_class(name):
    reqs, cls = TEMPLATES[name]
    res = run_simdb(reqs, SimMode(injectors={name: 1.0}, info_rate=0, abort_rate=0), seed=0, process_count=1)
    assert res.injected.get(name)
    r = check(res.obs, "serializable")
    assert cls in r.counts


def test_save_writes_sidecar(tmp_path):
    res = generate(GenConfig(txn_count=50, seed=3))
    side = save(res, tmp_path / "h.jsonl")
    assert side.name == "h.jsonl.truth.json"
    assert read_history(tmp_path / "h.jsonl") == res.obs
    assert save(generate(GenConfig(txn_count=5), SimMode(injectors={"g0": 1.0})), tmp_path / "x.jsonl") is None


def test_empty_workload():
    assert run_simdb([]).obs.txns == []
    assert check(serial()).valid
